"""Command-line entry point: ``wsncloud <command> ...``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import yaml

from . import frame_codec as fc
from . import power, units
from .cloud.client import CloudUnavailable
from .netsim.scenario import ConfigError

log = logging.getLogger("wsncloud")

DEFAULT_SCENARIO = "builtin:three-node"
DEFAULT_PAYLOADS = [2, 12, 22, 32, 42, 52, 62, 72, 82, 92, 102]
DEFAULT_PERIODS = [round(60 * 1440 ** (i / 9)) for i in range(10)]  # 60 s .. 86400 s, log-spaced


class UsageError(Exception):
    pass


def _api_key() -> str:
    from .netsim.simulation import DEFAULT_KEY

    return os.environ.get("SENSE_KEY") or DEFAULT_KEY


def _number_list(text: str, cast):
    try:
        values = [cast(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("list must not be empty")
    return values


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _hex_bytes(text: str) -> bytes:
    cleaned = "".join(text.split()).replace(":", "")
    if cleaned.lower().startswith("0x"):
        cleaned = cleaned[2:]
    try:
        return bytes.fromhex(cleaned)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not valid hex") from None


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w", encoding="utf-8", newline=""), True


# commands


def cmd_simulate(args) -> int:
    from .netsim.scenario import load_scenario
    from .netsim.simulation import Simulation

    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario.seed = args.seed
    cloud = None
    if args.cloud:
        from .cloud.client import HttpCloud

        cloud = HttpCloud(args.cloud, _api_key())
    sim = Simulation(scenario, cloud=cloud, key=_api_key())
    report = sim.run(args.until, progress=lambda t: log.info("t=%.0f s", t))
    Path(args.report).write_text(report.to_json(), encoding="utf-8")
    if args.trace:
        with open(args.trace, "w", encoding="utf-8", newline="") as fp:
            sim.write_trace(fp)
    if args.figure:
        from .plotting import plot_feed_series

        plot_feed_series(report.readings, args.figure)
    print(
        f"{scenario.name}: {len(report.readings)} readings, {report.posts_succeeded}/{report.posts_attempted} posts, "
        f"{report.entries_stored} entries stored, {len(report.notifications)} notifications -> {args.report}"
    )
    return 0


def cmd_serve(args) -> int:
    from .cloud.server import make_server
    from .cloud.store import FeedService

    keys = {k: "user" for k in (args.key or [_api_key()])}
    service = FeedService(keys=keys, feeds=args.feed or (), latency=args.latency, seed=args.seed)
    server = make_server(service, args.host, args.port)
    host, port = server.server_address[:2]
    print(f"serving feed API on http://{host}:{port} (Ctrl-C to stop)", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
        if args.snapshot:
            service.save_snapshot(args.snapshot)
            print(f"snapshot written to {args.snapshot}")
    return 0


def _describe_frame(frame: fc.ApiFrame) -> list[str]:
    lines = [
        f"length={frame.length}",
        f"frame_type={frame.frame_type:02X}",
        f"frame_data={frame.frame_data.hex().upper()}",
        f"checksum={frame.checksum:02X} ok",
    ]
    try:
        if frame.frame_type == fc.IO_SAMPLE_FRAME_TYPE:
            sample = fc.parse_io_sample(frame.frame_data)
            lines.append(f"io_sample source={sample.source_addr64:016X} addr16={sample.source_addr16:04X}")
            for ch, raw in sample.analog().items():
                lines.append(f"  AD{ch}={raw}")
        elif frame.frame_type == fc.POLL_FRAME_TYPE:
            req = fc.parse_poll_request(frame.frame_data)
            lines.append(f"poll dest={req.dest_addr64:016X} frame_id={req.frame_id} command={req.command.decode()}")
    except fc.FrameError as exc:
        # the frame itself is sound; only its body did not match the expected layout
        lines.append(f"payload not parsed: {exc}")
    return lines


def cmd_frame(args) -> int:
    escaped = not args.unescaped
    if args.action == "encode":
        frame = fc.ApiFrame(args.hex)
        print(fc.encode_frame(frame, escaped).hex().upper())
    else:
        frame = fc.decode_frame(args.hex, escaped)
        print("\n".join(_describe_frame(frame)))
    return 0


CONVERSIONS = {
    "adc-mv": (int, units.adc_to_millivolts, "mV"),
    "mv-celsius": (float, units.millivolts_to_celsius, "degC"),
    "adc-celsius": (int, units.adc_to_celsius, "degC"),
    "adc-supply": (int, units.adc_to_supply_volts, "V"),
    "supply-adc": (float, units.supply_volts_to_adc, "counts"),
    "celsius-adc": (float, units.celsius_to_adc, "counts"),
}


def cmd_convert(args) -> int:
    if args.kind == "divider":
        value = units.divider_output(float(args.value), args.r1, args.r2)
        unit = "V"
    else:
        cast, fn, unit = CONVERSIONS[args.kind]
        try:
            arg = cast(args.value)
        except ValueError:
            raise UsageError(f"{args.value!r} is not a valid {cast.__name__}") from None
        value = fn(arg)
    print(f"{value:.10g} {unit}")
    return 0


def _load_profile(path) -> tuple[power.PowerProfile, dict]:
    if path is None:
        return power.PowerProfile(), {}
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    except OSError as exc:
        raise ConfigError("", f"cannot read profile {path}: {exc.strerror}") from None
    if not isinstance(data, dict):
        raise ConfigError("", "profile must be a mapping")
    profile_keys = {"i_onoff", "i_listen", "i_trans", "i_sleep", "capacity", "nominal_voltage"}
    timing_keys = {"t_onoff", "t_listen", "frame_overhead_bytes", "bitrate"}
    unknown = set(data) - profile_keys - timing_keys
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown field")
    try:
        profile = power.PowerProfile(**{k: float(v) for k, v in data.items() if k in profile_keys})
    except (TypeError, ValueError) as exc:
        raise ConfigError("profile", str(exc)) from None
    return profile, {k: v for k, v in data.items() if k in timing_keys}


def cmd_lifetime(args) -> int:
    profile, timing = _load_profile(args.profile)
    for name in ("t_onoff", "t_listen", "frame_overhead_bytes", "bitrate"):
        if getattr(args, name) is not None:
            timing[name] = getattr(args, name)
    template = power.DutyCycleSpec(update_period=args.periods[0], **timing)
    rows = power.lifetime_sweep(profile, args.payloads, args.periods, template)
    fp, close = _open_out(args.out)
    try:
        if args.format == "gnuplot":
            power.write_sweep_gnuplot(rows, fp)
        else:
            power.write_sweep_csv(rows, fp, profile)
    finally:
        if close:
            fp.close()
    if args.figure:
        from .plotting import plot_lifetime_sweep

        plot_lifetime_sweep(rows, args.figure, profile.sleep_bound_hours)
    return 0


def cmd_alert_drill(args) -> int:
    from .cloud.drill import measure_alert_latency

    try:
        result = measure_alert_latency(args.trials, args.latency, args.seed, key=_api_key())
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    fp, close = _open_out(args.out)
    try:
        result.write_csv(fp)
    finally:
        if close:
            fp.close()
    if close:
        for t in result.trials:
            print(f"trial {t.trial}: {t.latency_s:.3f} s")
        print(f"mean: {result.mean:.3f} s")
    if args.figure:
        from .plotting import plot_alert_latency

        plot_alert_latency(result, args.figure)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wsncloud", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a scenario against an in-process (or remote) feed service")
    p.add_argument("--scenario", default=DEFAULT_SCENARIO, help="YAML file or builtin:<name>")
    p.add_argument("--until", type=float, default=7200.0, help="virtual seconds to simulate")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--report", default="report.json", help="where to write the JSON report")
    p.add_argument("--trace", help="optional CSV event trace (time,kind,node)")
    p.add_argument("--cloud", metavar="URL", help="post to a running `wsncloud serve` instead")
    p.add_argument("--figure", help="render readings to this image file")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("serve", help="run the mock feed service over HTTP")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--key", action="append", help="accepted API key (repeatable; default $SENSE_KEY)")
    p.add_argument("--feed", action="append", help="feed to pre-create (repeatable)")
    p.add_argument("--latency", default="uniform:8:13", help="notification delay distribution")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--snapshot", help="write the store as JSON on shutdown")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("frame", help="encode or decode an API frame (hex)")
    p.add_argument("action", choices=("encode", "decode"))
    p.add_argument("hex", type=_hex_bytes, help="frame_data to encode, or a wire frame to decode")
    p.add_argument("--unescaped", action="store_true", help="plain API mode (default is escaped)")
    p.add_argument("--escaped", dest="unescaped", action="store_false", help="escaped API mode (the default)")
    p.set_defaults(func=cmd_frame)

    p = sub.add_parser("convert", help="engineering-unit conversions")
    p.add_argument("kind", choices=sorted([*CONVERSIONS, "divider"]))
    p.add_argument("value", help="input value (vin in volts for divider)")
    p.add_argument("--r1", type=float, default=200.0, help="high-side resistor (ohm)")
    p.add_argument("--r2", type=float, default=100.0, help="low-side resistor (ohm)")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("lifetime", help="sweep the battery lifetime model")
    p.add_argument("--profile", help="YAML/JSON power profile (currents, capacity, timings)")
    p.add_argument("--payloads", type=lambda s: _number_list(s, int), default=DEFAULT_PAYLOADS)
    p.add_argument("--periods", type=lambda s: _number_list(s, float), default=DEFAULT_PERIODS)
    p.add_argument("--t-onoff", type=float, dest="t_onoff")
    p.add_argument("--t-listen", type=float, dest="t_listen")
    p.add_argument("--overhead", type=int, dest="frame_overhead_bytes")
    p.add_argument("--bitrate", type=float)
    p.add_argument("--format", choices=("csv", "gnuplot"), default="csv")
    p.add_argument("--out", help="output file (default stdout)")
    p.add_argument("--figure", help="render lifetime curves to this image file")
    p.set_defaults(func=cmd_lifetime)

    p = sub.add_parser("alert-drill", help="time low-voltage notifications over repeated trials")
    p.add_argument("--trials", type=_positive_int, default=10)
    p.add_argument("--latency", default="uniform:8:13", help="constant:S or uniform:LO:HI")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV output (default stdout)")
    p.add_argument("--figure", help="render a per-attempt bar chart to this image file")
    p.set_defaults(func=cmd_alert_drill)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except UsageError as exc:
        parser.error(str(exc))
    except CloudUnavailable as exc:
        print(f"cloud unavailable: {exc}", file=sys.stderr)
        return 1
    except fc.FrameError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except (units.DomainError, power.ModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
