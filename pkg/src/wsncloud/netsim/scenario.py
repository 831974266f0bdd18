"""Scenario configuration: parsing, defaults and validation.

A scenario is a YAML (or JSON) tree::

    seed: 7
    nodes:
      - {addr64: 0013A200409C2679, sleep_period: 20, battery_mAh: 2000}
    coordinator: {update_period_s: 1800, poll_timeout_ms: 25000, failure_reset_threshold: 3}
    link: {latency_ms: 5, drop_prob: 0.0}
    environment: {model: constant, celsius: 25}

Errors carry the dotted path of the offending field.
"""

from __future__ import annotations

import copy
import csv
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from ..cloud.rules import LatencyModel
from ..power import PowerProfile

BUILTIN_PREFIX = "builtin:"


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


@dataclass
class SupplyChange:
    at: float
    volts: float | None  # None hands the rail back to the battery model


@dataclass
class Environment:
    model: str = "constant"
    celsius: float = 25.0
    mean: float = 25.0
    amplitude: float = 5.0
    period_s: float = 86400.0
    phase_s: float = 0.0
    trace: list[tuple[float, float]] = field(default_factory=list)
    jitter_lsb: int = 0

    def temperature(self, t: float) -> float:
        if self.model == "constant":
            return self.celsius
        if self.model == "sinusoid":
            return self.mean + self.amplitude * math.sin(2 * math.pi * (t + self.phase_s) / self.period_s)
        # piecewise-linear over the trace, held flat beyond its ends
        pts = self.trace
        if t <= pts[0][0]:
            return pts[0][1]
        for (t0, c0), (t1, c1) in zip(pts, pts[1:]):
            if t <= t1:
                return c0 + (c1 - c0) * (t - t0) / (t1 - t0) if t1 > t0 else c1
        return pts[-1][1]


@dataclass
class NodeConfig:
    addr64: int
    name: str
    sleep_period: float = 20.0
    awake_window: float = 1.0
    wake_offset: float = 0.0
    battery_mAh: float = 2000.0
    initial_charge_mAh: float | None = None
    hops: int = 1
    supply_schedule: list[SupplyChange] = field(default_factory=list)
    environment: Environment | None = None


@dataclass
class CoordinatorConfig:
    update_period_s: float = 1800.0
    poll_timeout_ms: float | None = None
    failure_reset_threshold: int = 3
    reconnect_delay_s: float = 5.0
    autonomous_sampling: bool = False
    escaped: bool = True


@dataclass
class LinkConfig:
    latency_ms: float = 5.0
    drop_prob: float = 0.0
    corrupt_prob: float = 0.0
    mac_retries: int = 3


@dataclass
class Outage:
    from_s: float
    to_s: float


@dataclass
class RuleConfig:
    feed: str = "node-voltage"
    comparison: str = "<="
    threshold: float = 2.1
    target: str = "email_sim"


@dataclass
class CloudConfig:
    latency: str = "uniform:8:13"
    post_latency_ms: float = 0.0
    outages: list[Outage] = field(default_factory=list)
    rules: list[RuleConfig] = field(default_factory=lambda: [RuleConfig()])


@dataclass
class PowerConfig:
    profile: PowerProfile = field(default_factory=PowerProfile)
    t_onoff_s: float = 0.010
    frame_overhead_bytes: int = 26
    bitrate: float = 250_000.0
    v_full: float = 3.3
    v_empty: float = 2.0
    latch_volts: float = 2.1


@dataclass
class Scenario:
    nodes: list[NodeConfig]
    coordinator: CoordinatorConfig = field(default_factory=CoordinatorConfig)
    link: LinkConfig = field(default_factory=LinkConfig)
    environment: Environment = field(default_factory=Environment)
    cloud: CloudConfig = field(default_factory=CloudConfig)
    power: PowerConfig = field(default_factory=PowerConfig)
    seed: int = 0
    name: str = "scenario"

    def poll_timeout(self, node: NodeConfig) -> float:
        if self.coordinator.poll_timeout_ms is not None:
            return self.coordinator.poll_timeout_ms / 1000
        # long enough to ride out one full sleep cycle plus the round trip
        return node.sleep_period + node.awake_window + 4 * self.link.latency_ms / 1000 * node.hops + 1.0


class _Fields:
    """Pops typed fields out of one mapping, remembering the path for errors."""

    def __init__(self, data: Any, path: str):
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(path, "expected a mapping")
        self.data = dict(data)
        self.path = path

    def _where(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def number(self, key: str, default, *, positive=False, minimum=None, maximum=None, integer=False,
               allow_none=False):
        value = self.data.pop(key, default)
        if value is None and allow_none:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(self._where(key), f"expected a number, got {value!r}")
        if not math.isfinite(value):
            raise ConfigError(self._where(key), "must be finite")
        if integer and int(value) != value:
            raise ConfigError(self._where(key), "must be an integer")
        if positive and not value > 0:
            raise ConfigError(self._where(key), "must be > 0")
        if minimum is not None and value < minimum:
            raise ConfigError(self._where(key), f"must be >= {minimum}")
        if maximum is not None and value > maximum:
            raise ConfigError(self._where(key), f"must be <= {maximum}")
        return int(value) if integer else float(value)

    def boolean(self, key: str, default: bool) -> bool:
        value = self.data.pop(key, default)
        if not isinstance(value, bool):
            raise ConfigError(self._where(key), "expected true or false")
        return value

    def string(self, key: str, default: str) -> str:
        value = self.data.pop(key, default)
        if not isinstance(value, str):
            raise ConfigError(self._where(key), "expected a string")
        return value

    def sequence(self, key: str) -> list:
        value = self.data.pop(key, None)
        if value is None:
            return None
        if not isinstance(value, list):
            raise ConfigError(self._where(key), "expected a list")
        return value

    def sub(self, key: str) -> "_Fields":
        return _Fields(self.data.pop(key, None), self._where(key))

    def pop(self, key: str, default=None):
        return self.data.pop(key, default)

    def done(self) -> None:
        if self.data:
            extra = sorted(self.data)[0]
            raise ConfigError(self._where(extra), "unknown field")


def _addr64(value, path: str) -> int:
    if isinstance(value, bool):
        raise ConfigError(path, "expected a 64-bit address")
    if isinstance(value, str):
        try:
            value = int(value, 16)
        except ValueError:
            raise ConfigError(path, f"{value!r} is not a hex address") from None
    if not isinstance(value, int) or not 0 <= value < 2**64:
        raise ConfigError(path, "expected a 64-bit address")
    return value


def _environment(f: _Fields, base_dir: Path | None) -> Environment:
    env = Environment()
    env.model = f.string("model", "constant")
    if env.model == "constant":
        env.celsius = f.number("celsius", env.celsius, minimum=0, maximum=120)
    elif env.model == "sinusoid":
        env.mean = f.number("mean", env.mean)
        env.amplitude = f.number("amplitude", env.amplitude, minimum=0)
        env.period_s = f.number("period_s", env.period_s, positive=True)
        env.phase_s = f.number("phase_s", env.phase_s)
    elif env.model == "trace":
        where = f._where("path")
        raw = f.string("path", "")
        if not raw:
            raise ConfigError(where, "trace model needs a CSV path")
        path = Path(raw)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        try:
            with open(path, newline="", encoding="utf-8") as fp:
                rows = [r for r in csv.reader(fp) if r and not r[0].lstrip().startswith("#")]
        except OSError as exc:
            raise ConfigError(where, f"cannot read trace: {exc.strerror}") from None
        if rows and not _is_number(rows[0][0]):
            rows = rows[1:]
        try:
            env.trace = sorted((float(t), float(c)) for t, c, *_ in rows)
        except ValueError:
            raise ConfigError(where, "trace rows must be time,celsius") from None
        if not env.trace:
            raise ConfigError(where, "trace is empty")
    else:
        raise ConfigError(f._where("model"), f"unknown model {env.model!r}; use constant, sinusoid or trace")
    env.jitter_lsb = f.number("jitter_lsb", 0, minimum=0, integer=True)
    f.done()
    return env


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def parse_scenario(data: Any, base_dir: Path | None = None) -> Scenario:
    top = _Fields(data, "")
    seed = top.number("seed", 0, integer=True)
    name = top.string("name", "scenario")

    c = top.sub("coordinator")
    coordinator = CoordinatorConfig(
        update_period_s=c.number("update_period_s", 1800.0, positive=True),
        poll_timeout_ms=c.number("poll_timeout_ms", None, positive=True, allow_none=True),
        failure_reset_threshold=c.number("failure_reset_threshold", 3, minimum=1, integer=True),
        reconnect_delay_s=c.number("reconnect_delay_s", 5.0, positive=True),
        autonomous_sampling=c.boolean("autonomous_sampling", False),
        escaped=c.boolean("escaped", True),
    )
    c.done()

    lk = top.sub("link")
    link = LinkConfig(
        latency_ms=lk.number("latency_ms", 5.0, minimum=0),
        drop_prob=lk.number("drop_prob", 0.0, minimum=0, maximum=1),
        corrupt_prob=lk.number("corrupt_prob", 0.0, minimum=0, maximum=1),
        mac_retries=lk.number("mac_retries", 3, minimum=0, integer=True),
    )
    lk.done()

    environment = _environment(top.sub("environment"), base_dir)

    p = top.sub("power")
    prof = p.sub("profile")
    defaults = PowerProfile()
    try:
        profile = PowerProfile(
            **{k: prof.number(k, getattr(defaults, k), positive=True)
               for k in ("i_onoff", "i_listen", "i_trans", "i_sleep", "capacity", "nominal_voltage")}
        )
    except ValueError as exc:
        raise ConfigError(prof.path, str(exc)) from None
    prof.done()
    power = PowerConfig(
        profile=profile,
        t_onoff_s=p.number("t_onoff_s", 0.010, minimum=0),
        frame_overhead_bytes=p.number("frame_overhead_bytes", 26, minimum=0, integer=True),
        bitrate=p.number("bitrate", 250_000.0, positive=True),
        v_full=p.number("v_full", 3.3, positive=True, maximum=3.6),
        v_empty=p.number("v_empty", 2.0, minimum=0),
        latch_volts=p.number("latch_volts", 2.1, minimum=0),
    )
    if power.v_empty >= power.v_full:
        raise ConfigError("power.v_empty", "must be below v_full")
    p.done()

    cl = top.sub("cloud")
    cloud = CloudConfig(
        latency=cl.string("latency", "uniform:8:13"),
        post_latency_ms=cl.number("post_latency_ms", 0.0, minimum=0),
    )
    try:
        LatencyModel.parse(cloud.latency)
    except ValueError as exc:
        raise ConfigError("cloud.latency", str(exc)) from None
    outages = cl.sequence("outages")
    for i, o in enumerate(outages or []):
        of = _Fields(o, f"cloud.outages[{i}]")
        outage = Outage(of.number("from_s", None, minimum=0), of.number("to_s", None, minimum=0))
        if outage.to_s < outage.from_s:
            raise ConfigError(f"cloud.outages[{i}].to_s", "must not precede from_s")
        of.done()
        cloud.outages.append(outage)
    rules = cl.sequence("rules")
    if rules is not None:
        cloud.rules = []
        for i, r in enumerate(rules):
            rf = _Fields(r, f"cloud.rules[{i}]")
            rule = RuleConfig(
                feed=rf.string("feed", "node-voltage"),
                comparison=rf.string("comparison", "<="),
                threshold=rf.number("threshold", 2.1),
                target=rf.string("target", "email_sim"),
            )
            if rule.feed not in FEEDS:
                raise ConfigError(f"cloud.rules[{i}].feed", f"unknown feed {rule.feed!r}")
            if rule.comparison not in ("<=", ">=", "=="):
                raise ConfigError(f"cloud.rules[{i}].comparison", "use <=, >= or ==")
            if rule.target not in ("email_sim", "tweet_sim", "log"):
                raise ConfigError(f"cloud.rules[{i}].target", "use email_sim, tweet_sim or log")
            rf.done()
            cloud.rules.append(rule)
    cl.done()

    raw_nodes = top.sequence("nodes")
    if not raw_nodes:
        raise ConfigError("nodes", "at least one node is required")
    nodes = []
    seen_addr, seen_name = set(), set()
    t_trans_max = (2 + 30 + power.frame_overhead_bytes) * 8 / power.bitrate
    for i, raw in enumerate(raw_nodes):
        nf = _Fields(raw, f"nodes[{i}]")
        if "addr64" not in nf.data:
            raise ConfigError(f"nodes[{i}].addr64", "required")
        addr = _addr64(nf.pop("addr64"), f"nodes[{i}].addr64")
        node = NodeConfig(
            addr64=addr,
            name=nf.string("name", f"node{i + 1}"),
            sleep_period=nf.number("sleep_period", 20.0, positive=True),
            awake_window=nf.number("awake_window", 1.0, positive=True),
            wake_offset=nf.number("wake_offset", 0.0, minimum=0),
            battery_mAh=nf.number("battery_mAh", profile.capacity, positive=True),
            initial_charge_mAh=nf.number("initial_charge_mAh", None, minimum=0, allow_none=True),
            hops=nf.number("hops", 1, minimum=1, integer=True),
        )
        if node.initial_charge_mAh is not None and node.initial_charge_mAh > node.battery_mAh:
            raise ConfigError(f"nodes[{i}].initial_charge_mAh", "exceeds battery_mAh")
        if node.awake_window < 2 * power.t_onoff_s + t_trans_max:
            raise ConfigError(f"nodes[{i}].awake_window", "too short to wake, transmit and power down")
        if node.awake_window >= node.sleep_period:
            raise ConfigError(f"nodes[{i}].awake_window", "must be shorter than sleep_period")
        if addr in seen_addr:
            raise ConfigError(f"nodes[{i}].addr64", "duplicate address")
        if node.name in seen_name or not node.name or "/" in node.name:
            raise ConfigError(f"nodes[{i}].name", "names must be unique, non-empty and contain no '/'")
        seen_addr.add(addr)
        seen_name.add(node.name)
        for j, s in enumerate(nf.sequence("supply_schedule") or []):
            sf = _Fields(s, f"nodes[{i}].supply_schedule[{j}]")
            node.supply_schedule.append(
                SupplyChange(sf.number("at", None, minimum=0),
                             sf.number("volts", None, minimum=0, maximum=3.6, allow_none=True))
            )
            sf.done()
        if "environment" in nf.data:
            node.environment = _environment(nf.sub("environment"), base_dir)
        nf.done()
        nodes.append(node)
    top.done()
    return Scenario(nodes, coordinator, link, environment, cloud, power, seed, name)


FEEDS = ("indoor-temperature", "node-voltage")


def load_scenario(path: str | Path) -> Scenario:
    """Load a scenario file; ``builtin:<name>`` selects a bundled one."""
    text_path = str(path)
    if text_path.startswith(BUILTIN_PREFIX):
        name = text_path[len(BUILTIN_PREFIX):]
        try:
            text = resources.files("wsncloud.scenarios").joinpath(f"{name}.yaml").read_text("utf-8")
        except FileNotFoundError:
            raise ConfigError("", f"no bundled scenario named {name!r}") from None
        return parse_scenario(yaml.safe_load(text))
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("", f"cannot read scenario {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("", f"{path} is not valid YAML: {exc}") from None
    return parse_scenario(data, path.parent)


def scenario_with(scenario: Scenario, **changes) -> Scenario:
    out = copy.deepcopy(scenario)
    for k, v in changes.items():
        setattr(out, k, v)
    return out
