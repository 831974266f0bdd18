"""End Device battery accounting and the duty-cycle lifetime model.

The node spends each update period in four modes: activation/deactivation,
listening, transmitting and sleeping. Lifetime is battery capacity divided
by the time-weighted average of the mode currents.
"""

from __future__ import annotations

import csv
import enum
import itertools
from dataclasses import dataclass, replace
from typing import Iterable, NamedTuple, TextIO

MAX_MAC_PAYLOAD = 102
MIN_PAYLOAD = 2


class ModelError(ValueError):
    pass


class Mode(str, enum.Enum):
    SLEEP = "sleep"
    WAKE_TRANSITION = "wake_transition"
    LISTEN = "listen"
    TRANSMIT = "transmit"
    DEPLETED = "depleted"


@dataclass(frozen=True)
class PowerProfile:
    """Mode currents in mA, capacity in mAh. Defaults are the measured End Device."""

    i_onoff: float = 8.1
    i_listen: float = 40.0
    i_trans: float = 38.0
    i_sleep: float = 0.6
    capacity: float = 2000.0
    nominal_voltage: float = 9.0

    def __post_init__(self):
        for name in ("i_onoff", "i_listen", "i_trans", "i_sleep", "capacity"):
            if not getattr(self, name) > 0:
                raise ModelError(f"{name} must be positive")
        if not (self.i_sleep < self.i_listen and self.i_sleep < self.i_trans):
            raise ModelError("sleep current must be below listen and transmit currents")

    def current(self, mode: Mode) -> float:
        try:
            mode = Mode(mode)
        except ValueError:
            raise ModelError(f"unknown mode {mode!r}") from None
        return {
            Mode.SLEEP: self.i_sleep,
            Mode.WAKE_TRANSITION: self.i_onoff,
            Mode.LISTEN: self.i_listen,
            Mode.TRANSMIT: self.i_trans,
            Mode.DEPLETED: 0.0,
        }[mode]

    @property
    def sleep_bound_hours(self) -> float:
        return self.capacity / self.i_sleep


@dataclass(frozen=True)
class DutyCycleSpec:
    """Timing of one update period. Times in seconds, bitrate in bit/s."""

    update_period: float
    payload_bytes: int = MIN_PAYLOAD
    t_onoff: float = 0.010
    t_listen: float = 0.050
    frame_overhead_bytes: int = 26
    bitrate: float = 250_000.0

    def __post_init__(self):
        if not self.update_period > 0:
            raise ModelError("update_period must be positive")
        if not MIN_PAYLOAD <= self.payload_bytes <= MAX_MAC_PAYLOAD:
            raise ModelError(f"payload_bytes must be in {MIN_PAYLOAD}..{MAX_MAC_PAYLOAD}")
        if self.t_onoff < 0 or self.t_listen < 0 or self.frame_overhead_bytes < 0:
            raise ModelError("timings and overhead must be non-negative")
        if not self.bitrate > 0:
            raise ModelError("bitrate must be positive")


def transmit_time(spec: DutyCycleSpec) -> float:
    return (spec.payload_bytes + spec.frame_overhead_bytes) * 8 / spec.bitrate


def average_current(profile: PowerProfile, spec: DutyCycleSpec) -> float:
    t_trans = transmit_time(spec)
    active = spec.t_onoff + spec.t_listen + t_trans
    period = spec.update_period
    if active >= period:
        raise ModelError(f"active time {active:.6g} s does not fit in update period {period} s")
    charge = (
        profile.i_onoff * spec.t_onoff
        + profile.i_listen * spec.t_listen
        + profile.i_trans * t_trans
        + profile.i_sleep * (period - active)
    )
    return charge / period


def lifetime_hours(profile: PowerProfile, spec: DutyCycleSpec) -> float:
    return profile.capacity / average_current(profile, spec)


class SweepRow(NamedTuple):
    payload_bytes: int
    update_period_s: float
    avg_current_ma: float
    lifetime_hours: float


SWEEP_COLUMNS = SweepRow._fields


def lifetime_sweep(
    profile: PowerProfile,
    payloads: Iterable[int],
    periods: Iterable[float],
    template: DutyCycleSpec | None = None,
) -> list[SweepRow]:
    """Evaluate the lifetime model on the cartesian product payloads x periods.

    ``template`` supplies the timing parameters; its period and payload are
    overridden for each cell.
    """
    payloads, periods = list(payloads), list(periods)
    if not payloads or not periods:
        raise ModelError("payload and period sets must be non-empty")
    base = template or DutyCycleSpec(update_period=periods[0])
    rows = []
    for payload, period in itertools.product(payloads, periods):
        spec = replace(base, payload_bytes=int(payload), update_period=float(period))
        current = average_current(profile, spec)
        rows.append(SweepRow(int(payload), float(period), current, profile.capacity / current))
    return rows


def write_sweep_csv(rows: Iterable[SweepRow], fp: TextIO, profile: PowerProfile | None = None) -> None:
    """Write sweep rows with a header; a sleep-only bound goes in a trailing comment."""
    writer = csv.writer(fp, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for row in rows:
        writer.writerow(
            [row.payload_bytes, f"{row.update_period_s:g}", f"{row.avg_current_ma:.9g}", f"{row.lifetime_hours:.6f}"]
        )
    if profile is not None:
        fp.write(
            f"# sleep-only bound: capacity/i_sleep = {profile.sleep_bound_hours:.2f} h "
            f"({profile.sleep_bound_hours / 24:.1f} days)\n"
        )


def write_sweep_gnuplot(rows: Iterable[SweepRow], fp: TextIO) -> None:
    """Whitespace-separated blocks, one per payload size, blank line between."""
    fp.write("# " + " ".join(SWEEP_COLUMNS) + "\n")
    for payload, group in itertools.groupby(rows, key=lambda r: r.payload_bytes):
        for row in group:
            fp.write(f"{payload} {row.update_period_s:g} {row.avg_current_ma:.9g} {row.lifetime_hours:.6f}\n")
        fp.write("\n\n")


def read_sweep_csv(fp: TextIO) -> list[SweepRow]:
    lines = [line for line in fp if line.strip() and not line.startswith("#")]
    return [
        SweepRow(int(r["payload_bytes"]), float(r["update_period_s"]), float(r["avg_current_ma"]),
                 float(r["lifetime_hours"]))
        for r in csv.DictReader(lines)
    ]


@dataclass(frozen=True)
class BatteryState:
    charge_remaining: float
    mode: Mode = Mode.SLEEP

    def __post_init__(self):
        if self.charge_remaining < 0:
            raise ModelError("charge_remaining must be non-negative")
        if (self.mode == Mode.DEPLETED) != (self.charge_remaining == 0):
            raise ModelError("mode must be depleted exactly when charge is zero")

    @classmethod
    def full(cls, profile: PowerProfile) -> "BatteryState":
        return cls(profile.capacity, Mode.SLEEP)

    @classmethod
    def with_charge(cls, charge: float, mode: Mode = Mode.SLEEP) -> "BatteryState":
        return cls(charge, Mode.DEPLETED if charge == 0 else mode)

    @property
    def depleted(self) -> bool:
        return self.mode == Mode.DEPLETED


def drain(state: BatteryState, profile: PowerProfile, mode: Mode, dt: float) -> BatteryState:
    """Integrate ``profile.current(mode)`` over ``dt`` seconds."""
    if dt < 0:
        raise ModelError("dt must be non-negative")
    current = profile.current(mode)
    if state.charge_remaining > profile.capacity:
        raise ModelError("charge exceeds capacity")
    if state.depleted or current == 0 or dt == 0:
        return state
    charge = state.charge_remaining - current * dt / 3600.0
    if charge <= 0:
        return BatteryState(0.0, Mode.DEPLETED)
    return BatteryState(charge, Mode(mode))


def rail_voltage(state: BatteryState, profile: PowerProfile, v_full: float = 3.3, v_empty: float = 2.0) -> float:
    """Supply-rail voltage, linear in state of charge between the two endpoints."""
    soc = state.charge_remaining / profile.capacity
    return v_empty + (v_full - v_empty) * soc
