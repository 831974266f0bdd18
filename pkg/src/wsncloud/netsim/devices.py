"""End Device state machine: cyclic sleep, polled sampling, battery drain,
and the low-voltage latch."""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, replace

from .. import frame_codec as fc
from .. import units
from ..power import BatteryState, Mode, PowerProfile, drain, rail_voltage
from .scenario import Environment, NodeConfig, PowerConfig

TEMPERATURE_CHANNEL = 0
VOLTAGE_CHANNEL = 1
ANALOG_MASK = 1 << TEMPERATURE_CHANNEL | 1 << VOLTAGE_CHANNEL
DIVIDER_R1 = 200.0
DIVIDER_R2 = 100.0


@dataclass(frozen=True)
class Transmission:
    at: float  # when the last bit leaves the radio
    data: bytes


class EndDevice:
    def __init__(self, cfg: NodeConfig, power: PowerConfig, environment: Environment,
                 rng: random.Random, escaped: bool = True, addr16: int = fc.ADDR16_UNKNOWN):
        self.cfg = cfg
        self.addr64 = cfg.addr64
        self.name = cfg.name
        self.power = power
        self.profile: PowerProfile = replace(power.profile, capacity=cfg.battery_mAh)
        charge = cfg.battery_mAh if cfg.initial_charge_mAh is None else cfg.initial_charge_mAh
        self.battery = BatteryState.with_charge(charge)
        self.environment = cfg.environment or environment
        self.rng = rng
        self.escaped = escaped
        self.addr16 = addr16
        self.awake = False
        self.low_voltage_latched = False
        self.supply_override: float | None = None
        self.pending_polls: deque[fc.PollRequest] = deque()
        self.samples_sent = 0
        self._accounted_to = 0.0

    # power bookkeeping

    @property
    def sleep_period(self) -> float:
        return self.cfg.sleep_period

    @property
    def awake_window(self) -> float:
        return self.cfg.awake_window

    @property
    def silent(self) -> bool:
        """True once the node will never transmit again."""
        return self.low_voltage_latched or self.battery.depleted

    def _spend(self, mode: Mode, dt: float) -> None:
        if dt > 0:
            self.battery = drain(self.battery, self.profile, mode, dt)

    def advance(self, now: float) -> None:
        """Charge the current mode up to ``now``."""
        if now > self._accounted_to:
            self._spend(Mode.LISTEN if self.awake else Mode.SLEEP, now - self._accounted_to)
            self._accounted_to = now

    def _spend_burst(self, mode: Mode, dt: float) -> float:
        self._spend(mode, dt)
        self._accounted_to += dt
        return self._accounted_to

    def supply_volts(self) -> float:
        if self.supply_override is not None:
            return self.supply_override
        return rail_voltage(self.battery, self.profile, self.power.v_full, self.power.v_empty)

    def airtime(self, nbytes: int) -> float:
        return (nbytes + self.power.frame_overhead_bytes) * 8 / self.power.bitrate

    # schedule

    def next_wake(self, after: float) -> float:
        """First wake instant strictly after ``after`` (or at it, for ``after`` == offset)."""
        offset, period = self.cfg.wake_offset, self.cfg.sleep_period
        if after < offset:
            return offset
        k = int((after - offset) // period) + 1
        return offset + k * period

    # sampling

    def sample(self, now: float) -> fc.IoSample:
        celsius = min(max(self.environment.temperature(now), 0.0), units.CELSIUS_FULL_SCALE)
        temp_raw = units.celsius_to_adc(celsius)
        supply = min(max(self.supply_volts(), 0.0), units.SUPPLY_FULL_SCALE_V)
        volt_raw = units.sensor_volts_to_adc(units.divider_output(supply, DIVIDER_R1, DIVIDER_R2))
        jitter = self.environment.jitter_lsb
        if jitter:
            temp_raw = min(units.ADC_MAX, max(0, temp_raw + self.rng.randint(-jitter, jitter)))
        return fc.IoSample(self.addr64, self.addr16, ANALOG_MASK, (temp_raw, volt_raw))

    def _transmit_sample(self, now: float) -> Transmission | None:
        self.advance(now)
        if self.silent:
            return None
        supply = self.supply_volts()
        frame = fc.ApiFrame(fc.serialize_io_sample(self.sample(now)))
        data = fc.encode_frame(frame, self.escaped)
        done = self._spend_burst(Mode.TRANSMIT, self.airtime(len(data)))
        if self.battery.depleted:
            return None
        self.samples_sent += 1
        if supply < self.power.latch_volts:
            # report the low reading once, then stay asleep until reset
            self.low_voltage_latched = True
        return Transmission(done, data)

    # events

    def wake(self, now: float, autonomous: bool = False) -> Transmission | None:
        self.advance(now)
        if self.silent:
            return None
        self._spend_burst(Mode.WAKE_TRANSITION, self.power.t_onoff_s)
        self.awake = True
        if self.battery.depleted:
            return None
        if self.pending_polls or autonomous:
            self.pending_polls.clear()
            return self._transmit_sample(self._accounted_to)
        return None

    def go_to_sleep(self, now: float) -> None:
        self.advance(now)
        if self.awake:
            self._spend_burst(Mode.WAKE_TRANSITION, self.power.t_onoff_s)
        self.awake = False

    def receive_poll(self, data: bytes, now: float) -> Transmission | None:
        """A poll reaches the node's parent. Answered now if awake, else held for the next wake."""
        frame = fc.decode_frame(data, self.escaped)
        req = fc.parse_poll_request(frame.frame_data)
        if req.dest_addr64 != self.addr64:
            return None
        if self.silent:
            return None
        if self.awake:
            return self._transmit_sample(now)
        self.pending_polls.append(req)
        return None

    def reset_latch(self) -> None:
        self.low_voltage_latched = False

    def step(self, event: str, now: float, data: bytes | None = None) -> Transmission | None:
        """Dispatch one event addressed to this node."""
        if event == "node_wake":
            return self.wake(now)
        if event == "node_sleep":
            self.go_to_sleep(now)
            return None
        if event == "poll_delivery":
            return self.receive_poll(data, now)
        raise ValueError(f"event {event!r} does not target an End Device")
