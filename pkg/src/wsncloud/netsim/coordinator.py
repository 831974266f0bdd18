"""Coordinator (base station) state: roster, reading buffer, upload timer,
connection state and the reset function."""

from __future__ import annotations

from dataclasses import dataclass, field

from .. import frame_codec as fc
from .. import units
from .devices import TEMPERATURE_CHANNEL, VOLTAGE_CHANNEL

TEMPERATURE_FEED = "indoor-temperature"
VOLTAGE_FEED = "node-voltage"

CONNECTED = "connected"
DISCONNECTED = "disconnected"


def feed_id(feed: str, node_name: str) -> str:
    return f"{feed}.{node_name}"


def format_value(value: float) -> str:
    return f"{value:.2f}"


@dataclass(frozen=True)
class Reading:
    node: int
    feed: str
    value: float
    raw: int
    t: float

    def to_dict(self) -> dict:
        return {"node": f"{self.node:016X}", "feed": self.feed, "value": self.value,
                "posted": format_value(self.value), "raw": self.raw, "t": self.t}


@dataclass(frozen=True)
class PostIntent:
    feed_id: str
    value: str
    reading: Reading


@dataclass
class Coordinator:
    roster: list[int]
    names: dict[int, str]
    update_period: float = 1800.0
    escaped: bool = True
    buffer: list[Reading] = field(default_factory=list)
    connection: str = DISCONNECTED
    consecutive_failures: int = 0
    frame_ids: fc.FrameIdCounter = field(default_factory=fc.FrameIdCounter)

    def poll_frame(self, addr64: int) -> bytes:
        req = fc.PollRequest(addr64, self.frame_ids.next())
        return fc.encode_frame(fc.build_poll_request(req), self.escaped)

    def readings_from_sample(self, sample: fc.IoSample, now: float) -> list[Reading]:
        analog = sample.analog()
        out = []
        if TEMPERATURE_CHANNEL in analog:
            raw = analog[TEMPERATURE_CHANNEL]
            celsius = units.millivolts_to_celsius(units.adc_to_millivolts(raw))
            out.append(Reading(sample.source_addr64, TEMPERATURE_FEED, celsius, raw, now))
        if VOLTAGE_CHANNEL in analog:
            raw = analog[VOLTAGE_CHANNEL]
            out.append(Reading(sample.source_addr64, VOLTAGE_FEED, units.adc_to_supply_volts(raw), raw, now))
        return out

    def handle_frame(self, data: bytes, now: float) -> list[Reading]:
        """Decode one received frame and buffer its readings.

        Raises :class:`FrameError` for corrupt or foreign frames; nothing is
        buffered in that case.
        """
        frame = fc.decode_frame(data, self.escaped)
        sample = fc.parse_io_sample(frame.frame_data)
        if sample.source_addr64 not in self.names:
            raise fc.MalformedPayload(f"sample from unknown node {sample.source_addr64:016X}")
        readings = self.readings_from_sample(sample, now)
        self.buffer.extend(readings)
        return readings

    def timer_expiry(self, now: float) -> list[PostIntent]:
        intents = [
            PostIntent(feed_id(r.feed, self.names[r.node]), format_value(r.value), r)
            for r in self.buffer
        ]
        self.buffer.clear()
        return intents

    def record_post(self, ok: bool) -> None:
        self.consecutive_failures = 0 if ok else self.consecutive_failures + 1

    def reset(self) -> int:
        """Software reset: drop the buffer and the connection. Returns readings lost."""
        lost = len(self.buffer)
        self.buffer.clear()
        self.connection = DISCONNECTED
        self.consecutive_failures = 0
        return lost
