"""Discrete-event run of End Devices, the polling Coordinator and a cloud uplink."""

from __future__ import annotations

import csv
import json
import logging
import random
from dataclasses import asdict, dataclass, field
from typing import Callable, TextIO

from .. import frame_codec as fc
from ..cloud.client import CloudUnavailable, LocalCloud
from ..cloud.rules import LatencyModel
from ..cloud.store import FeedService
from .coordinator import CONNECTED, Coordinator, Reading, feed_id
from .devices import EndDevice, Transmission
from .kernel import EventQueue, SimEvent
from .scenario import Scenario

logger = logging.getLogger(__name__)

DEFAULT_KEY = "sense-demo-key"
TRACE_COLUMNS = ("time", "kind", "node")


@dataclass
class SimReport:
    scenario: str
    seed: int
    until: float
    readings: list[dict] = field(default_factory=list)
    posts_attempted: int = 0
    posts_succeeded: int = 0
    posts_failed: int = 0
    lost_readings: int = 0
    corrupt_frames: int = 0
    dropped_frames: int = 0
    poll_timeouts: int = 0
    resets: int = 0
    timer_expiries: int = 0
    entries_stored: int = 0
    notifications: list[dict] = field(default_factory=list)
    nodes: list[dict] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SimReport":
        return cls(**json.loads(text))


class _Uplink:
    """Wraps a cloud client with the scenario's scheduled outages."""

    def __init__(self, client, outages):
        self.client = client
        self.outages = outages

    def reachable(self, now: float) -> bool:
        return not any(o.from_s <= now < o.to_s for o in self.outages)

    def post(self, feed: str, value: str, now: float) -> int:
        if not self.reachable(now):
            raise CloudUnavailable("connection refused (scheduled outage)")
        return self.client.post(feed, value, now)


class Simulation:
    """One deterministic run of a scenario.

    With no ``cloud`` argument an in-process :class:`FeedService` is created
    whose clock is the simulation's virtual clock (available as ``service``).
    """

    def __init__(self, scenario: Scenario, cloud=None, key: str = DEFAULT_KEY):
        self.scenario = scenario
        self.rng = random.Random(scenario.seed)
        self.now = 0.0
        self.queue = EventQueue()
        self.service: FeedService | None = None
        if cloud is None:
            # notification delays draw from their own stream so link faults don't shift them
            latency = LatencyModel.parse(scenario.cloud.latency, random.Random(f"latency:{scenario.seed}"))
            self.service = FeedService(keys={key: "coordinator"}, latency=latency, clock=lambda: self.now)
            cloud = LocalCloud(self.service, key)
        self.cloud = cloud
        self.uplink = _Uplink(cloud, scenario.cloud.outages)

        coord_cfg = scenario.coordinator
        self.autonomous = coord_cfg.autonomous_sampling
        self.devices: dict[int, EndDevice] = {}
        for i, node in enumerate(scenario.nodes):
            self.devices[node.addr64] = EndDevice(
                node, scenario.power, scenario.environment, self.rng, coord_cfg.escaped, addr16=i + 1
            )
        self.coord = Coordinator(
            roster=[n.addr64 for n in scenario.nodes],
            names={n.addr64: n.name for n in scenario.nodes},
            update_period=coord_cfg.update_period_s,
            escaped=coord_cfg.escaped,
        )
        self.report = SimReport(scenario.name, scenario.seed, 0.0)
        self.readings: list[Reading] = []
        self.delivered_frames: list[tuple[float, int, bytes]] = []
        self.trace: list[tuple[float, str, str]] = []
        self._node_timeouts = {addr: 0 for addr in self.devices}
        self._provisioned = False
        self._timer_token = 0
        self._cycle_token = 0
        self._cycle_active = False
        self._outstanding: tuple[int, int] | None = None  # (addr64, poll id)
        self._poll_ids = 0
        self._wake_at: dict[int, float] = {}
        self._ran = False

        self.queue.push(0.0, "connect")
        for addr, dev in self.devices.items():
            self.queue.push(dev.cfg.wake_offset, "node_wake", addr)
            for change in dev.cfg.supply_schedule:
                self.queue.push(change.at, "supply_set", addr, change.volts)

    # plumbing

    def _log(self, kind: str, node: int | None = None) -> None:
        self.trace.append((self.now, kind, "" if node is None else f"{node:016X}"))

    def _link_delay(self, hops: int) -> float | None:
        """One-way delay including MAC retries, or None if every attempt was lost."""
        link = self.scenario.link
        hop = link.latency_ms / 1000 * hops
        for attempt in range(link.mac_retries + 1):
            if link.drop_prob == 0 or self.rng.random() >= link.drop_prob:
                return hop * (attempt + 1)
        return None

    def _corrupt(self, data: bytes) -> bytes:
        # one byte of frame data or checksum is hit; the length field is left intact
        frame = fc.decode_frame(data, self.coord.escaped)
        body = bytearray(frame.frame_data + bytes((frame.checksum,)))
        i = self.rng.randrange(len(body))
        body[i] ^= self.rng.randrange(1, 256)
        raw = len(frame.frame_data).to_bytes(2, "big") + bytes(body)
        if self.coord.escaped:
            raw = fc.escape_bytes(raw)
        return bytes((fc.START_DELIMITER,)) + raw

    def _uplink_frame(self, addr: int, tx: Transmission | None) -> None:
        if tx is None:
            return
        delay = self._link_delay(self.devices[addr].cfg.hops)
        if delay is None:
            self.report.dropped_frames += 1
            return
        data = tx.data
        if self.scenario.link.corrupt_prob and self.rng.random() < self.scenario.link.corrupt_prob:
            data = self._corrupt(data)
        self.queue.push(tx.at + delay, "frame_delivery", addr, data)

    # coordinator behaviour

    def _connect(self, ev: SimEvent) -> None:
        if not self.uplink.reachable(self.now):
            self.queue.push(self.now + self.scenario.coordinator.reconnect_delay_s, "connect")
            return
        if not self._provisioned:
            self._provision()
        self.coord.connection = CONNECTED
        self.coord.consecutive_failures = 0
        self._restart_timer()

    def _provision(self) -> None:
        for node in self.scenario.nodes:
            for feed in ("indoor-temperature", "node-voltage"):
                self.cloud.ensure_feed(feed_id(feed, node.name))
            for rule in self.scenario.cloud.rules:
                self.cloud.add_rule(feed_id(rule.feed, node.name), rule.comparison, rule.threshold, rule.target)
        self._provisioned = True

    def _restart_timer(self) -> None:
        self._timer_token += 1
        self.queue.push(self.now + self.coord.update_period, "timer_expiry", token=self._timer_token)
        self._start_poll_cycle()

    def _start_poll_cycle(self) -> None:
        if self.autonomous or self._cycle_active:
            return
        self._cycle_active = True
        self._cycle_token += 1
        self.queue.push(self.now, "poll", data=0, token=self._cycle_token)

    def _poll(self, ev: SimEvent) -> None:
        if ev.token != self._cycle_token or self.coord.connection != CONNECTED:
            return
        index = ev.data
        if index >= len(self.coord.roster):
            self._cycle_active = False
            self._outstanding = None
            return
        addr = self.coord.roster[index]
        self._poll_ids += 1
        self._outstanding = (addr, self._poll_ids)
        self._log("poll", addr)
        dev = self.devices[addr]
        data = self.coord.poll_frame(addr)
        delay = self._link_delay(dev.cfg.hops)
        if delay is None:
            self.report.dropped_frames += 1
        else:
            self.queue.push(self.now + delay, "poll_delivery", addr, data)
        timeout = self.scenario.poll_timeout(dev.cfg)
        self.queue.push(self.now + timeout, "poll_timeout", addr, data=index, token=self._poll_ids)

    def _next_poll(self, addr: int) -> None:
        if self._outstanding is None or self._outstanding[0] != addr:
            return
        index = self.coord.roster.index(addr) + 1
        self._outstanding = None
        self.queue.push(self.now, "poll", data=index, token=self._cycle_token)

    def _poll_timeout(self, ev: SimEvent) -> None:
        if self._outstanding != (ev.node, ev.token):
            return
        self._log("poll_timeout", ev.node)
        self.report.poll_timeouts += 1
        self._node_timeouts[ev.node] += 1
        self._next_poll(ev.node)

    def _frame_delivery(self, ev: SimEvent) -> None:
        self._log("frame_delivery", ev.node)
        try:
            readings = self.coord.handle_frame(ev.data, self.now)
        except fc.FrameError as exc:
            self.report.corrupt_frames += 1
            logger.debug("discarded frame from %016X: %s", ev.node, exc)
        else:
            self.delivered_frames.append((self.now, ev.node, ev.data))
            self.readings.extend(readings)
        self._next_poll(ev.node)

    def _timer_expiry(self, ev: SimEvent) -> None:
        if ev.token != self._timer_token or self.coord.connection != CONNECTED:
            return
        self._log("timer_expiry")
        self.report.timer_expiries += 1
        post_delay = self.scenario.cloud.post_latency_ms / 1000
        for intent in self.coord.timer_expiry(self.now):
            self.queue.push(self.now + post_delay, "post", intent.reading.node, intent, token=self._timer_token)
        self.queue.push(self.now + self.coord.update_period, "timer_expiry", token=self._timer_token)
        self._start_poll_cycle()

    def _post(self, ev: SimEvent) -> None:
        intent = ev.data
        if ev.token != self._timer_token:
            # issued before a reset; the reading is gone with the old connection
            self.report.lost_readings += 1
            return
        self.report.posts_attempted += 1
        try:
            self.uplink.post(intent.feed_id, intent.value, self.now)
        except CloudUnavailable as exc:
            logger.debug("POST in feed %s failed: %s", intent.feed_id, exc)
            self._log("post_failed", ev.node)
            self.report.posts_failed += 1
            self.report.lost_readings += 1
            self.coord.record_post(False)
            threshold = self.scenario.coordinator.failure_reset_threshold
            if self.coord.connection == CONNECTED and self.coord.consecutive_failures >= threshold:
                self.reset()
        else:
            self._log("post_complete", ev.node)
            self.report.posts_succeeded += 1
            self.coord.record_post(True)

    def reset(self) -> None:
        """Software reset of the coordinator; reconnects after the configured delay."""
        self.report.lost_readings += self.coord.reset()
        self.report.resets += 1
        self._timer_token += 1
        self._cycle_token += 1
        self._cycle_active = False
        self._outstanding = None
        self.queue.push(self.now + self.scenario.coordinator.reconnect_delay_s, "connect")

    # end devices

    def _node_wake(self, ev: SimEvent) -> None:
        dev = self.devices[ev.node]
        if dev.silent:
            return
        self._log("node_wake", ev.node)
        self._wake_at[ev.node] = self.now
        tx = dev.wake(self.now, autonomous=self.autonomous)
        self._uplink_frame(ev.node, tx)
        self.queue.push(self.now + dev.awake_window, "node_sleep", ev.node)

    def _node_sleep(self, ev: SimEvent) -> None:
        dev = self.devices[ev.node]
        self._log("node_sleep", ev.node)
        dev.go_to_sleep(self.now)
        if not dev.silent:
            self.queue.push(self._wake_at[ev.node] + dev.sleep_period, "node_wake", ev.node)

    def _poll_delivery(self, ev: SimEvent) -> None:
        self._log("poll_delivery", ev.node)
        dev = self.devices[ev.node]
        self._uplink_frame(ev.node, dev.receive_poll(ev.data, self.now))

    def _supply_set(self, ev: SimEvent) -> None:
        self._log("supply_set", ev.node)
        dev = self.devices[ev.node]
        dev.advance(self.now)
        dev.supply_override = ev.data

    # driver

    def run(self, until: float, progress: Callable[[float], None] | None = None) -> SimReport:
        if self._ran:
            raise RuntimeError("a Simulation runs once; build a new one")
        if until < 0:
            raise ValueError("until must be non-negative")
        self._ran = True
        handlers = {
            "connect": self._connect,
            "poll": self._poll,
            "poll_timeout": self._poll_timeout,
            "poll_delivery": self._poll_delivery,
            "frame_delivery": self._frame_delivery,
            "timer_expiry": self._timer_expiry,
            "post": self._post,
            "node_wake": self._node_wake,
            "node_sleep": self._node_sleep,
            "supply_set": self._supply_set,
        }
        processed = 0
        while self.queue and self.queue.peek_time() <= until:
            ev = self.queue.pop()
            self.now = ev.at
            handlers[ev.kind](ev)
            processed += 1
            if progress is not None and processed % 10_000 == 0:
                progress(self.now)
        self.now = max(self.now, until)
        return self._finish(until)

    def _finish(self, until: float) -> SimReport:
        rep = self.report
        rep.until = until
        rep.readings = [r.to_dict() for r in self.readings]
        rep.entries_stored = self.cloud.entry_count()
        rep.notifications = [n.to_dict() for n in self.cloud.notifications()]
        rep.nodes = []
        for addr, dev in self.devices.items():
            dev.advance(until)
            rep.nodes.append({
                "name": dev.name,
                "addr64": f"{addr:016X}",
                "charge_remaining_mAh": dev.battery.charge_remaining,
                "low_voltage_latched": dev.low_voltage_latched,
                "depleted": dev.battery.depleted,
                "samples_sent": dev.samples_sent,
                "poll_timeouts": self._node_timeouts[addr],
            })
        return rep

    def write_trace(self, fp: TextIO) -> None:
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for t, kind, node in self.trace:
            writer.writerow([f"{t:.6f}", kind, node])


def run(scenario: Scenario, until: float, cloud=None, key: str = DEFAULT_KEY,
        progress: Callable[[float], None] | None = None) -> SimReport:
    return Simulation(scenario, cloud, key).run(until, progress)
