"""Virtual-clock event queue."""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from typing import Any

EVENT_KINDS = frozenset({
    "node_wake",
    "node_sleep",
    "poll",
    "poll_delivery",
    "poll_timeout",
    "frame_delivery",
    "timer_expiry",
    "post",
    "post_complete",
    "post_failed",
    "connect",
    "supply_set",
})


@dataclass(order=True)
class SimEvent:
    at: float
    seq: int
    kind: str = field(compare=False)
    node: int | None = field(default=None, compare=False)
    data: Any = field(default=None, compare=False)
    token: int = field(default=0, compare=False)


class EventQueue:
    """Min-heap ordered by (time, insertion sequence), so ties resolve FIFO."""

    def __init__(self):
        self._heap: list[SimEvent] = []
        self._seq = itertools.count()

    def push(self, at: float, kind: str, node: int | None = None, data: Any = None, token: int = 0) -> SimEvent:
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        event = SimEvent(at, next(self._seq), kind, node, data, token)
        heapq.heappush(self._heap, event)
        return event

    def pop(self) -> SimEvent:
        return heapq.heappop(self._heap)

    def peek_time(self) -> float | None:
        return self._heap[0].at if self._heap else None

    def __len__(self):
        return len(self._heap)
