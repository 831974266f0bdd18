"""In-memory feed service: keyed posts, monotone entry ids, series export,
windowed aggregation and threshold rules."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import random
import statistics
import threading
import time
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from fractions import Fraction
from typing import Callable, Iterable

from .rules import DEFAULT_LATENCY, AlertRule, LatencyModel, Notification

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("entry_id", "feed_id", "value", "received_at")
AGGREGATES = ("mean", "median", "sum", "timescale")


class CloudError(Exception):
    status = 500
    code = "internal"

    def __init__(self, detail: str = ""):
        super().__init__(detail)
        self.detail = detail

    def to_dict(self) -> dict:
        return {"error": self.code, "detail": self.detail}


class AuthError(CloudError):
    status = 401
    code = "unauthorized"


class NotFound(CloudError):
    status = 404
    code = "not-found"


class BadRequest(CloudError):
    status = 400
    code = "bad-request"


def _timestamp(t: float) -> float:
    # the 3-decimal wire form, identical whether read back from JSON or CSV
    return float(f"{t:.3f}")


@dataclass(frozen=True)
class FeedEntry:
    entry_id: int
    feed_id: str
    value: str
    received_at: float

    def to_dict(self) -> dict:
        return {
            "entry_id": self.entry_id,
            "feed_id": self.feed_id,
            "value": self.value,
            "received_at": _timestamp(self.received_at),
        }


def parse_value(value) -> Decimal:
    try:
        number = Decimal(str(value).strip())
    except InvalidOperation:
        raise BadRequest(f"value {value!r} is not a decimal number") from None
    if not number.is_finite():
        raise BadRequest(f"value {value!r} is not finite")
    return number


class FeedService:
    """Thread-safe feed store. Appends are serialized by one lock, which is
    where entry ids are assigned, so ids are strictly increasing in storage order.
    """

    def __init__(
        self,
        keys: dict[str, str] | None = None,
        feeds: Iterable[str] = (),
        latency: LatencyModel | str = DEFAULT_LATENCY,
        clock: Callable[[], float] = time.time,
        seed: int = 0,
    ):
        self._lock = threading.RLock()
        self._keys = dict(keys or {})
        self._feeds: dict[str, list[FeedEntry]] = {f: [] for f in feeds}
        self._rules: list[AlertRule] = []
        self._notifications: list[Notification] = []
        self._next_entry_id = 1
        self._last_received = -math.inf
        self.clock = clock
        if isinstance(latency, str):
            latency = LatencyModel.parse(latency, random.Random(seed))
        self.latency = latency

    # auth and provisioning

    def register_key(self, key: str, owner: str) -> None:
        with self._lock:
            self._keys[key] = owner

    def _authorize(self, key: str | None) -> str:
        owner = self._keys.get(key) if key else None
        if owner is None:
            raise AuthError("missing or unknown API key")
        return owner

    def create_feed(self, key: str | None, feed_id: str) -> None:
        self._authorize(key)
        if not feed_id or "/" in feed_id:
            raise BadRequest(f"invalid feed id {feed_id!r}")
        with self._lock:
            self._feeds.setdefault(feed_id, [])

    def feeds(self) -> list[str]:
        with self._lock:
            return sorted(self._feeds)

    def _feed(self, feed_id: str) -> list[FeedEntry]:
        try:
            return self._feeds[feed_id]
        except KeyError:
            raise NotFound(f"feed {feed_id!r} does not exist") from None

    # writes

    def post_event(self, key: str | None, feed_id: str, value, now: float | None = None) -> FeedEntry:
        self._authorize(key)
        number = parse_value(value)
        with self._lock:
            entries = self._feed(feed_id)
            received = self.clock() if now is None else float(now)
            # keep received_at non-decreasing in entry id even if callers' clocks disagree
            received = max(received, self._last_received)
            entry = FeedEntry(self._next_entry_id, feed_id, str(value), received)
            self._next_entry_id += 1
            self._last_received = received
            entries.append(entry)
            self._evaluate(entry, number)
        return entry

    def add_rule(
        self,
        key: str | None,
        feed_id: str,
        comparison: str = "<=",
        threshold: float = 2.1,
        target: str = "email_sim",
    ) -> AlertRule:
        self._authorize(key)
        with self._lock:
            self._feed(feed_id)
            try:
                rule = AlertRule(len(self._rules) + 1, feed_id, comparison, float(threshold), target)
            except (TypeError, ValueError) as exc:
                raise BadRequest(str(exc)) from None
            self._rules.append(rule)
        return rule

    def evaluate_rules(self, entry: FeedEntry) -> list[Notification]:
        with self._lock:
            return self._evaluate(entry, parse_value(entry.value))

    def _evaluate(self, entry: FeedEntry, number: Decimal) -> list[Notification]:
        fired = []
        for rule in self._rules:
            if rule.feed_id != entry.feed_id:
                continue
            if not rule.holds(number):
                rule.armed = True
            elif rule.armed:
                rule.armed = False
                created = entry.received_at
                note = Notification(rule.rule_id, entry.entry_id, created, created + self.latency.draw(), rule.target)
                self._notifications.append(note)
                fired.append(note)
                logger.info("rule %d fired on entry %d (%s %s)", rule.rule_id, entry.entry_id,
                            entry.feed_id, entry.value)
        return fired

    # reads

    def rules(self) -> list[AlertRule]:
        with self._lock:
            return list(self._rules)

    def notifications(self) -> list[Notification]:
        with self._lock:
            return list(self._notifications)

    def entry_count(self) -> int:
        with self._lock:
            return self._next_entry_id - 1

    def entries(self, feed_id: str, start: float | None = None, end: float | None = None) -> list[FeedEntry]:
        if start is not None and end is not None and start > end:
            raise BadRequest(f"empty range from={start} to={end}")
        with self._lock:
            snapshot = list(self._feed(feed_id))
        return [
            e for e in snapshot
            if (start is None or e.received_at >= start) and (end is None or e.received_at <= end)
        ]

    def get_feed(self, feed_id: str, start: float | None = None, end: float | None = None,
                 fmt: str = "json") -> str:
        rows = self.entries(feed_id, start, end)
        if fmt == "json":
            return json.dumps([e.to_dict() for e in rows])
        if fmt == "csv":
            buf = io.StringIO()
            writer = csv.writer(buf, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for e in rows:
                writer.writerow([e.entry_id, e.feed_id, e.value, f"{e.received_at:.3f}"])
            return buf.getvalue()
        raise BadRequest(f"unknown format {fmt!r}; use json or csv")

    def aggregate(self, feed_id: str, window: float, fn: str) -> list[tuple[float, float]]:
        """Bucket entries by ``floor(received_at / window)`` and reduce each bucket.

        ``timescale`` keeps the last value of each bucket. Empty buckets are
        omitted. The even-count median is the mean of the two middle values.
        """
        if fn not in AGGREGATES:
            raise BadRequest(f"unknown aggregate {fn!r}; use one of {', '.join(AGGREGATES)}")
        try:
            window = float(window)
        except (TypeError, ValueError):
            raise BadRequest(f"window {window!r} is not a number") from None
        if not (window > 0 and math.isfinite(window)):
            raise BadRequest("window must be a positive number of seconds")
        buckets: dict[int, list[Fraction]] = {}
        for e in self.entries(feed_id):
            buckets.setdefault(math.floor(e.received_at / window), []).append(Fraction(parse_value(e.value)))
        out = []
        for k in sorted(buckets):
            values = buckets[k]
            if fn == "mean":
                result = sum(values, Fraction(0)) / len(values)
            elif fn == "sum":
                result = sum(values, Fraction(0))
            elif fn == "median":
                result = statistics.median(values)
            else:
                result = values[-1]
            out.append((k * window, float(result)))
        return out

    # persistence

    def snapshot(self) -> dict:
        with self._lock:
            return {
                "next_entry_id": self._next_entry_id,
                "feeds": {f: [e.to_dict() for e in es] for f, es in sorted(self._feeds.items())},
                "rules": [r.to_dict() for r in self._rules],
                "notifications": [n.to_dict() for n in self._notifications],
            }

    def digest(self) -> str:
        blob = json.dumps(self.snapshot(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def save_snapshot(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fp:
            json.dump(self.snapshot(), fp, indent=2, sort_keys=True)


def parse_series(text: str, fmt: str) -> list[tuple[int, str, float]]:
    """Parse a serialized series back to (entry_id, value, received_at) triples."""
    if fmt == "json":
        return [(int(r["entry_id"]), r["value"], float(r["received_at"])) for r in json.loads(text)]
    if fmt == "csv":
        return [
            (int(r["entry_id"]), r["value"], float(r["received_at"]))
            for r in csv.DictReader(io.StringIO(text))
        ]
    raise ValueError(f"unknown format {fmt!r}")
