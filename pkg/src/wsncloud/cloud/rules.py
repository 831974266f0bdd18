"""Threshold rules with crossing semantics and simulated notification delivery."""

from __future__ import annotations

import operator
import random
from dataclasses import asdict, dataclass
from decimal import Decimal

COMPARISONS = {
    "<=": operator.le,
    ">=": operator.ge,
    "==": operator.eq,
}
CHANNELS = ("email_sim", "tweet_sim", "log")

DEFAULT_LATENCY = "uniform:8:13"


@dataclass
class AlertRule:
    rule_id: int
    feed_id: str
    comparison: str = "<="
    threshold: float = 2.1
    target: str = "email_sim"
    armed: bool = True

    def __post_init__(self):
        if self.comparison not in COMPARISONS:
            raise ValueError(f"comparison must be one of {sorted(COMPARISONS)}")
        if self.target not in CHANNELS:
            raise ValueError(f"target must be one of {CHANNELS}")

    def holds(self, value: Decimal) -> bool:
        return COMPARISONS[self.comparison](value, Decimal(str(self.threshold)))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Notification:
    rule_id: int
    entry_id: int
    created_at: float
    delivered_at: float
    channel: str

    @property
    def latency(self) -> float:
        return self.delivered_at - self.created_at

    def to_dict(self) -> dict:
        return asdict(self)


class LatencyModel:
    """Delivery delay distribution, parsed from ``constant:S`` or ``uniform:LO:HI``."""

    def __init__(self, kind: str, low: float, high: float | None = None, rng: random.Random | None = None):
        if kind not in ("constant", "uniform"):
            raise ValueError(f"unknown latency distribution {kind!r}")
        high = low if high is None else high
        if low < 0 or high < low:
            raise ValueError("latency bounds must satisfy 0 <= low <= high")
        self.kind = kind
        self.low = low
        self.high = high
        self.rng = rng or random.Random(0)

    @classmethod
    def parse(cls, text: str, rng: random.Random | None = None) -> "LatencyModel":
        kind, _, rest = text.partition(":")
        try:
            args = [float(a) for a in rest.split(":")] if rest else []
        except ValueError:
            raise ValueError(f"bad latency spec {text!r}") from None
        if kind == "constant" and len(args) == 1:
            return cls("constant", args[0], rng=rng)
        if kind == "uniform" and len(args) == 2:
            return cls("uniform", args[0], args[1], rng=rng)
        raise ValueError(f"bad latency spec {text!r}; use constant:S or uniform:LO:HI")

    def draw(self) -> float:
        if self.kind == "constant":
            return self.low
        return self.rng.uniform(self.low, self.high)

    def __str__(self):
        if self.kind == "constant":
            return f"constant:{self.low:g}"
        return f"uniform:{self.low:g}:{self.high:g}"

