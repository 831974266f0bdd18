"""Low-battery alert drill: pull one node's supply down to the threshold and
time how long the notification takes to reach the user."""

from __future__ import annotations

import csv
import statistics
from dataclasses import dataclass
from typing import TextIO

from ..netsim.scenario import CloudConfig, CoordinatorConfig, NodeConfig, RuleConfig, Scenario, SupplyChange
from ..netsim.simulation import DEFAULT_KEY, Simulation
from .rules import LatencyModel

DRILL_COLUMNS = ("trial", "latency_s", "force_to_delivery_s")


@dataclass(frozen=True)
class DrillTrial:
    trial: int
    latency_s: float  # entry stored -> notification delivered
    force_to_delivery_s: float  # supply forced down -> notification delivered


@dataclass(frozen=True)
class DrillResult:
    trials: list[DrillTrial]
    latency: str

    @property
    def latencies(self) -> list[float]:
        return [t.latency_s for t in self.trials]

    @property
    def mean(self) -> float:
        return statistics.fmean(self.latencies)

    def write_csv(self, fp: TextIO) -> None:
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(DRILL_COLUMNS)
        for t in self.trials:
            writer.writerow([t.trial, f"{t.latency_s:.6f}", f"{t.force_to_delivery_s:.6f}"])
        fp.write(f"# mean latency_s = {self.mean:.6f} over {len(self.trials)} trials ({self.latency})\n")


def drill_scenario(latency: str, seed: int, threshold: float = 2.1, force_at: float = 90.0,
                   update_period: float = 60.0) -> Scenario:
    """One node on a short upload period whose supply drops to ``threshold`` at ``force_at``."""
    node = NodeConfig(
        addr64=0x0013A200409C2679,
        name="node1",
        sleep_period=5.0,
        awake_window=0.5,
        supply_schedule=[SupplyChange(force_at, threshold)],
    )
    return Scenario(
        nodes=[node],
        coordinator=CoordinatorConfig(update_period_s=update_period),
        cloud=CloudConfig(latency=latency, rules=[RuleConfig("node-voltage", "<=", threshold, "email_sim")]),
        seed=seed,
        name="alert-drill",
    )


def measure_alert_latency(trials: int = 10, latency: str = "uniform:8:13", seed: int = 0,
                          key: str = DEFAULT_KEY, force_at: float = 90.0) -> DrillResult:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    LatencyModel.parse(latency)
    results = []
    for i in range(1, trials + 1):
        scenario = drill_scenario(latency, seed * 1000 + i, force_at=force_at)
        sim = Simulation(scenario, key=key)
        # two upload periods after the drop is always enough for the low reading to land
        report = sim.run(force_at + 2 * scenario.coordinator.update_period_s)
        if not report.notifications:
            raise RuntimeError(f"trial {i}: no notification fired")
        note = report.notifications[0]
        results.append(DrillTrial(i, note["delivered_at"] - note["created_at"], note["delivered_at"] - force_at))
    return DrillResult(results, latency)
