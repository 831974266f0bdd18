"""Figure rendering for the CLI reports. Everything writes straight to files."""

from __future__ import annotations

import itertools

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

HOURS_PER_DAY = 24.0

STYLE = {
    "figure.figsize": (6.4, 4.0),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 10,
    "legend.fontsize": 8,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}


def _save(fig, path) -> None:
    fig.savefig(path)
    plt.close(fig)


def plot_lifetime_sweep(rows, path, sleep_bound_hours: float | None = None) -> None:
    """Lifetime in days against update period, one line per payload size."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for payload, group in itertools.groupby(sorted(rows), key=lambda r: r.payload_bytes):
            group = list(group)
            ax.plot([r.update_period_s for r in group], [r.lifetime_hours / HOURS_PER_DAY for r in group],
                    marker="o", ms=3, label=f"{payload} bytes")
        if sleep_bound_hours is not None:
            ax.axhline(sleep_bound_hours / HOURS_PER_DAY, color="0.4", ls="--", lw=1, label="sleep-only bound")
        ax.set_xscale("log")
        ax.set_xlabel("update period (s)")
        ax.set_ylabel("node lifetime (days)")
        ax.legend(loc="lower right")
        _save(fig, path)


def plot_alert_latency(result, path) -> None:
    """Bar per attempt with the mean drawn across."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        attempts = [t.trial for t in result.trials]
        ax.bar(attempts, result.latencies, color="tab:blue", width=0.6)
        ax.axhline(result.mean, color="tab:red", lw=1, label=f"mean {result.mean:.2f} s")
        ax.set_xticks(attempts)
        ax.set_xlabel("attempt")
        ax.set_ylabel("notification delay (s)")
        ax.legend()
        _save(fig, path)


def plot_feed_series(readings, path) -> None:
    """Temperature and node voltage over virtual time on twin axes."""
    with plt.rc_context(STYLE):
        fig, ax_t = plt.subplots()
        ax_v = ax_t.twinx()
        by_key = {}
        for r in readings:
            by_key.setdefault((r["feed"], r["node"]), []).append((r["t"], r["value"]))
        for (feed, node), pts in sorted(by_key.items()):
            ts, vs = zip(*pts)
            hours = [t / 3600 for t in ts]
            if feed == "indoor-temperature":
                ax_t.plot(hours, vs, color="tab:red", lw=1, marker=".", label=f"temp {node[-4:]}")
            else:
                ax_v.plot(hours, vs, color="tab:green", lw=1, marker=".", label=f"volts {node[-4:]}")
        ax_t.set_xlabel("virtual time (h)")
        ax_t.set_ylabel("temperature (°C)", color="tab:red")
        ax_v.set_ylabel("supply (V)", color="tab:green")
        ax_v.grid(False)
        _save(fig, path)
