"""Derived counter metrics and heartbeat-based progress."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RawCounters:
    """Counter deltas over one sampling interval."""

    tot_ins: float
    tot_cyc: float
    l3_tca: float
    l3_tcm: float
    res_stl: float

    def __post_init__(self):
        for name in ("tot_ins", "tot_cyc", "l3_tca", "l3_tcm", "res_stl"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be a finite non-negative count, got {v}")
        if self.l3_tcm > self.l3_tca:
            raise ValueError("more cache misses than cache accesses")
        if self.res_stl > self.tot_cyc:
            raise ValueError("more stalled cycles than cycles")


def _ratio(num: float, den: float) -> float:
    # idle interval: 0/0 carries no information
    return num / den if den > 0 else 0.0


def derived_metrics(c: RawCounters) -> tuple[float, float, float]:
    """Return ``(ipc, stl, cmr)`` from raw counters."""
    return _ratio(c.tot_ins, c.tot_cyc), _ratio(c.res_stl, c.tot_cyc), _ratio(c.l3_tcm, c.l3_tca)


class HeartbeatBatch:
    """Ordered heartbeat reports ``(t_k, N_k)``.

    N_k heartbeats arrived in (t_{k-1}, t_k]. ``origin`` is the time of the
    report preceding the first one (defaults to 0) so that the first report
    also has an interval.
    """

    __slots__ = ("times", "counts", "origin")

    def __init__(self, times, counts, origin: float = 0.0):
        times = np.asarray(times, dtype=float).reshape(-1)
        counts = np.asarray(counts, dtype=float).reshape(-1)
        if times.shape != counts.shape:
            raise ValueError("times and counts differ in length")
        if times.size:
            steps = np.diff(np.concatenate(([origin], times)))
            if not np.all(steps > 0):
                raise ValueError("heartbeat timestamps must be strictly increasing")
            if np.any(counts < 0):
                raise ValueError("heartbeat count must be non-negative")
        self.times = times
        self.counts = counts
        self.origin = float(origin)

    @classmethod
    def from_reports(cls, reports, origin: float = 0.0) -> "HeartbeatBatch":
        reports = list(reports)
        return cls([t for t, _ in reports], [n for _, n in reports], origin)

    def __len__(self):
        return self.times.size


def progress(batch: HeartbeatBatch, window: tuple[float, float]) -> float:
    """Median heartbeat rate N_k / (t_k - t_{k-1}) over reports with t_k in (t_start, t_end].

    Even counts take the mean of the two central rates. An empty window
    reports 0 Hz.
    """
    t0, t1 = window
    if not t1 > t0:
        raise ValueError(f"degenerate progress window {window}")
    if not len(batch):
        return 0.0
    times = batch.times
    prev = np.concatenate(([batch.origin], times[:-1]))
    rates = batch.counts / (times - prev)
    sel = rates[(times > t0) & (times <= t1)]
    if sel.size == 0:
        return 0.0
    return float(np.median(sel))
