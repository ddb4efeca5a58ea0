"""Evaluation metrics, static-cap baselines and report tables."""

from __future__ import annotations

import csv
import io
import statistics
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import control, nodesim
from .core import ActionGrid, DataError
from .nodesim import BenchmarkProfile, EpisodeLog

RL_LABEL = "rl"
DEFAULT_REPEATS = 5


def ed2p(energy_kj: float, et_s: float) -> float:
    """Energy-delay-squared product in kJ*s^2."""
    if energy_kj < 0 or et_s < 0:
        raise ValueError("energy and execution time must be non-negative")
    return energy_kj * et_s * et_s


def ppw(progress_hz: float, power_w: float) -> float:
    """Performance per watt: progress^2 / power."""
    if not power_w > 0:
        raise ValueError(f"power must be positive, got {power_w}")
    return progress_hz * progress_hz / power_w


def static_label(watts: float) -> str:
    return f"static-{watts:.2f}"


@dataclass(frozen=True)
class RunSummary:
    benchmark: str
    policy: str
    repeats: int
    et_mean: float
    et_std: float
    energy_mean: float
    energy_std: float
    ed2p_std: float
    cap: float | None = None  # set for static-cap runs

    @property
    def ed2p(self) -> float:
        # from the means, the way the published tables were built
        return ed2p(self.energy_mean, self.et_mean)


def summarize(logs: list[EpisodeLog], policy: str, cap: float | None = None) -> RunSummary:
    if not logs:
        raise ValueError("no episodes to summarize")
    names = {lg.benchmark for lg in logs}
    if len(names) != 1:
        raise ValueError(f"episodes from several benchmarks: {sorted(names)}")
    et = np.array([lg.execution_time for lg in logs])
    en = np.array([lg.energy_kj for lg in logs])
    per_run = en * et * et
    return RunSummary(
        benchmark=names.pop(),
        policy=policy,
        repeats=len(logs),
        et_mean=float(et.mean()),
        # population std, computed exactly: identical runs give exactly 0
        et_std=statistics.pstdev(et.tolist()),
        energy_mean=float(en.mean()),
        energy_std=statistics.pstdev(en.tolist()),
        ed2p_std=statistics.pstdev(per_run.tolist()),
        cap=cap,
    )


def repeat_seeds(seed: int, repeats: int) -> list[int]:
    """Per-repeat simulator seeds. Every policy evaluated with the same
    ``seed`` sees the same noise draws, so comparisons are paired."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(repeats)]


def run_static(profile: BenchmarkProfile, watts: float, repeats: int = DEFAULT_REPEATS, dt: float = 1.0, seed: int = 0):
    logs = [
        nodesim.run_to_completion(profile, nodesim.constant_policy(watts), dt=dt, seed=s)
        for s in repeat_seeds(seed, repeats)
    ]
    return summarize(logs, static_label(watts), cap=watts), logs


def run_controller(ck, profile: BenchmarkProfile, repeats: int = DEFAULT_REPEATS, dt: float = 1.0, seed: int = 0):
    logs = [control.control_episode(ck, profile, dt=dt, seed=s) for s in repeat_seeds(seed, repeats)]
    return summarize(logs, RL_LABEL), logs


def static_sweep(
    profile: BenchmarkProfile,
    grid: ActionGrid,
    repeats: int = DEFAULT_REPEATS,
    dt: float = 1.0,
    seed: int = 0,
    keep_logs: bool = False,
):
    """One summary per cap of ``grid``, each over ``repeats`` runs.

    With ``keep_logs`` the episode logs come back too, as ``{cap: [log, ...]}``.
    """
    out, logs = [], {}
    for watts in grid.values:
        s, lg = run_static(profile, watts, repeats, dt, seed)
        out.append(s)
        if keep_logs:
            logs[watts] = lg
    return (out, logs) if keep_logs else out


def compare(rl: RunSummary, base: RunSummary) -> tuple[float, float]:
    """(energy saved %, execution-time degradation %) of ``rl`` relative to ``base``.

    Negative degradation means ``rl`` finished faster.
    """
    if not (base.energy_mean > 0 and base.et_mean > 0):
        raise ValueError("baseline energy and execution time must be positive")
    saved = 100.0 * (base.energy_mean - rl.energy_mean) / base.energy_mean
    degradation = 100.0 * (rl.et_mean - base.et_mean) / base.et_mean
    return saved, degradation


def max_cap_baseline(summaries: list[RunSummary]) -> RunSummary | None:
    static = [s for s in summaries if s.cap is not None]
    return max(static, key=lambda s: s.cap) if static else None


def best_static(summaries: list[RunSummary]) -> RunSummary | None:
    static = [s for s in summaries if s.cap is not None]
    return min(static, key=lambda s: s.ed2p) if static else None


# --- files ------------------------------------------------------------------

SUMMARY_COLUMNS = [f.name for f in fields(RunSummary)] + ["ed2p"]


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    return buf.getvalue()


def summaries_to_csv(summaries: list[RunSummary]) -> str:
    return _csv(SUMMARY_COLUMNS, ([getattr(s, c) for c in SUMMARY_COLUMNS] for s in summaries))


def read_summaries(path) -> list[RunSummary]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    rows = list(csv.DictReader(io.StringIO(text)))
    out = []
    for i, r in enumerate(rows):
        try:
            out.append(
                RunSummary(
                    benchmark=r["benchmark"],
                    policy=r["policy"],
                    repeats=int(r["repeats"]),
                    et_mean=float(r["et_mean"]),
                    et_std=float(r["et_std"]),
                    energy_mean=float(r["energy_mean"]),
                    energy_std=float(r["energy_std"]),
                    ed2p_std=float(r["ed2p_std"]),
                    cap=float(r["cap"]) if r["cap"] else None,
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{path}: bad summary row {i + 1}: {exc}") from exc
    return out


def _by_benchmark(summaries):
    groups: dict[str, list[RunSummary]] = {}
    for s in summaries:
        groups.setdefault(s.benchmark, []).append(s)
    return groups


def _average_row(rows, first_numeric: int):
    avg = ["Average"] + [""] * (first_numeric - 1)
    for col in range(first_numeric, len(rows[0]) if rows else first_numeric):
        vals = [r[col] for r in rows if isinstance(r[col], float)]
        avg.append(float(np.mean(vals)) if vals else None)
    return avg


def pareto_table(summaries) -> str:
    header = ["benchmark", "policy", "cap", "repeats", "et_mean", "et_std", "energy_mean", "energy_std", "ed2p", "ed2p_std"]
    rows = []
    for bench, group in _by_benchmark(summaries).items():
        group = sorted(group, key=lambda s: (s.cap is None, s.cap or 0.0, s.policy))
        for s in group:
            rows.append([bench, s.policy, s.cap, s.repeats, s.et_mean, s.et_std, s.energy_mean, s.energy_std, s.ed2p, s.ed2p_std])
    return _csv(header, rows)


def comparison_table(summaries) -> str:
    header = ["benchmark", "max_cap_et", "max_cap_energy", "rl_et", "rl_energy", "energy_saved_pct", "et_degradation_pct"]
    rows = []
    for bench, group in _by_benchmark(summaries).items():
        base = max_cap_baseline(group)
        rl = next((s for s in group if s.policy == RL_LABEL), None)
        saved = deg = None
        if rl is not None and base is not None:
            saved, deg = compare(rl, base)
        rows.append([
            bench,
            base.et_mean if base else None,
            base.energy_mean if base else None,
            rl.et_mean if rl else None,
            rl.energy_mean if rl else None,
            saved,
            deg,
        ])
    if rows:
        rows.append(_average_row(rows, 1))
    return _csv(header, rows)


def ed2p_table(summaries) -> str:
    header = ["benchmark", "max_cap_ed2p", "best_static_ed2p", "best_static_cap", "rl_ed2p", "rl_over_max_cap", "rl_over_best_static"]
    rows = []
    for bench, group in _by_benchmark(summaries).items():
        base = max_cap_baseline(group)
        best = best_static(group)
        rl = next((s for s in group if s.policy == RL_LABEL), None)
        rows.append([
            bench,
            base.ed2p if base else None,
            best.ed2p if best else None,
            best.cap if best else None,
            rl.ed2p if rl else None,
            rl.ed2p / base.ed2p if rl and base and base.ed2p > 0 else None,
            rl.ed2p / best.ed2p if rl and best and best.ed2p > 0 else None,
        ])
    if rows:
        avg = _average_row(rows, 1)
        avg[3] = None  # an averaged cap means nothing
        rows.append(avg)
    return _csv(header, rows)


def digest(summaries) -> str:
    lines = []
    for bench, group in _by_benchmark(summaries).items():
        base = max_cap_baseline(group)
        best = best_static(group)
        rl = next((s for s in group if s.policy == RL_LABEL), None)
        parts = [f"{bench}:"]
        if rl is not None:
            parts.append(f"rl ET {rl.et_mean:.2f}s E {rl.energy_mean:.3f}kJ ED2P {rl.ed2p:.4g}")
        if rl is not None and base is not None:
            saved, deg = compare(rl, base)
            parts.append(f"saved {saved:.2f}% degradation {deg:.2f}% vs {base.policy}")
        if best is not None:
            parts.append(f"best static {best.policy} ED2P {best.ed2p:.4g}")
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


REPORT_FILES = ("pareto.csv", "comparison.csv", "ed2p.csv", "digest.txt")


def report(summaries, out_dir) -> list[Path]:
    summaries = list(summaries)
    if not summaries:
        raise ValueError("nothing to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    texts = (pareto_table(summaries), comparison_table(summaries), ed2p_table(summaries), digest(summaries))
    paths = []
    for name, text in zip(REPORT_FILES, texts):
        p = out / name
        p.write_text(text, encoding="utf-8")
        paths.append(p)
    return paths

