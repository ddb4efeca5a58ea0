"""Seeded simulator of a power-capped node running an iterative benchmark.

Power-to-progress follows a saturating curve with a knee: below ``p_knee``
the heartbeat rate grows as ``((P - p_idle) / (p_knee - p_idle)) ** response_exp``,
above it the rate is flat. Counter coupling to the relative rate is an
invented, bounded, monotone model; nothing downstream treats it as physical.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .core import DEFAULT_GRID, DataError, NodeState
from .metrics import HeartbeatBatch, progress

PHASE_FIELDS = ("p_max_draw", "p_knee", "progress_max", "response_exp", "ipc_base", "stl_base", "cmr_base")

# Instrumented so tests can prove training never touches the simulator.
STEP_CALLS = 0


class SimulationError(RuntimeError):
    pass


class StepBudgetExceeded(SimulationError):
    pass


@dataclass(frozen=True)
class Phase:
    """Overrides active from ``start_fraction`` of total iterations onward."""

    start_fraction: float
    p_max_draw: float | None = None
    p_knee: float | None = None
    progress_max: float | None = None
    response_exp: float | None = None
    ipc_base: float | None = None
    stl_base: float | None = None
    cmr_base: float | None = None

    def overrides(self) -> dict:
        return {k: getattr(self, k) for k in PHASE_FIELDS if getattr(self, k) is not None}


@dataclass(frozen=True)
class BenchmarkProfile:
    name: str
    p_idle: float
    p_max_draw: float
    p_knee: float
    progress_max: float
    response_exp: float
    ipc_base: float
    stl_base: float
    cmr_base: float
    total_iterations: int
    noise_rel: float = 0.02
    phases: tuple[Phase, ...] = ()
    train: bool = True

    def __post_init__(self):
        if not self.p_idle < self.p_knee:
            raise ValueError(f"{self.name}: p_idle must be below p_knee")
        if not self.p_idle < self.p_max_draw:
            raise ValueError(f"{self.name}: p_idle must be below p_max_draw")
        if not self.progress_max > 0:
            raise ValueError(f"{self.name}: progress_max must be positive")
        if not self.response_exp > 0:
            raise ValueError(f"{self.name}: response_exp must be positive")
        if self.total_iterations < 1:
            raise ValueError(f"{self.name}: total_iterations must be >= 1")
        if self.noise_rel < 0:
            raise ValueError(f"{self.name}: noise_rel must be >= 0")
        object.__setattr__(self, "phases", tuple(self.phases))
        if self.phases:
            starts = [p.start_fraction for p in self.phases]
            if starts[0] != 0:
                raise ValueError(f"{self.name}: first phase must start at 0")
            if any(b <= a for a, b in zip(starts, starts[1:])) or starts[-1] >= 1:
                raise ValueError(f"{self.name}: phase starts must increase strictly within [0, 1)")
            for ph in self.phases:
                eff = replace(self, phases=(), **ph.overrides())  # re-runs validation per phase
                del eff

    @property
    def memory_bound(self) -> bool:
        return self.cmr_base >= 0.8

    def segments(self) -> list[tuple[float, float, "BenchmarkProfile"]]:
        """``(start_fraction, end_fraction, flat_profile)`` for each phase."""
        if not self.phases:
            return [(0.0, 1.0, self)]
        out = []
        for k, ph in enumerate(self.phases):
            end = self.phases[k + 1].start_fraction if k + 1 < len(self.phases) else 1.0
            out.append((ph.start_fraction, end, replace(self, phases=(), **ph.overrides())))
        return out

    def nominal_time(self) -> float:
        """Uncapped completion time: iterations / progress_max, summed over phases."""
        return sum((b - a) * self.total_iterations / seg.progress_max for a, b, seg in self.segments())

    def with_noise(self, noise_rel: float) -> "BenchmarkProfile":
        return replace(self, noise_rel=noise_rel)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["phases"] = [{"start_fraction": p.start_fraction, **p.overrides()} for p in self.phases]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BenchmarkProfile":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise DataError(f"unknown profile fields {sorted(unknown)}")
        d = dict(d)
        try:
            d["phases"] = tuple(Phase(**p) for p in d.get("phases", ()))
            d["total_iterations"] = int(d["total_iterations"])
            return cls(**d)
        except (TypeError, ValueError) as exc:
            raise DataError(f"bad profile {d.get('name')!r}: {exc}") from exc


@dataclass
class SimState:
    """Mutable progress of one workload run."""

    time: float = 0.0
    steps: int = 0
    hb_acc: float = 0.0
    emitted: int = 0
    last_hb_time: float = 0.0
    done: bool = False


@dataclass(frozen=True)
class SimStepResult:
    state: NodeState
    heartbeats_emitted: int
    energy_joules: float
    done: bool


def _power(p: BenchmarkProfile, cap: float, eps: float) -> float:
    base = min(max(cap, p.p_idle), p.p_max_draw)
    return max(p.p_idle, base * (1.0 + eps))


def _rate(p: BenchmarkProfile, power: float, eps: float) -> float:
    frac = (power - p.p_idle) / (p.p_knee - p.p_idle)
    if frac <= 0:
        return 0.0
    return max(0.0, p.progress_max * min(1.0, frac**p.response_exp) * (1.0 + eps))


def step(profile: BenchmarkProfile, sim: SimState, cap_watts: float, dt: float, rng: np.random.Generator) -> SimStepResult:
    """Advance ``sim`` by one control interval under ``cap_watts``.

    Always draws three standard normals so that runs with different caps
    stay on aligned random streams.
    """
    global STEP_CALLS
    STEP_CALLS += 1
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if not math.isfinite(cap_watts):
        raise ValueError("cap must be finite")
    if sim.done:
        raise SimulationError(f"{profile.name}: workload already complete")
    eps_p, eps_r, eps_c = rng.standard_normal(3) * profile.noise_rel

    total = profile.total_iterations
    segs = profile.segments()
    t_start = sim.time
    ts, remaining = t_start, dt
    energy = 0.0
    busy = 0.0
    ipc_w = stl_w = cmr_w = 0.0
    hb_times = []
    power = None
    while remaining > 1e-12 and sim.hb_acc < total:
        frac = sim.hb_acc / total
        k = max(i for i, (a, _, _) in enumerate(segs) if frac >= a - 1e-15)
        _, end, p = segs[k]
        power = _power(p, cap_watts, eps_p)
        r = _rate(p, power, eps_r)
        seg = remaining
        boundary = min(end * total, total)
        if r > 0:
            seg = min(seg, (boundary - sim.hb_acc) / r)
        old = sim.hb_acc
        new = boundary if seg < remaining or r * seg >= boundary - old else old + r * seg
        if r > 0:
            ks = np.arange(math.floor(old) + 1, math.floor(new) + 1, dtype=float)
            if ks.size:
                hb_times.append(ts + (ks - old) / r)
        rho = r / p.progress_max
        ipc_w += seg * p.ipc_base * (0.5 + 0.5 * rho)
        stl_w += seg * min(1.0, max(0.0, p.stl_base * (1.5 - 0.5 * rho)))
        cmr_w += seg * min(1.0, max(0.0, p.cmr_base * (1.0 + eps_c)))
        energy += power * seg
        busy += seg
        sim.hb_acc = new
        ts += seg
        remaining -= seg
        if r == 0:
            break
    if power is None:
        raise SimulationError("no active segment")
    if remaining > 0:
        # workload finished (or stalled) early in the interval; node keeps drawing power
        energy += power * remaining

    times = np.concatenate(hb_times) if hb_times else np.empty(0)
    t_end = t_start + dt
    batch = HeartbeatBatch(times, np.ones_like(times), origin=sim.last_hb_time)
    prog = progress(batch, (t_start, t_end))
    emitted = int(times.size)
    if emitted:
        sim.last_hb_time = float(times[-1])
    sim.emitted += emitted
    sim.time = t_end
    sim.steps += 1
    sim.done = sim.emitted >= total

    w = busy if busy > 0 else 1.0
    state = NodeState(prog, energy / dt, ipc_w / w, stl_w / w, cmr_w / w)
    return SimStepResult(state, emitted, state.power * dt, sim.done)


@dataclass
class EpisodeLog:
    benchmark: str
    dt: float
    rows: list[tuple] = field(default_factory=list)

    COLUMNS = ("t", "progress", "power", "ipc", "stl", "cmr", "cap_watts", "heartbeats", "energy_j")

    def append(self, t: float, res: SimStepResult, cap: float) -> None:
        s = res.state
        self.rows.append((t, s.progress, s.power, s.ipc, s.stl, s.cmr, cap, res.heartbeats_emitted, res.energy_joules))

    @property
    def steps(self) -> int:
        return len(self.rows)

    @property
    def execution_time(self) -> float:
        return self.steps * self.dt

    @property
    def energy_joules(self) -> float:
        return math.fsum(r[8] for r in self.rows)

    @property
    def energy_kj(self) -> float:
        return self.energy_joules / 1000.0

    @property
    def caps(self) -> list[float]:
        return [r[6] for r in self.rows]

    def column(self, name: str) -> np.ndarray:
        i = self.COLUMNS.index(name)
        return np.array([r[i] for r in self.rows])

    def to_csv(self) -> str:
        lines = [",".join(self.COLUMNS)]
        for r in self.rows:
            lines.append(",".join(repr(float(x)) if k < 7 or k == 8 else str(int(x)) for k, x in enumerate(r)))
        return "\n".join(lines) + "\n"


def default_step_budget(profile: BenchmarkProfile, dt: float) -> int:
    return 10 * max(1, math.ceil(profile.nominal_time() / dt))


def run_to_completion(
    profile: BenchmarkProfile,
    policy: Callable[[NodeState], float],
    dt: float = 1.0,
    seed: int = 0,
    max_steps: int | None = None,
) -> EpisodeLog:
    """Run the workload to completion, asking ``policy`` for a cap each interval.

    The first call sees an all-zero state since nothing has been measured yet.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    rng = np.random.default_rng(seed)
    budget = max_steps if max_steps is not None else default_step_budget(profile, dt)
    sim = SimState()
    log = EpisodeLog(profile.name, dt)
    state = NodeState.zeros()
    while not sim.done:
        if sim.steps >= budget:
            raise StepBudgetExceeded(
                f"{profile.name}: not done after {budget} steps ({sim.emitted}/{profile.total_iterations} iterations)"
            )
        cap = float(policy(state))
        res = step(profile, sim, cap, dt, rng)
        log.append(sim.time, res, cap)
        state = res.state
    return log


def constant_policy(watts: float) -> Callable[[NodeState], float]:
    return lambda _state: watts


# --- builtin profiles -------------------------------------------------------

P_IDLE = 50.0
MEMORY_KNEE = DEFAULT_GRID.min_watts + 0.55 * (DEFAULT_GRID.max_watts - DEFAULT_GRID.min_watts)
MEMORY_EXP = 0.5
COMPUTE_EXP = 0.75

# name, iterations, ipc, cmr, stl, avg progress [Hz], avg ET [s], uncapped draw [W], train
_TABLE = [
    ("STREAM-SCALE", 10000, 0.20, 0.89, 0.84, 285.20, 34.40, 5650 / 34.33, True),
    ("STREAM-TRIAD", 10000, 0.18, 0.94, 0.83, 200.03, 50.80, 7670 / 47.67, True),
    ("NPB-EP", 1000, 0.57, 0.13, 0.48, 13.61, 73.80, 9800 / 67.67, True),
    ("NPB-IS", 1000, 0.50, 0.86, 0.68, 8.44, 117.33, 19170 / 116.67, True),
    ("NPB-MG", 1000, 0.47, 0.809, 0.54, 40.3, 22.23, 3180 / 19.80, True),
    ("NPB-FT", 500, 0.82, 0.43, 0.296, 13.23, 35.10, 5050 / 30.60, True),
    ("STREAM-ADD", 10000, 0.15, 0.94, 0.85, 201.06, 50.40, 7960 / 48.33, False),
    ("STREAM-COPY", 10000, 0.17, 0.89, 0.84, 282.43, 35.50, 5720 / 34.67, False),
    ("STREAM-FULL", 10000, 0.16, 0.93, 0.70, 49.31, 222.40, 28270 / 172.33, False),
    ("STREAM-PHASE", 10000, 0.17, 0.91, 0.88, 240.16, 83.00, 13830 / 84.33, False),
    ("NPB-CG", 1000, 0.49, 0.37, 0.62, 9.97, 114.00, 15080 / 101.00, False),
    ("NPB-BT", 1000, 0.97, 0.87, 0.30, 6.22, 166.00, 22990 / 140.00, False),
]

# Rows whose iterations / avg progress misses the measured ET by more than this
# run at the effective rate iterations / ET instead.
_ET_SLACK = 0.05


def _second_rate(iters_first: float, rate_first: float, iters_second: float, target_s: float) -> float:
    rest = target_s - iters_first / rate_first
    if rest <= 0:
        raise ValueError("first phase already exceeds the target time")
    return iters_second / rest


def _make_profile(row) -> BenchmarkProfile:
    name, iters, ipc, cmr, stl, prog, et, draw, train = row
    draw = min(draw, DEFAULT_GRID.max_watts)
    memory = cmr >= 0.8
    knee = MEMORY_KNEE if memory else draw
    if name != "STREAM-PHASE" and abs(iters / prog - et) / et > _ET_SLACK:
        prog = round(iters / et, 2)
    base = BenchmarkProfile(
        name=name,
        p_idle=P_IDLE,
        p_max_draw=round(draw, 2),
        p_knee=round(knee, 2),
        progress_max=prog,
        response_exp=MEMORY_EXP if memory else COMPUTE_EXP,
        ipc_base=ipc,
        stl_base=stl,
        cmr_base=cmr,
        total_iterations=iters,
        train=train,
    )
    if name == "STREAM-PHASE":
        # kernel-only and full-benchmark passes alternate in quarters; the full
        # passes run at whatever rate makes the whole run last the measured ET
        # (half a step short, so whole-step run lengths straddle it)
        full_rate = _second_rate(iters / 2, prog, iters / 2, et - 0.5)
        full = dict(progress_max=round(full_rate, 2), ipc_base=0.16, stl_base=0.70, cmr_base=0.93)
        return replace(base, phases=(Phase(0.0), Phase(0.25, **full), Phase(0.5), Phase(0.75, **full)))
    return base


def builtin_profiles() -> list[BenchmarkProfile]:
    """Twelve profiles calibrated on the benchmark characterisation table."""
    return [_make_profile(row) for row in _TABLE]


def profile_by_name(name: str, profiles=None) -> BenchmarkProfile:
    profiles = builtin_profiles() if profiles is None else profiles
    for p in profiles:
        if p.name == name:
            return p
    names = ", ".join(p.name for p in profiles)
    raise KeyError(f"unknown profile {name!r}; available: {names}")


def save_profiles(profiles, path) -> None:
    doc = {"format": "powercql-profiles", "version": 1, "profiles": [p.to_dict() for p in profiles]}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def load_profiles(path) -> list[BenchmarkProfile]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read profiles {path}: {exc}") from exc
    if doc.get("format") != "powercql-profiles":
        raise DataError(f"{path}: not a profile file")
    return [BenchmarkProfile.from_dict(d) for d in doc.get("profiles", [])]
