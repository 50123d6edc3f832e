"""Trajectory ensembles and finite-horizon proxies for the dichotomy.

"||X_n|| -> infinity" is not observable; the ensemble commits to a
finite-horizon proxy: a trajectory counts as growth when it sits above
the threshold R at the horizon and never dipped to the return level s
after burn-in (trajectories that crossed the population ceiling count as
growth by construction and are flagged). Defaults s = 50, R = 1e4,
burn-in = T/10.

Randomness is counter-based (Philox): every consumer gets its own
counter block keyed by (master seed, namespace, index), so ensembles are
reproducible and order-independent. The per-trajectory engine gives each
trajectory its own stream (namespace 0, index = trajectory); the
lockstep engine advances all trajectories one generation at a time from
per-generation streams (namespace 1, index = generation), trading the
per-trajectory stream layout for vectorized sampling at identical
statistics. Reports record the engine; each is bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigError, PopulationOverflow
from .models import GwiModel, Model, as_state
from .spectral import CRITICALITY_TOL, PerronData, perron

NS_TRAJECTORY = 0
NS_LOCKSTEP = 1
NS_LYAPUNOV = 2
NS_CRITERION = 3
NS_AUDIT = 4

GROWTH_VERDICT_FLOOR = 0.01
MIXED_THRESHOLD = 0.05


def substream(seed: int, namespace: int, index: int) -> np.random.Generator:
    """Independent deterministic stream in the (namespace, index) counter
    block of a Philox generator keyed by the master seed."""
    bit_gen = np.random.Philox(key=np.uint64(seed),
                               counter=[0, 0, np.uint64(namespace),
                                        np.uint64(index)])
    return np.random.Generator(bit_gen)


def wilson_interval(successes: int, n: int, z: float = 1.96) -> tuple:
    """Wilson 95% score interval; well-behaved near 0 and 1."""
    if n == 0:
        return (0.0, 1.0)
    phat = successes / n
    denom = 1.0 + z * z / n
    center = (phat + z * z / (2 * n)) / denom
    half = z * np.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


class Engine(str, Enum):
    PER_TRAJECTORY = "per_trajectory"
    LOCKSTEP = "lockstep"


@dataclass(frozen=True)
class SimConfig:
    """Ensemble parameters; burn_in defaults to horizon // 10."""

    horizon: int
    n_traj: int
    seed: int
    s: float = 50.0
    R: float = 1e4
    burn_in: int | None = None
    ceiling: int = 10**12
    engine: Engine = Engine.PER_TRAJECTORY

    def __post_init__(self):
        object.__setattr__(self, "engine", Engine(self.engine))
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if self.n_traj < 1:
            raise ConfigError(f"n_traj must be >= 1, got {self.n_traj}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must fit in 64 bits")
        if self.burn_in is None:
            object.__setattr__(self, "burn_in", self.horizon // 10)
        if not 0 <= self.burn_in < self.horizon:
            raise ConfigError(
                f"burn_in must lie in [0, horizon), got {self.burn_in}")
        if not 0 < self.s < self.R:
            raise ConfigError(f"need 0 < s < R, got s={self.s}, R={self.R}")
        if self.ceiling < 1:
            raise ConfigError("ceiling must be positive")

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon, "n_traj": self.n_traj, "seed": self.seed,
            "s": self.s, "R": self.R, "burn_in": self.burn_in,
            "ceiling": self.ceiling, "engine": self.engine.value,
        }


@dataclass
class TrajectorySummary:
    index: int
    final_state: list
    final_u: float
    min_u_post: float
    max_u_post: float
    returns_below_s: int
    absorption_time: int | None
    ceiling_crossed: bool
    overflowed: bool
    truncated_at: int | None

    @property
    def truncated(self) -> bool:
        return self.truncated_at is not None

    def classify(self, s: float, R: float) -> str:
        """growth / bounded / mid under the finite-horizon proxy."""
        if self.ceiling_crossed or self.overflowed:
            return "growth"
        if self.final_u > R and self.min_u_post > s:
            return "growth"
        if self.final_u <= s:
            return "bounded"
        return "mid"

    def to_dict(self) -> dict:
        return {
            "index": self.index, "final_state": list(self.final_state),
            "final_u": self.final_u, "min_u_post": self.min_u_post,
            "max_u_post": self.max_u_post,
            "returns_below_s": self.returns_below_s,
            "absorption_time": self.absorption_time,
            "ceiling_crossed": self.ceiling_crossed,
            "overflowed": self.overflowed, "truncated_at": self.truncated_at,
        }


def simulate_trajectory(m: Model, x0, cfg: SimConfig, traj_index: int,
                        pd: PerronData | None = None) -> TrajectorySummary:
    """One trajectory on its own counter-based stream.

    Runs for `horizon` generations or until absorption (absorbing models)
    or the population ceiling; overflow trips flag the trajectory rather
    than truncating silently.
    """
    if pd is None:
        pd = perron(m.mean_matrix())
    rng = substream(cfg.seed, NS_TRAJECTORY, traj_index)
    state = as_state(x0, m.dim)
    if m.absorbing and not state.any():
        raise ConfigError("absorbing models need a non-zero start state")
    u = pd.u
    proj = float(state @ u)
    min_post, max_post = None, None
    returns = 0
    absorption_time = None
    ceiling_crossed = False
    overflowed = False
    truncated_at = None
    if float(state.sum(dtype=np.float64)) > cfg.ceiling:
        ceiling_crossed = True
        truncated_at = 0
    else:
        for t in range(1, cfg.horizon + 1):
            prev = proj
            try:
                state = m.step(state, rng)
            except PopulationOverflow:
                overflowed = True
                truncated_at = t
                break
            proj = float(state @ u)
            if t > cfg.burn_in:
                min_post = proj if min_post is None else min(min_post, proj)
                max_post = proj if max_post is None else max(max_post, proj)
                if prev > cfg.s >= proj:
                    returns += 1
            if m.absorbing and not state.any():
                absorption_time = t
                break
            if float(state.sum(dtype=np.float64)) > cfg.ceiling:
                ceiling_crossed = True
                truncated_at = t
                break
    if absorption_time is not None:
        # the state stays at zero through the rest of the window
        min_post = 0.0
        max_post = max_post if max_post is not None else 0.0
    if min_post is None:
        min_post = max_post = proj
    return TrajectorySummary(
        index=traj_index, final_state=state.tolist(), final_u=proj,
        min_u_post=min_post, max_u_post=max_post, returns_below_s=returns,
        absorption_time=absorption_time, ceiling_crossed=ceiling_crossed,
        overflowed=overflowed, truncated_at=truncated_at)


def _run_lockstep(m: Model, x0, cfg: SimConfig, pd: PerronData) -> list:
    """All trajectories advanced one generation at a time, vectorized."""
    n = cfg.n_traj
    x0 = as_state(x0, m.dim)
    if m.absorbing and not x0.any():
        raise ConfigError("absorbing models need a non-zero start state")
    states = np.tile(x0, (n, 1))
    u = pd.u
    projs = np.full(n, float(x0 @ u))
    active = np.ones(n, dtype=bool)
    min_post = np.full(n, np.nan)
    max_post = np.full(n, np.nan)
    returns = np.zeros(n, dtype=np.int64)
    absorption_time = np.full(n, -1, dtype=np.int64)
    ceiling_crossed = np.zeros(n, dtype=bool)
    overflowed = np.zeros(n, dtype=bool)
    truncated_at = np.full(n, -1, dtype=np.int64)
    if float(x0.sum(dtype=np.float64)) > cfg.ceiling:
        ceiling_crossed[:] = True
        truncated_at[:] = 0
        active[:] = False
    for t in range(1, cfg.horizon + 1):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        rng = substream(cfg.seed, NS_LOCKSTEP, t)
        try:
            stepped = m.step_batch(states[idx], rng)
        except PopulationOverflow:
            # isolate the offending rows with scalar steps on the same stream
            stepped = np.empty((idx.size, m.dim), dtype=np.int64)
            for j, row in enumerate(idx):
                try:
                    stepped[j] = m.step(states[row], rng)
                except PopulationOverflow:
                    stepped[j] = states[row]
                    overflowed[row] = True
                    truncated_at[row] = t
        new_projs = stepped.astype(float) @ u
        if t > cfg.burn_in:
            lo = np.fmin(min_post[idx], new_projs)
            hi = np.fmax(max_post[idx], new_projs)
            min_post[idx] = np.where(np.isnan(min_post[idx]), new_projs, lo)
            max_post[idx] = np.where(np.isnan(max_post[idx]), new_projs, hi)
            returns[idx] += (projs[idx] > cfg.s) & (new_projs <= cfg.s)
        states[idx] = stepped
        projs[idx] = new_projs
        if m.absorbing:
            dead = idx[~stepped.any(axis=1)]
            absorption_time[dead] = t
            active[dead] = False
        over = idx[stepped.sum(axis=1, dtype=np.float64) > cfg.ceiling]
        ceiling_crossed[over] = True
        truncated_at[over] = t
        active[over] = False
        just_overflowed = idx[overflowed[idx]]
        active[just_overflowed] = False
    min_post[absorption_time >= 0] = 0.0
    max_post[(absorption_time >= 0) & np.isnan(max_post)] = 0.0
    summaries = []
    for i in range(n):
        lo = projs[i] if np.isnan(min_post[i]) else min_post[i]
        hi = projs[i] if np.isnan(max_post[i]) else max_post[i]
        summaries.append(TrajectorySummary(
            index=i, final_state=states[i].tolist(), final_u=float(projs[i]),
            min_u_post=float(lo), max_u_post=float(hi),
            returns_below_s=int(returns[i]),
            absorption_time=(int(absorption_time[i])
                             if absorption_time[i] >= 0 else None),
            ceiling_crossed=bool(ceiling_crossed[i]),
            overflowed=bool(overflowed[i]),
            truncated_at=(int(truncated_at[i])
                          if truncated_at[i] >= 0 else None)))
    return summaries


@dataclass
class EnsembleReport:
    """Aggregated trajectory statistics with the dichotomy proxy verdict."""

    cfg: SimConfig
    x0: list
    engine: Engine
    n_traj: int
    absorbing: bool
    survival_fraction: float | None
    survival_wilson: tuple | None
    growth_fraction: float
    growth_wilson: tuple
    bounded_fraction: float
    mid_fraction: float
    verdict: str
    mean_final_u: float
    se_final_u: float
    mean_final_u_predicted: float | None
    returns_below_s_median: float
    absorption_histogram: dict
    ceiling_count: int
    overflow_count: int
    truncated_excluded_from_mean: int
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "sim": self.cfg.to_dict(), "x0": list(self.x0),
            "engine": self.engine.value, "n_traj": self.n_traj,
            "absorbing": self.absorbing,
            "survival_fraction": self.survival_fraction,
            "survival_wilson": (list(self.survival_wilson)
                                if self.survival_wilson else None),
            "growth_fraction": self.growth_fraction,
            "growth_wilson": list(self.growth_wilson),
            "bounded_fraction": self.bounded_fraction,
            "mid_fraction": self.mid_fraction,
            "verdict": self.verdict,
            "mean_final_u": self.mean_final_u,
            "se_final_u": self.se_final_u,
            "mean_final_u_predicted": self.mean_final_u_predicted,
            "returns_below_s_median": self.returns_below_s_median,
            "absorption_histogram": self.absorption_histogram,
            "ceiling_count": self.ceiling_count,
            "overflow_count": self.overflow_count,
            "truncated_excluded_from_mean": self.truncated_excluded_from_mean,
            "notes": list(self.notes),
        }


def _dichotomy_verdict(growth: float, mid: float) -> str:
    if mid > MIXED_THRESHOLD:
        return "mixed"
    if growth >= GROWTH_VERDICT_FLOOR:
        return "growth_observed"
    return "extinct_or_bounded"


def aggregate(summaries: list, m: Model, x0, cfg: SimConfig,
              pd: PerronData, engine: Engine) -> EnsembleReport:
    n = len(summaries)
    classes = [t.classify(cfg.s, cfg.R) for t in summaries]
    growth_n = sum(c == "growth" for c in classes)
    bounded_n = sum(c == "bounded" for c in classes)
    mid_n = n - growth_n - bounded_n
    growth_fraction = growth_n / n
    mid_fraction = mid_n / n
    finals = np.array([t.final_u for t in summaries if not t.truncated])
    excluded = n - finals.size
    mean_final = float(finals.mean()) if finals.size else float("nan")
    se_final = (float(finals.std(ddof=1) / np.sqrt(finals.size))
                if finals.size > 1 else 0.0)
    predicted = None
    if isinstance(m, GwiModel) and abs(pd.rho - 1.0) <= CRITICALITY_TOL:
        # E(Z_{n+1}) = E(Z_n) M + a projects to a + u-drift of a.u per step
        predicted = float(np.asarray(x0, dtype=float) @ pd.u
                          + cfg.horizon * float(m.imm_mean @ pd.u))
    survival = survival_wilson = None
    if m.absorbing:
        alive = sum(t.absorption_time is None for t in summaries)
        survival = alive / n
        survival_wilson = wilson_interval(alive, n)
    abs_times = [t.absorption_time for t in summaries
                 if t.absorption_time is not None]
    bins = np.linspace(0, cfg.horizon, 21)
    counts, _ = np.histogram(abs_times, bins=bins)
    notes = []
    verdict = _dichotomy_verdict(growth_fraction, mid_fraction)
    if verdict == "mixed":
        notes.append(f"{mid_fraction:.1%} of trajectories ended between "
                     "s and R; the horizon is probably too short for a "
                     "clean verdict -- increase it")
    return EnsembleReport(
        cfg=cfg, x0=list(np.asarray(x0).tolist()), engine=engine, n_traj=n,
        absorbing=m.absorbing,
        survival_fraction=survival, survival_wilson=survival_wilson,
        growth_fraction=growth_fraction,
        growth_wilson=wilson_interval(growth_n, n),
        bounded_fraction=bounded_n / n, mid_fraction=mid_fraction,
        verdict=verdict,
        mean_final_u=mean_final, se_final_u=se_final,
        mean_final_u_predicted=predicted,
        returns_below_s_median=float(np.median(
            [t.returns_below_s for t in summaries])),
        absorption_histogram={"bin_edges": bins.tolist(),
                              "counts": counts.tolist()},
        ceiling_count=sum(t.ceiling_crossed for t in summaries),
        overflow_count=sum(t.overflowed for t in summaries),
        truncated_excluded_from_mean=excluded,
        notes=notes,
    )


def run_ensemble(m: Model, x0, cfg: SimConfig,
                 pd: PerronData | None = None,
                 keep_summaries: bool = False):
    """n_traj independent trajectories, aggregated; deterministic given
    (model, x0, cfg). Returns the report, or (report, summaries)."""
    if pd is None:
        pd = perron(m.mean_matrix())
    if cfg.engine is Engine.LOCKSTEP:
        summaries = _run_lockstep(m, x0, cfg, pd)
    else:
        summaries = [simulate_trajectory(m, x0, cfg, i, pd)
                     for i in range(cfg.n_traj)]
    report = aggregate(summaries, m, x0, cfg, pd, cfg.engine)
    if keep_summaries:
        return report, summaries
    return report


@dataclass
class ProbeResult:
    verdict: str
    growth_fraction: float
    bounded_fraction: float
    mid_fraction: float
    growth_wilson: tuple

    def to_dict(self) -> dict:
        return {"verdict": self.verdict,
                "growth_fraction": self.growth_fraction,
                "bounded_fraction": self.bounded_fraction,
                "mid_fraction": self.mid_fraction,
                "growth_wilson": list(self.growth_wilson)}


def probe_from_report(report: EnsembleReport) -> ProbeResult:
    return ProbeResult(
        verdict=report.verdict,
        growth_fraction=report.growth_fraction,
        bounded_fraction=report.bounded_fraction,
        mid_fraction=report.mid_fraction,
        growth_wilson=report.growth_wilson)


def dichotomy_probe(m: Model, x0, cfg: SimConfig,
                    pd: PerronData | None = None) -> ProbeResult:
    """Finite-horizon growth-vs-bounded classification of an ensemble."""
    return probe_from_report(run_ensemble(m, x0, cfg, pd))
