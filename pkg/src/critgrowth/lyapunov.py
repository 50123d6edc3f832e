"""Empirical checks of the supermartingale machinery and assumptions.

Probes whether log(X.u) (extinction regime) or 1/log(X.u) (growth
regime) behaves as a k-step supermartingale at chosen states, scans for
the smallest working k, compares moments of the k-step increment
Delta = X_{n+k}.u - X_n.u against their theoretical scaling, and audits
the moment/positivity assumptions the classification relies on. All
verdicts are statistical: a two-standard-error band turns exact
inequalities into decisions on finite samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import PreconditionError
from .models import Model, as_state
from .spectral import PerronData

DEFAULT_BAND = 2.0
DEFAULT_PROJECTIONS = (1e2, 1e3, 1e4)
DEFAULT_OFF_RAY = 0.2
INVLOG_FLOOR = 3.0


class Phi(str, Enum):
    LOG = "log"
    INVLOG = "invlog"


class Verdict(str, Enum):
    SATISFIED = "satisfied"
    VIOLATED = "violated"
    INDETERMINATE = "indeterminate"


def phi_value(phi: Phi, u_proj: float) -> float:
    """phi at a probe state; preconditions x.u > 1 (log), x.u > 3 (invlog)."""
    if phi is Phi.LOG:
        if u_proj <= 1.0:
            raise PreconditionError(
                f"log probe needs x.u > 1, got {u_proj}")
        return math.log(u_proj)
    if u_proj <= INVLOG_FLOOR:
        raise PreconditionError(
            f"invlog probe needs x.u > {INVLOG_FLOOR}, got {u_proj}")
    return 1.0 / math.log(u_proj)


def _phi_terminal(phi: Phi, projs: np.ndarray):
    """phi over terminal u-projections.

    For invlog, projections below 3 are shifted by +3 (the +3v device:
    adding 3v raises x.u by exactly 3 under the normalization v u = 1),
    so the value is defined everywhere. For log, paths at zero have no
    value; they come back as the excluded mask.
    """
    if phi is Phi.LOG:
        excluded = projs <= 0.0
        return np.log(projs[~excluded]), excluded
    shifted = np.where(projs < INVLOG_FLOOR, projs + INVLOG_FLOOR, projs)
    return 1.0 / np.log(shifted), np.zeros(projs.shape, dtype=bool)


@dataclass
class GapRecord:
    """One supermartingale probe: mean phi gap over k steps with its SE."""

    state: list
    u_proj: float
    phi: Phi
    k: int
    n_samples: int
    gap: float
    se: float
    verdict: Verdict
    absorbed_fraction: float

    def to_dict(self) -> dict:
        return {
            "state": list(self.state), "u_proj": self.u_proj,
            "phi": self.phi.value, "k": self.k, "n_samples": self.n_samples,
            "gap": self.gap, "se": self.se, "verdict": self.verdict.value,
            "absorbed_fraction": self.absorbed_fraction,
        }


def _gap_from_projs(phi, projs, base_value, band):
    values, excluded = _phi_terminal(phi, projs)
    absorbed_fraction = float(excluded.mean())
    if values.size < 2:
        return float("nan"), float("nan"), Verdict.INDETERMINATE, absorbed_fraction
    gap = float(values.mean() - base_value)
    se = float(values.std(ddof=1) / np.sqrt(values.size))
    if gap + band * se <= 0.0:
        verdict = Verdict.SATISFIED
    elif gap - band * se >= 0.0:
        verdict = Verdict.VIOLATED
    else:
        verdict = Verdict.INDETERMINATE
    return gap, se, verdict, absorbed_fraction


def check_supermartingale(m: Model, pd: PerronData, phi: Phi, x, k: int,
                          n_samples: int, rng, band: float = DEFAULT_BAND) -> GapRecord:
    """Estimate E[phi(X_{n+k}.u) | X_n = x] - phi(x.u) by simulation.

    Paths absorbed at zero have no log value; they are excluded from the
    mean and disclosed through absorbed_fraction.
    """
    phi = Phi(phi)
    x = as_state(x, m.dim)
    u0 = pd.projection(x)
    base = phi_value(phi, u0)
    states = np.tile(x, (n_samples, 1))
    for _ in range(k):
        states = m.step_batch(states, rng)
    projs = states.astype(float) @ pd.u
    gap, se, verdict, absorbed = _gap_from_projs(phi, projs, base, band)
    return GapRecord(state=x.tolist(), u_proj=u0, phi=phi, k=k,
                     n_samples=n_samples, gap=gap, se=se, verdict=verdict,
                     absorbed_fraction=absorbed)


@dataclass
class ScanResult:
    """Outcome of the smallest-k search.

    k is None when no k <= k_max satisfied the whole grid (finite
    evidence cannot refute the lemma's existence claim, so this is a
    report, not an error). s_implied is the smallest probed u-projection.
    """

    phi: Phi
    k: int | None
    k_max: int
    s_implied: float
    records: list = field(default_factory=list)   # GapRecords at found k
    history: list = field(default_factory=list)   # (k, satisfied_count, n_states)

    def to_dict(self) -> dict:
        return {
            "phi": self.phi.value, "k": self.k, "k_max": self.k_max,
            "s_implied": self.s_implied,
            "records": [r.to_dict() for r in self.records],
            "history": [list(h) for h in self.history],
        }


def scan_k(m: Model, pd: PerronData, phi: Phi, x_grid, k_max: int,
           n_samples: int, rng, band: float = DEFAULT_BAND) -> ScanResult:
    """Smallest k <= k_max with Satisfied verdicts at every grid state.

    One batch of trajectories per state is advanced k_max steps and the
    gap is read off at every intermediate k, so the scan costs one
    simulation sweep rather than k_max of them.
    """
    phi = Phi(phi)
    grid = [as_state(x, m.dim) for x in x_grid]
    if not grid:
        raise PreconditionError("state grid must be non-empty")
    projections = [pd.projection(x) for x in grid]
    order = np.argsort(projections)
    grid = [grid[i] for i in order]
    projections = [projections[i] for i in order]
    bases = [phi_value(phi, p) for p in projections]
    per_state_gaps = []   # [state][k-1] -> (gap, se, verdict, absorbed)
    for x, base in zip(grid, bases):
        states = np.tile(x, (n_samples, 1))
        gaps = []
        for _ in range(k_max):
            states = m.step_batch(states, rng)
            projs = states.astype(float) @ pd.u
            gaps.append(_gap_from_projs(phi, projs, base, band))
        per_state_gaps.append(gaps)
    found = None
    history = []
    for k in range(1, k_max + 1):
        verdicts = [gaps[k - 1][2] for gaps in per_state_gaps]
        satisfied = sum(v is Verdict.SATISFIED for v in verdicts)
        history.append((k, satisfied, len(grid)))
        if found is None and satisfied == len(grid):
            found = k
    records = []
    if found is not None:
        for x, u0, gaps in zip(grid, projections, per_state_gaps):
            gap, se, verdict, absorbed = gaps[found - 1]
            records.append(GapRecord(
                state=x.tolist(), u_proj=u0, phi=phi, k=found,
                n_samples=n_samples, gap=gap, se=se, verdict=verdict,
                absorbed_fraction=absorbed))
    return ScanResult(phi=phi, k=found, k_max=k_max,
                      s_implied=min(projections), records=records,
                      history=history)


@dataclass
class MomentRecord:
    """Moments of the k-step increment at one state vs their references."""

    state: list
    u_proj: float
    k: int
    n_samples: int
    mean_delta: float
    se_delta: float
    mean_delta2: float
    se_delta2: float
    mean_abs_delta_2pd: float
    se_abs_delta_2pd: float
    ref_mean: float          # c1 k (x.u)^alpha
    ref_second: float        # k d1 (x.u)^(1+alpha)
    resid_mean_norm: float   # |E[D] - ref| / (x.u)^alpha
    resid_second_norm: float
    transverse_norm: float   # ||x (I - uv)||

    def to_dict(self) -> dict:
        return self.__dict__ | {"state": list(self.state)}


@dataclass
class MomentScan:
    k: int
    delta_exponent: float    # the 2+delta moment actually taken
    records: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"k": self.k, "delta_exponent": self.delta_exponent,
                "records": [r.to_dict() for r in self.records]}


def moment_scan(m: Model, pd: PerronData, x_grid, k: int, n_samples: int,
                c1: float, d1: float, rng) -> MomentScan:
    """Empirical E[Delta], E[Delta^2], E[|Delta|^(2+delta)] on a state grid.

    The residuals are normalized by the scaling references; along the rv
    ray the transverse component vanishes and the normalized residuals
    should shrink as the projection grows.
    """
    alpha = m.alpha
    exponent = 2.0 + m.delta
    records = []
    for x in x_grid:
        x = as_state(x, m.dim)
        u0 = pd.projection(x)
        states = np.tile(x, (n_samples, 1))
        for _ in range(k):
            states = m.step_batch(states, rng)
        delta = states.astype(float) @ pd.u - u0
        d2 = delta**2
        dabs = np.abs(delta)**exponent
        sqrt_n = np.sqrt(n_samples)
        ref_mean = c1 * k * u0**alpha
        ref_second = k * d1 * u0**(1.0 + alpha)
        records.append(MomentRecord(
            state=x.tolist(), u_proj=u0, k=k, n_samples=n_samples,
            mean_delta=float(delta.mean()),
            se_delta=float(delta.std(ddof=1) / sqrt_n),
            mean_delta2=float(d2.mean()),
            se_delta2=float(d2.std(ddof=1) / sqrt_n),
            mean_abs_delta_2pd=float(dabs.mean()),
            se_abs_delta_2pd=float(dabs.std(ddof=1) / sqrt_n),
            ref_mean=ref_mean, ref_second=ref_second,
            resid_mean_norm=float(abs(delta.mean() - ref_mean) / u0**alpha),
            resid_second_norm=float(abs(d2.mean() - ref_second)
                                    / u0**(1.0 + alpha)),
            transverse_norm=float(np.linalg.norm(pd.transverse(x))),
        ))
    return MomentScan(k=k, delta_exponent=exponent, records=records)


def default_state_grid(pd: PerronData, projections=DEFAULT_PROJECTIONS,
                       off_ray: float = DEFAULT_OFF_RAY) -> list:
    """Probe states: roundings of (proj) v plus two off-ray perturbations
    per magnitude (one coordinate shifted by +-off_ray * x.u, clamped at
    zero) to exercise the transverse terms."""
    grid = []
    for proj in projections:
        base = np.maximum(np.rint(proj * pd.v), 0.0).astype(np.int64)
        if base.sum() == 0:
            continue
        grid.append(base)
        bump = int(round(off_ray * pd.projection(base)))
        for sign in (+1, -1):
            shifted = base.copy()
            shifted[0] = max(0, shifted[0] + sign * bump)
            grid.append(shifted)
    seen, unique = set(), []
    for state in grid:
        key = tuple(state.tolist())
        if key not in seen:
            seen.add(key)
            unique.append(state)
    return unique


@dataclass
class AuditReport:
    """Findings of the assumption audit (reported, never blocking)."""

    delta: float
    moment_ratio_by_state: list    # (state, ratio E||xi||^(2+d) / sigma^(2+d))
    moment_ratio_max: float
    drift_u_by_state: list
    drift_u_min: float
    drift_annulus: tuple           # (min proj, max proj) probed
    drift_positive: bool
    sigma2_by_state: list
    sigma2_max: float
    sigma2_ball_max: list          # (ball radius, max sigma^2 inside)
    increase_prob_by_state: list   # proxy for unboundedness
    increase_prob_min: float
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        def rows(pairs):
            return [{"state": list(s), "value": v} for s, v in pairs]
        return {
            "delta": self.delta,
            "moment_ratio": {"by_state": rows(self.moment_ratio_by_state),
                             "max": self.moment_ratio_max},
            "drift_u": {"by_state": rows(self.drift_u_by_state),
                        "min": self.drift_u_min,
                        "annulus": list(self.drift_annulus),
                        "positive": self.drift_positive},
            "sigma2": {"by_state": rows(self.sigma2_by_state),
                       "max": self.sigma2_max,
                       "ball_max": [{"radius": r, "max": v}
                                    for r, v in self.sigma2_ball_max]},
            "increase_prob": {"by_state": rows(self.increase_prob_by_state),
                              "min": self.increase_prob_min,
                              "proxy": "P(one-step strict u-increase) > 0 "
                                       "checked on the grid; this is a "
                                       "sufficient proxy, not a verification"},
            "notes": list(self.notes),
        }


def assumption_audit(m: Model, pd: PerronData, grid, rng,
                     n_samples: int = 20_000) -> AuditReport:
    """Audit the moment bound, drift positivity, variance finiteness and
    the unboundedness proxy over a state grid."""
    delta = m.delta
    exponent = 2.0 + delta
    moment_rows, drift_rows, sigma_rows, incr_rows = [], [], [], []
    notes = []
    for x in grid:
        x = as_state(x, m.dim)
        u0 = pd.projection(x)
        states = np.tile(x, (n_samples, 1))
        stepped = m.step_batch(states, rng)
        mean_next = x.astype(float) @ m.mean_matrix() + m.drift(x)
        xi = stepped.astype(float) - mean_next
        s2 = m.sigma2(x, pd)
        if s2 is None:
            s2 = float(((xi @ pd.u)**2).mean())
        key = x.tolist()
        if s2 > 0:
            ratio = float((np.linalg.norm(xi, axis=1)**exponent).mean()
                          / s2**(exponent / 2.0))
        else:
            ratio = float("inf")
            notes.append(f"sigma^2 = 0 at state {key}; moment ratio undefined")
        moment_rows.append((key, ratio))
        drift_rows.append((key, float(m.drift(x) @ pd.u)))
        sigma_rows.append((key, float(s2)))
        incr_rows.append(
            (key, float((stepped.astype(float) @ pd.u > u0).mean())))
    drift_min = min(v for _, v in drift_rows)
    projections = [pd.projection(np.asarray(s)) for s, _ in drift_rows]
    if drift_min <= 0.0:
        notes.append("drift g(x).u is not bounded away from zero on the "
                     "grid; the unlimited-growth direction of the "
                     "criterion does not apply")
    finite_ratios = [v for _, v in moment_rows if np.isfinite(v)]
    # sup of sigma^2 over balls ||x|| < a, at radii just above each probe
    norms = [float(np.linalg.norm(s)) for s, _ in sigma_rows]
    ball_max = []
    for radius in sorted(set(np.ceil(n) + 1 for n in norms)):
        inside = [v for n, (_, v) in zip(norms, sigma_rows) if n < radius]
        ball_max.append((float(radius), max(inside)))
    return AuditReport(
        delta=delta,
        moment_ratio_by_state=moment_rows,
        moment_ratio_max=max(finite_ratios) if finite_ratios else float("nan"),
        drift_u_by_state=drift_rows,
        drift_u_min=drift_min,
        drift_annulus=(min(projections), max(projections)),
        drift_positive=drift_min > 0.0,
        sigma2_by_state=sigma_rows,
        sigma2_max=max(v for _, v in sigma_rows),
        sigma2_ball_max=ball_max,
        increase_prob_by_state=incr_rows,
        increase_prob_min=min(v for _, v in incr_rows),
        notes=notes,
    )
