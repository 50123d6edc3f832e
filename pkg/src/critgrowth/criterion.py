"""Growth/extinction classification for critical models.

Implements the criticality trichotomy from the Perron root, the ratio
2 r g(rv).u / sigma^2(rv) whose limit decides boundedness, finite-radius
estimation of the drift constant c1 and variance constant d1, the
resulting three-way growth verdict (2 c1 vs d1, Inconclusive inside the
uncertainty band), the exact recurrence/transience comparison for
branching-with-immigration models, and the closed-form survival
threshold of the two-type cell-division model.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DegenerateVarianceError, PreconditionError
from .models import GwiModel, Model
from .spectral import CRITICALITY_TOL, PerronData

DEFAULT_RADII = (1e2, 1e3, 1e4, 1e5, 1e6)
GWI_EQUALITY_TOL = 1e-12
NON_STABILIZING_SPREAD = 0.25
DEFAULT_SIGMA2_SAMPLES = 100_000


class Criticality(str, Enum):
    SUBCRITICAL = "subcritical"
    CRITICAL = "critical"
    SUPERCRITICAL = "supercritical"


class Growth(str, Enum):
    BOUNDED_AS = "bounded_as"
    UNBOUNDED_POSITIVE_PROB = "unbounded_positive_prob"
    INCONCLUSIVE = "inconclusive"


class GwiVerdict(str, Enum):
    RECURRENT = "recurrent"
    TRANSIENT = "transient"
    INCONCLUSIVE = "inconclusive"


def classify_criticality(pd: PerronData, tol: float = CRITICALITY_TOL) -> Criticality:
    if pd.rho < 1.0 - tol:
        return Criticality.SUBCRITICAL
    if pd.rho > 1.0 + tol:
        return Criticality.SUPERCRITICAL
    return Criticality.CRITICAL


def _require_critical(pd: PerronData, tol: float = CRITICALITY_TOL) -> None:
    if classify_criticality(pd, tol) is not Criticality.CRITICAL:
        raise PreconditionError(
            f"operation requires a critical model (rho = {pd.rho!r})")


def _sigma2_at(m: Model, pd: PerronData, x: np.ndarray, rng, n_samples: int):
    """sigma^2 at a (real) state: analytic when the model has it, else a
    one-step Monte Carlo estimate at the coordinate-wise rounding of x.

    Returns (value, standard_error, estimated_flag).
    """
    value = m.sigma2(x, pd)
    if value is not None:
        return float(value), 0.0, False
    if rng is None:
        raise PreconditionError(
            "model has no analytic sigma^2; pass an rng for estimation")
    state = np.maximum(np.rint(np.asarray(x, dtype=float)), 0.0).astype(np.int64)
    batch = np.tile(state, (n_samples, 1))
    stepped = m.step_batch(batch, rng)
    mean_next = state.astype(float) @ m.mean_matrix() + m.drift(state)
    xi_u = stepped.astype(float) @ pd.u - float(mean_next @ pd.u)
    sq = xi_u**2
    return float(sq.mean()), float(sq.std(ddof=1) / np.sqrt(n_samples)), True


def growth_ratio(m: Model, pd: PerronData, r: float, rng=None,
                 n_samples: int = DEFAULT_SIGMA2_SAMPLES) -> float:
    """The finite-r ratio 2 r g(rv).u / sigma^2(rv)."""
    _require_critical(pd)
    if r <= 0:
        raise PreconditionError(f"radius must be positive, got {r}")
    x = r * pd.v
    gu = float(m.drift(x) @ pd.u)
    s2, _, _ = _sigma2_at(m, pd, x, rng, n_samples)
    if s2 <= 0.0:
        raise DegenerateVarianceError(
            f"sigma^2(rv) = {s2} at r = {r}; the growth criterion is undefined")
    return 2.0 * r * gu / s2


@dataclass
class C1D1Estimate:
    """Finite-radius estimates of the drift/variance constants.

    c1 tracks g(rv).u / (rv.u)^alpha and d1 tracks
    sigma^2(rv) / (rv.u)^(1+alpha) along the radii schedule; the limits
    are read off by extrapolating the last three radii linearly in 1/r,
    which removes exactly the leading finite-size residual (for
    branching-with-immigration the tau^2 / r term). Higher-order
    residuals and Monte Carlo error are folded into the uncertainties.
    """

    c1: float
    c1_unc: float
    d1: float
    d1_unc: float
    alpha: float
    c1_samples: list = field(default_factory=list)   # (r, value)
    d1_samples: list = field(default_factory=list)
    stabilized: bool = True
    sigma2_estimated: bool = False
    notes: list = field(default_factory=list)

    @property
    def combined_uncertainty(self) -> float:
        """Uncertainty on the comparison scale of 2 c1 vs d1."""
        return 2.0 * self.c1_unc + self.d1_unc

    def to_dict(self) -> dict:
        return {
            "c1": self.c1, "c1_uncertainty": self.c1_unc,
            "d1": self.d1, "d1_uncertainty": self.d1_unc,
            "alpha": self.alpha,
            "c1_samples": [[r, v] for r, v in self.c1_samples],
            "d1_samples": [[r, v] for r, v in self.d1_samples],
            "stabilized": self.stabilized,
            "sigma2_estimated": self.sigma2_estimated,
            "notes": list(self.notes),
        }


def _intercept_in_inv_r(radii, values, ses):
    """Least-squares intercept of value = a + b/r, with propagated SE."""
    radii = np.asarray(radii, dtype=float)
    values = np.asarray(values, dtype=float)
    design = np.column_stack([np.ones_like(radii), 1.0 / radii])
    coef, *_ = np.linalg.lstsq(design, values, rcond=None)
    fitted = design @ coef
    max_resid = float(np.max(np.abs(values - fitted)))
    # weight vector mapping values -> intercept, for MC error propagation
    pinv = np.linalg.pinv(design)
    mc_se = float(np.abs(pinv[0]) @ np.asarray(ses, dtype=float))
    return float(coef[0]), max_resid, mc_se


def _estimate_limit(radii, values, ses):
    """Extrapolated limit with uncertainty and stabilization flag."""
    n = len(radii)
    if n == 1:
        return values[0], ses[0], values[0] == values[0], 0.0
    last = slice(max(0, n - 3), n)
    est, resid, mc_se = _intercept_in_inv_r(radii[last], values[last], ses[last])
    window_shift = 0.0
    if n >= 4:
        prev = slice(n - 4, n - 1)
        est_prev, _, _ = _intercept_in_inv_r(radii[prev], values[prev], ses[prev])
        window_shift = abs(est - est_prev)
    unc = resid + window_shift + mc_se
    spread = float(np.max(values[last]) - np.min(values[last]))
    mc_band = 4.0 * max(ses) if any(s > 0 for s in ses) else 0.0
    stabilized = spread <= max(NON_STABILIZING_SPREAD * abs(est), mc_band, 1e-15)
    return est, unc, stabilized, spread


def estimate_c1_d1(m: Model, pd: PerronData, radii=DEFAULT_RADII, rng=None,
                   sigma2_samples: int = DEFAULT_SIGMA2_SAMPLES) -> C1D1Estimate:
    """Estimate (c1, d1) of the drift/variance scaling along the rv ray."""
    _require_critical(pd)
    radii = sorted(float(r) for r in radii)
    if not radii:
        raise PreconditionError("radii schedule must be non-empty")
    alpha = m.alpha
    if not -1.0 < alpha < 1.0:
        raise PreconditionError(f"model alpha must lie in (-1, 1), got {alpha}")
    c_vals, d_vals, d_ses = [], [], []
    estimated = False
    for r in radii:
        x = r * pd.v
        proj = pd.projection(x)
        c_vals.append(float(m.drift(x) @ pd.u) / proj**alpha)
        s2, se, est_flag = _sigma2_at(m, pd, x, rng, sigma2_samples)
        estimated = estimated or est_flag
        d_vals.append(s2 / proj**(1.0 + alpha))
        d_ses.append(se / proj**(1.0 + alpha))
    zeros = [0.0] * len(radii)
    c1, c1_unc, c_stab, c_spread = _estimate_limit(radii, c_vals, zeros)
    d1, d1_unc, d_stab, d_spread = _estimate_limit(radii, d_vals, d_ses)
    notes = []
    if not c_stab:
        notes.append(
            f"drift trend non-stabilizing (last-three spread {c_spread:.3g})")
    if not d_stab:
        notes.append(
            f"variance trend non-stabilizing (last-three spread {d_spread:.3g})")
    if estimated:
        notes.append(
            "sigma^2 estimated by one-step Monte Carlo at rounded states")
    return C1D1Estimate(
        c1=c1, c1_unc=c1_unc, d1=d1, d1_unc=d1_unc, alpha=alpha,
        c1_samples=list(zip(radii, c_vals)),
        d1_samples=list(zip(radii, d_vals)),
        stabilized=c_stab and d_stab,
        sigma2_estimated=estimated, notes=notes,
    )


def classify_growth(c1: float, d1: float, uncertainty: float = 0.0,
                    stabilized: bool = True) -> Growth:
    """Three-way verdict from the comparison of 2 c1 against d1.

    bounded_as only when 2 c1 < d1 beyond the uncertainty (the process
    then stays bounded almost surely); unbounded_positive_prob only when
    2 c1 > d1 beyond it. Anything else, including a non-stabilized
    estimate, is inconclusive (the equality case is genuinely open).
    """
    if not stabilized:
        return Growth.INCONCLUSIVE
    if d1 - 2.0 * c1 > uncertainty:
        return Growth.BOUNDED_AS
    if 2.0 * c1 - d1 > uncertainty:
        return Growth.UNBOUNDED_POSITIVE_PROB
    return Growth.INCONCLUSIVE


def classify_growth_estimate(est: C1D1Estimate) -> Growth:
    return classify_growth(est.c1, est.d1, est.combined_uncertainty,
                           est.stabilized)


@dataclass(frozen=True)
class GwiClassification:
    """Exact recurrence/transience comparison for immigration models."""

    verdict: GwiVerdict
    two_a_u: float
    u_v_v_u: float

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "2au": self.two_a_u,
            "uVvu": self.u_v_v_u,
        }


def classify_gwi(m: GwiModel, pd: PerronData,
                 tol: float = GWI_EQUALITY_TOL) -> GwiClassification:
    """Recurrent iff 2 a.u < u^T V(v) u, transient iff >, computed exactly
    from the PMF moments; equality within `tol` is inconclusive."""
    _require_critical(pd)
    two_au = 2.0 * float(m.imm_mean @ pd.u)
    uvvu = float(pd.u @ m.v_matrix(pd.v) @ pd.u)
    if abs(two_au - uvvu) <= tol:
        verdict = GwiVerdict.INCONCLUSIVE
    elif two_au < uvvu:
        verdict = GwiVerdict.RECURRENT
    else:
        verdict = GwiVerdict.TRANSIENT
    return GwiClassification(verdict=verdict, two_a_u=two_au, u_v_v_u=uvvu)


def cell_division_threshold(p: float, p_prime: float, b1: float, b2: float) -> float:
    """Survival threshold for c1 + c2 in the two-type cell-division model:
    T = (p' b1 + (1-p) b2) / (1 - p + p'); extinction is almost sure below
    it and survival has positive probability above it."""
    if not (0.0 < p < 1.0 and 0.0 < p_prime < 1.0):
        raise PreconditionError("p and p' must lie in (0, 1)")
    if not (0.0 <= b1 <= 1.0 and 0.0 <= b2 <= 1.0):
        raise PreconditionError("b1 and b2 must lie in [0, 1]")
    w = 1.0 - p + p_prime
    return (p_prime * b1 + (1.0 - p) * b2) / w


@dataclass
class CriterionReport:
    """Everything the analyze command reports about one model."""

    rho: float
    criticality: Criticality
    alpha: float
    estimate: C1D1Estimate | None
    ratio_samples: list
    classification: Growth
    margin: float | None
    gwi: GwiClassification | None = None
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "rho": self.rho,
            "criticality": self.criticality.value,
            "alpha": self.alpha,
            "estimate": self.estimate.to_dict() if self.estimate else None,
            "ratio_samples": [[r, v] for r, v in self.ratio_samples],
            "classification": self.classification.value,
            "margin": self.margin,
            "gwi": self.gwi.to_dict() if self.gwi else None,
            "notes": list(self.notes),
        }


def build_criterion_report(m: Model, pd: PerronData, radii=DEFAULT_RADII,
                           rng=None, sigma2_samples: int = DEFAULT_SIGMA2_SAMPLES,
                           criticality_tol: float = CRITICALITY_TOL) -> CriterionReport:
    """Assemble the full classification report for one model."""
    crit = classify_criticality(pd, criticality_tol)
    notes = []
    if crit is not Criticality.CRITICAL:
        notes.append("growth criterion applies to critical models only; "
                     f"this model is {crit.value}")
        return CriterionReport(
            rho=pd.rho, criticality=crit, alpha=m.alpha, estimate=None,
            ratio_samples=[], classification=Growth.INCONCLUSIVE,
            margin=None, notes=notes,
        )
    est = estimate_c1_d1(m, pd, radii=radii, rng=rng,
                         sigma2_samples=sigma2_samples)
    ratio_samples = []
    for r in sorted(float(r) for r in radii):
        try:
            ratio_samples.append((r, growth_ratio(m, pd, r, rng=rng,
                                                  n_samples=sigma2_samples)))
        except DegenerateVarianceError:
            notes.append(f"sigma^2(rv) degenerate at r = {r}")
    classification = classify_growth_estimate(est)
    margin = abs(2.0 * est.c1 / est.d1 - 1.0) if est.d1 > 0 else None
    gwi = classify_gwi(m, pd) if isinstance(m, GwiModel) else None
    notes.extend(est.notes)
    return CriterionReport(
        rho=pd.rho, criticality=crit, alpha=m.alpha, estimate=est,
        ratio_samples=ratio_samples, classification=classification,
        margin=margin, gwi=gwi, notes=notes,
    )
