"""Population models driven by X_{n+1} = X_n M + g(X_n) + xi_n.

Three concrete families share one interface: the multitype branching
process with immigration (GwiModel), state-dependent multitype branching
(SdgwModel subclasses, including the two-type cell-division model), and a
table-driven variant for user-specified laws. States are non-negative
int64 vectors; offspring laws have finite support so means and
covariances are exact.

Populations beyond `gaussian_ceiling` (default 10**12) advance by a
Gaussian approximation of the per-generation offspring sum (mean
z M(z) + a, covariance V(z)), rounded and clamped at zero; exact integer
sampling at that scale buys nothing and costs everything. Coordinates
that would pass the 2**63 - 1 integer guard raise PopulationOverflow so
trajectory drivers can flag rather than silently truncate.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from .errors import ConfigError, ModelDomainError, PopulationOverflow

OVERFLOW_GUARD = 2**63 - 1
DEFAULT_GAUSSIAN_CEILING = 10**12
PROB_TOL = 1e-12


def as_state(x, dim: int) -> np.ndarray:
    """Coerce to a non-negative int64 state vector of length `dim`."""
    arr = np.asarray(x)
    if arr.shape != (dim,):
        raise ConfigError(f"state must have shape ({dim},), got {arr.shape}")
    if np.any(arr < 0):
        raise ConfigError(f"state must be non-negative, got {arr.tolist()}")
    out = np.asarray(arr, dtype=np.int64)
    if np.any(out != arr):
        raise ConfigError(f"state must be integer-valued, got {arr.tolist()}")
    return out


@dataclass(frozen=True, eq=False)
class OffspringLaw:
    """Finite-support probability law on non-negative integer vectors.

    support is a (K, d) array of atoms, probs the matching probabilities.
    Moments are exact; sums of n independent draws are sampled in O(K)
    via multinomial atom counts.
    """

    support: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        support = np.atleast_2d(np.asarray(self.support, dtype=np.int64))
        probs = np.asarray(self.probs, dtype=float)
        raw = np.atleast_2d(np.asarray(self.support))
        if np.any(raw < 0) or np.any(support != raw):
            raise ConfigError("support atoms must be non-negative integers")
        if probs.ndim != 1 or probs.shape[0] != support.shape[0]:
            raise ConfigError(
                f"probs length {probs.shape} does not match support {support.shape}"
            )
        if np.any(probs < 0):
            raise ConfigError("probabilities must be non-negative")
        if abs(float(probs.sum()) - 1.0) > PROB_TOL:
            raise ConfigError(f"probabilities sum to {float(probs.sum())!r}, not 1")
        support.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)

    @property
    def dim(self) -> int:
        return self.support.shape[1]

    @cached_property
    def mean(self) -> np.ndarray:
        return self.probs @ self.support.astype(float)

    @cached_property
    def cov(self) -> np.ndarray:
        s = self.support.astype(float)
        second = (s * self.probs[:, None]).T @ s
        return second - np.outer(self.mean, self.mean)

    @cached_property
    def max_total(self) -> int:
        """Largest per-draw total offspring (overflow-guard input bound)."""
        return int(self.support.sum(axis=1).max())

    def zero_marginal_prob(self, j: int) -> float:
        """P(coordinate j of a draw equals 0)."""
        return float(self.probs[self.support[:, j] == 0].sum())

    def zero_prob(self) -> float:
        """P(the whole draw is the zero vector)."""
        mask = np.all(self.support == 0, axis=1)
        return float(self.probs[mask].sum())

    def is_degenerate_zero(self) -> bool:
        return self.zero_prob() >= 1.0 - PROB_TOL

    def sample(self, rng, size: int | None = None) -> np.ndarray:
        """Draw `size` independent atoms (one if size is None)."""
        idx = rng.choice(self.support.shape[0], size=size, p=self.probs)
        return self.support[idx]

    def sample_sum(self, n: int, rng) -> np.ndarray:
        """Sum of n independent draws, via multinomial atom counts."""
        if n == 0:
            return np.zeros(self.dim, dtype=np.int64)
        counts = rng.multinomial(n, self.probs)
        return counts @ self.support

    def sample_sum_batch(self, n: np.ndarray, rng) -> np.ndarray:
        """Row-wise sums of n[i] independent draws; n is a 1-d int array."""
        counts = rng.multinomial(n, self.probs)
        return counts @ self.support

    def to_dict(self) -> dict:
        return {"support": self.support.tolist(), "probs": self.probs.tolist()}

    @staticmethod
    def from_dict(d: dict, path: str = "law") -> "OffspringLaw":
        try:
            return OffspringLaw(d["support"], d["probs"])
        except KeyError as exc:
            raise ConfigError(f"missing key {exc}", path=path) from exc

    @staticmethod
    def deterministic(vector) -> "OffspringLaw":
        return OffspringLaw(np.atleast_2d(vector), [1.0])


def _total(z: np.ndarray) -> float:
    # float sum: int64 coordinate sums can silently wrap near the guard
    return float(np.asarray(z, dtype=np.float64).sum())


def _check_parent_guard(total: float, max_total: int, state) -> None:
    # 0.1% margin absorbs the float64 rounding of huge totals
    if max_total > 0 and total > 0.999 * OVERFLOW_GUARD / max(max_total, 1):
        raise PopulationOverflow(state)


def _finish_gaussian(draw: np.ndarray, state) -> np.ndarray:
    rounded = np.rint(np.maximum(draw, 0.0))
    if np.any(rounded > OVERFLOW_GUARD):
        raise PopulationOverflow(state)
    return rounded.astype(np.int64)


class Model:
    """Interface every model implements.

    States are non-negative int64 vectors and step() preserves that. The
    one-step mean satisfies E[step(x)] = x M + g(x); sigma2 is the
    conditional variance of xi.u and returns None when it has to be
    estimated by simulation. `alpha` is the drift exponent the criterion
    uses: g(x).u ~ c1 (x.u)^alpha.
    """

    dim: int
    alpha: float = 0.0
    delta: float = 1.0
    absorbing: bool = False
    gaussian_ceiling: int = DEFAULT_GAUSSIAN_CEILING

    def mean_matrix(self) -> np.ndarray:
        raise NotImplementedError

    def drift(self, x) -> np.ndarray:
        raise NotImplementedError

    def sigma2(self, x, pd) -> float | None:
        return None

    def step(self, x, rng) -> np.ndarray:
        raise NotImplementedError

    def step_batch(self, states: np.ndarray, rng) -> np.ndarray:
        # Correct fallback; concrete models override with vectorized paths.
        return np.stack([self.step(s, rng) for s in states])

    def with_ceiling(self, ceiling: int) -> "Model":
        return replace(self, gaussian_ceiling=int(ceiling))

    def describe(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class GwiModel(Model):
    """Multitype branching process with immigration.

    Each of the z_i type-i parents independently draws an offspring
    vector from offspring[i]; one immigration draw is added per
    generation. The mean recursion is E(Z_{n+1}) = E(Z_n) M + a.
    """

    offspring: tuple[OffspringLaw, ...]
    immigration: OffspringLaw
    gaussian_ceiling: int = DEFAULT_GAUSSIAN_CEILING
    alpha: float = 0.0
    delta: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "offspring", tuple(self.offspring))
        d = len(self.offspring)
        if d < 1:
            raise ConfigError("need at least one offspring law")
        for i, law in enumerate(self.offspring):
            if law.dim != d:
                raise ConfigError(
                    f"offspring[{i}] has dim {law.dim}, expected {d}")
        if self.immigration.dim != d:
            raise ConfigError(
                f"immigration law has dim {self.immigration.dim}, expected {d}")

    @property
    def dim(self) -> int:
        return len(self.offspring)

    @property
    def absorbing(self) -> bool:
        # Without effective immigration the zero state absorbs.
        return self.immigration.is_degenerate_zero()

    def standing_violations(self) -> list[str]:
        """Checks of the standing assumptions P(X_ij = 0) > 0, P(A = 0) > 0.

        Violations do not block sampling (the step contract is broader)
        but configs are rejected on them at load time.
        """
        out = []
        if self.immigration.zero_prob() <= 0.0:
            out.append("immigration law must put positive mass on the zero vector")
        for i, law in enumerate(self.offspring):
            for j in range(self.dim):
                if law.zero_marginal_prob(j) <= 0.0:
                    out.append(
                        f"offspring[{i}] has zero probability of producing "
                        f"no type-{j} children"
                    )
        return out

    @cached_property
    def _mean_matrix(self) -> np.ndarray:
        return np.stack([law.mean for law in self.offspring])

    @cached_property
    def imm_mean(self) -> np.ndarray:
        return self.immigration.mean

    @cached_property
    def imm_cov(self) -> np.ndarray:
        return self.immigration.cov

    @cached_property
    def gammas(self) -> tuple[np.ndarray, ...]:
        return tuple(law.cov for law in self.offspring)

    @cached_property
    def _max_total(self) -> int:
        return max(law.max_total for law in self.offspring)

    def mean_matrix(self) -> np.ndarray:
        return self._mean_matrix

    def drift(self, x) -> np.ndarray:
        return self.imm_mean.copy()

    def v_matrix(self, z) -> np.ndarray:
        """V(z) = sum_i z_i Gamma_i (linear in z, real z allowed)."""
        z = np.asarray(z, dtype=float)
        return sum(z[i] * g for i, g in enumerate(self.gammas))

    def sigma2(self, z, pd) -> float:
        """u^T V(z) u + tau^2 with tau^2 the immigration u-variance."""
        u = pd.u
        return float(u @ self.v_matrix(z) @ u + u @ self.imm_cov @ u)

    def step(self, z, rng) -> np.ndarray:
        z = as_state(z, self.dim)
        total = _total(z)
        if total > self.gaussian_ceiling:
            mean = z.astype(float) @ self._mean_matrix + self.imm_mean
            return _finish_gaussian(
                rng.multivariate_normal(mean, self.v_matrix(z), method="svd"), z)
        _check_parent_guard(total, self._max_total, z)
        out = np.zeros(self.dim, dtype=np.int64)
        for i, law in enumerate(self.offspring):
            out += law.sample_sum(int(z[i]), rng)
        out += self.immigration.sample(rng)
        return out

    def step_batch(self, states: np.ndarray, rng) -> np.ndarray:
        states = np.asarray(states, dtype=np.int64)
        totals = states.sum(axis=1, dtype=np.float64)
        big = totals > self.gaussian_ceiling
        if np.any(~big):
            _check_parent_guard(float(totals[~big].max()), self._max_total,
                                states)
        out = np.zeros_like(states)
        for i, law in enumerate(self.offspring):
            out += law.sample_sum_batch(np.where(big, 0, states[:, i]), rng)
        out += self.immigration.sample(rng, size=states.shape[0])
        for row in np.nonzero(big)[0]:
            z = states[row]
            mean = z.astype(float) @ self._mean_matrix + self.imm_mean
            out[row] = _finish_gaussian(
                rng.multivariate_normal(mean, self.v_matrix(z), method="svd"), z)
        return out

    def describe(self) -> dict:
        return {
            "kind": "gwi",
            "offspring": [law.to_dict() for law in self.offspring],
            "immigration": self.immigration.to_dict(),
            "gaussian_ceiling": self.gaussian_ceiling,
            "alpha": self.alpha,
            "delta": self.delta,
        }


class SdgwModel(Model):
    """State-dependent multitype branching: laws regenerate from the state.

    Subclasses provide laws_at(z); the mean matrix obeys
    M(z) = M + C(z) with non-negative correction C(z) and drift
    g(z) = z C(z). Zero is absorbing (no immigration).
    """

    absorbing = True

    def laws_at(self, z) -> tuple[OffspringLaw, ...]:
        raise NotImplementedError

    def mean_matrix_at(self, z) -> np.ndarray:
        return np.stack([law.mean for law in self.laws_at(z)])

    def drift(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return z @ (self.mean_matrix_at(z) - self.mean_matrix())

    def gamma_at(self, z, i: int) -> np.ndarray:
        return self.laws_at(z)[i].cov

    def sigma2(self, z, pd) -> float:
        z = np.asarray(z, dtype=float)
        v = sum(z[i] * self.gamma_at(z, i) for i in range(self.dim))
        return float(pd.u @ v @ pd.u)

    def _max_total_at(self, z) -> int:
        return max(law.max_total for law in self.laws_at(z))

    def step(self, z, rng) -> np.ndarray:
        z = as_state(z, self.dim)
        total = _total(z)
        if total == 0:
            return z
        if total > self.gaussian_ceiling:
            zf = z.astype(float)
            mean = zf @ self.mean_matrix_at(z)
            cov = sum(zf[i] * self.gamma_at(z, i) for i in range(self.dim))
            return _finish_gaussian(
                rng.multivariate_normal(mean, cov, method="svd"), z)
        _check_parent_guard(total, self._max_total_at(z), z)
        laws = self.laws_at(z)
        out = np.zeros(self.dim, dtype=np.int64)
        for i, law in enumerate(laws):
            out += law.sample_sum(int(z[i]), rng)
        return out


@dataclass(frozen=True, eq=False)
class BonusDriftSdgw(SdgwModel):
    """State-dependent model built from fixed base laws plus bonus children.

    Beyond its base draw, every parent independently produces one extra
    type-j child with probability q_j(z) = D_j / |z|_1 (clamped to 1 at
    tiny states), so C(z) has identical rows q(z) and the drift
    g(z) = z C(z) equals the configured limit D exactly wherever no clamp
    binds.
    """

    base: tuple[OffspringLaw, ...]
    drift_limit: np.ndarray
    gaussian_ceiling: int = DEFAULT_GAUSSIAN_CEILING
    alpha: float = 0.0
    delta: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "base", tuple(self.base))
        d = len(self.base)
        limit = np.asarray(self.drift_limit, dtype=float)
        if limit.shape != (d,):
            raise ConfigError(f"drift limit must have shape ({d},)")
        if np.any(limit < 0):
            raise ConfigError("drift limit must be non-negative")
        limit.setflags(write=False)
        object.__setattr__(self, "drift_limit", limit)
        for i, law in enumerate(self.base):
            if law.dim != d:
                raise ConfigError(f"base[{i}] has dim {law.dim}, expected {d}")

    @property
    def dim(self) -> int:
        return len(self.base)

    @cached_property
    def _mean_matrix(self) -> np.ndarray:
        return np.stack([law.mean for law in self.base])

    def mean_matrix(self) -> np.ndarray:
        return self._mean_matrix

    def bonus_probs(self, z) -> np.ndarray:
        total = float(np.sum(np.asarray(z, dtype=float)))
        if total <= 0:
            return np.zeros(self.dim)
        return np.minimum(self.drift_limit / total, 1.0)

    def mean_matrix_at(self, z) -> np.ndarray:
        return self._mean_matrix + self.bonus_probs(z)[None, :]

    def laws_at(self, z) -> tuple[OffspringLaw, ...]:
        q = self.bonus_probs(z)
        return tuple(_convolve_bernoulli(law, q) for law in self.base)

    def gamma_at(self, z, i: int) -> np.ndarray:
        q = self.bonus_probs(z)
        return self.base[i].cov + np.diag(q * (1.0 - q))

    def step(self, z, rng) -> np.ndarray:
        z = as_state(z, self.dim)
        total = _total(z)
        if total == 0 or total > self.gaussian_ceiling:
            return super().step(z, rng)
        _check_parent_guard(total,
                            max(l.max_total for l in self.base) + self.dim, z)
        out = np.zeros(self.dim, dtype=np.int64)
        for i, law in enumerate(self.base):
            out += law.sample_sum(int(z[i]), rng)
        q = self.bonus_probs(z)
        out += rng.binomial(int(total), q)
        return out

    def step_batch(self, states: np.ndarray, rng) -> np.ndarray:
        states = np.asarray(states, dtype=np.int64)
        totals = states.sum(axis=1, dtype=np.float64)
        plain = (totals > 0) & (totals <= self.gaussian_ceiling)
        if np.any(plain):
            _check_parent_guard(
                float(totals[plain].max()),
                max(l.max_total for l in self.base) + self.dim, states)
        out = np.zeros_like(states)
        for i, law in enumerate(self.base):
            n = np.where(plain, states[:, i], 0)
            out += law.sample_sum_batch(n, rng)
        q = np.minimum(
            self.drift_limit[None, :]
            / np.maximum(totals, 1.0)[:, None], 1.0)
        out += rng.binomial(
            np.where(plain, totals, 0.0).astype(np.int64)[:, None], q)
        for row in np.nonzero(totals > self.gaussian_ceiling)[0]:
            out[row] = super().step(states[row], rng)
        return out

    def describe(self) -> dict:
        return {
            "kind": "sdgw",
            "offspring": [law.to_dict() for law in self.base],
            "drift": self.drift_limit.tolist(),
            "gaussian_ceiling": self.gaussian_ceiling,
            "alpha": self.alpha,
            "delta": self.delta,
        }


def _convolve_bernoulli(law: OffspringLaw, q: np.ndarray) -> OffspringLaw:
    """Law of a base draw plus independent Bernoulli(q_j) extra children."""
    d = law.dim
    support = law.support
    probs = law.probs
    for j in range(d):
        if q[j] <= 0.0:
            continue
        bump = np.zeros(d, dtype=np.int64)
        bump[j] = 1
        support = np.vstack([support, support + bump])
        probs = np.concatenate([probs * (1.0 - q[j]), probs * q[j]])
    return OffspringLaw(support, probs)


@dataclass(frozen=True, eq=False)
class TableSdgw(SdgwModel):
    """State-dependent laws tabulated on finitely many states.

    Outside the table the base laws apply, so the drift vanishes at
    infinity (D = 0). Useful for user-defined local perturbations.
    """

    base: tuple[OffspringLaw, ...]
    overrides: tuple[tuple[tuple[int, ...], tuple[OffspringLaw, ...]], ...] = ()
    gaussian_ceiling: int = DEFAULT_GAUSSIAN_CEILING
    alpha: float = 0.0
    delta: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "base", tuple(self.base))
        object.__setattr__(
            self, "overrides",
            tuple((tuple(int(c) for c in s), tuple(laws))
                  for s, laws in self.overrides))
        d = len(self.base)
        for state, laws in self.overrides:
            if len(state) != d or len(laws) != d:
                raise ConfigError(f"table entry for state {state} has wrong arity")

    @property
    def dim(self) -> int:
        return len(self.base)

    @cached_property
    def _table(self) -> dict:
        return dict(self.overrides)

    @cached_property
    def _mean_matrix(self) -> np.ndarray:
        return np.stack([law.mean for law in self.base])

    def mean_matrix(self) -> np.ndarray:
        return self._mean_matrix

    def laws_at(self, z) -> tuple[OffspringLaw, ...]:
        key = tuple(int(c) for c in np.asarray(z).tolist())
        return self._table.get(key, self.base)

    def mean_matrix_at(self, z) -> np.ndarray:
        z_arr = np.asarray(z, dtype=float)
        if np.all(z_arr == np.rint(z_arr)):
            return np.stack([law.mean for law in self.laws_at(z)])
        return self._mean_matrix

    def gamma_at(self, z, i: int) -> np.ndarray:
        z_arr = np.asarray(z, dtype=float)
        if np.all(z_arr == np.rint(z_arr)):
            return self.laws_at(z)[i].cov
        return self.base[i].cov

    def describe(self) -> dict:
        return {
            "kind": "table",
            "offspring": [law.to_dict() for law in self.base],
            "overrides": [
                {"state": list(s), "laws": [l.to_dict() for l in laws]}
                for s, laws in self.overrides
            ],
            "gaussian_ceiling": self.gaussian_ceiling,
            "alpha": self.alpha,
            "delta": self.delta,
        }


CELL_SUPPORT = np.array([[1, 1], [1, 0], [0, 1], [0, 0]], dtype=np.int64)


@dataclass(frozen=True)
class CellDivisionModel(SdgwModel):
    """Two-type cell division with 0/1 offspring.

    Baseline mean matrix [[p, 1-p], [p', 1-p']] (row-stochastic, hence
    critical with u = (1,1)/sqrt(2)); the state-dependent correction
    feeds c1 into the first column and c2 into the second through the
    weight functions a_ij, so the drift z C(z) is exactly (c1, c2).

    The joint 0/1 law for a type-i parent is the 2x2 contingency table
    with marginals from row i of M(z) and both-children probability
    b_i(z) = b_i + beta_i / (1 + |z|), clipped into the valid range for
    the table (the clip can only bind at small states and vanishes as
    |z| grows, so the limits b_i are untouched).
    """

    p: float
    p_prime: float
    c1: float
    c2: float
    b1: float
    b2: float
    beta1: float = 0.0
    beta2: float = 0.0
    a_coeffs: tuple = ((1.0, 1.0), (1.0, 1.0))
    gaussian_ceiling: int = DEFAULT_GAUSSIAN_CEILING
    alpha: float = 0.0
    delta: float = 1.0

    def __post_init__(self):
        a = tuple(tuple(float(v) for v in row) for row in self.a_coeffs)
        object.__setattr__(self, "a_coeffs", a)
        for name, value in (("p", self.p), ("p_prime", self.p_prime)):
            if not 0.0 < value < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1), got {value}")
        if self.c1 <= 0 or self.c2 <= 0:
            raise ConfigError("c1 and c2 must be positive")
        if not 0.0 < self.b1 <= min(self.p, 1.0 - self.p):
            raise ConfigError(
                f"b1 must lie in (0, min(p, 1-p)] = (0, {min(self.p, 1 - self.p)}]")
        if not 0.0 < self.b2 <= min(self.p_prime, 1.0 - self.p_prime):
            raise ConfigError(
                "b2 must lie in (0, min(p', 1-p')] = "
                f"(0, {min(self.p_prime, 1 - self.p_prime)}]")
        if len(a) != 2 or any(len(row) != 2 for row in a):
            raise ConfigError("a_coeffs must be a 2x2 table of positive constants")
        if any(v <= 0 for row in a for v in row):
            raise ConfigError("a_coeffs must be positive")

    dim = 2

    @cached_property
    def _baseline(self) -> np.ndarray:
        return np.array([[self.p, 1.0 - self.p],
                         [self.p_prime, 1.0 - self.p_prime]])

    def mean_matrix(self) -> np.ndarray:
        return self._baseline

    def correction_at(self, z) -> np.ndarray:
        """The bracketed correction C(z); requires z != 0."""
        z = np.asarray(z, dtype=float)
        (a11, a12), (a21, a22) = self.a_coeffs
        den1 = z[0] * a11 + z[1] * a21
        den2 = z[0] * a12 + z[1] * a22
        if den1 <= 0.0 or den2 <= 0.0:
            raise ModelDomainError(
                "correction undefined (zero denominator)", path=f"state {z.tolist()}")
        return np.array([
            [self.c1 * a11 / den1, self.c2 * a12 / den2],
            [self.c1 * a21 / den1, self.c2 * a22 / den2],
        ])

    def mean_matrix_at(self, z) -> np.ndarray:
        m = self._baseline + self.correction_at(z)
        if np.any(m > 1.0 + PROB_TOL) or np.any(m < 0.0):
            raise ModelDomainError(
                f"mean matrix leaves [0,1] at state {np.asarray(z).tolist()} "
                "(c1/c2 too large for this state)",
                path="model.cell_division")
        return m

    def drift(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return z @ self.correction_at(z)

    def b_at(self, z, i: int) -> float:
        """Effective both-children probability at state z for type i."""
        z = np.asarray(z, dtype=float)
        norm = float(np.linalg.norm(z))
        raw = (self.b1, self.b2)[i] + (self.beta1, self.beta2)[i] / (1.0 + norm)
        m1, m2 = self.mean_matrix_at(z)[i]
        return _clip_cell_b(raw, m1, m2, z)

    def cell_probs(self, z, i: int) -> np.ndarray:
        """Joint PMF over (1,1), (1,0), (0,1), (0,0) for a type-i parent."""
        m1, m2 = self.mean_matrix_at(z)[i]
        b = self.b_at(z, i)
        cells = np.array([b, m1 - b, m2 - b, 1.0 - m1 - m2 + b])
        cells = np.clip(cells, 0.0, 1.0)
        return cells / cells.sum()

    def offspring_law(self, z, i: int) -> OffspringLaw:
        """The type-i law at state z as an explicit finite-support PMF."""
        return OffspringLaw(CELL_SUPPORT, self.cell_probs(z, i))

    def laws_at(self, z) -> tuple[OffspringLaw, ...]:
        return tuple(self.offspring_law(z, i) for i in range(2))

    def gamma_at(self, z, i: int) -> np.ndarray:
        m1, m2 = self.mean_matrix_at(z)[i]
        b = self.b_at(z, i)
        off = b - m1 * m2
        return np.array([[m1 * (1.0 - m1), off], [off, m2 * (1.0 - m2)]])

    def sigma2(self, z, pd) -> float:
        z = np.asarray(z, dtype=float)
        if np.all(z == 0):
            return 0.0
        v = z[0] * self.gamma_at(z, 0) + z[1] * self.gamma_at(z, 1)
        return float(pd.u @ v @ pd.u)

    def step(self, z, rng) -> np.ndarray:
        z = as_state(z, 2)
        total = _total(z)
        if total == 0 or total > self.gaussian_ceiling:
            return super().step(z, rng)
        _check_parent_guard(total, 2, z)
        out = np.zeros(2, dtype=np.int64)
        for i in range(2):
            n = int(z[i])
            if n == 0:
                continue
            p11, p10, p01, _ = self.cell_probs(z, i)
            n11 = rng.binomial(n, p11)
            rem = n - n11
            n10 = rng.binomial(rem, _ratio(p10, 1.0 - p11))
            n01 = rng.binomial(rem - n10, _ratio(p01, 1.0 - p11 - p10))
            out[0] += n11 + n10
            out[1] += n11 + n01
        return out

    def step_batch(self, states: np.ndarray, rng) -> np.ndarray:
        states = np.asarray(states, dtype=np.int64)
        totals = states.sum(axis=1, dtype=np.float64)
        plain = (totals > 0) & (totals <= self.gaussian_ceiling)
        if np.any(plain):
            _check_parent_guard(float(totals[plain].max()), 2, states)
        cells = self._cell_probs_batch(states, plain)
        out = np.zeros_like(states)
        for i in range(2):
            n = np.where(plain, states[:, i], 0)
            p11, p10, p01 = cells[i]
            n11 = rng.binomial(n, p11)
            rem = n - n11
            n10 = rng.binomial(rem, _ratio_arr(p10, 1.0 - p11))
            n01 = rng.binomial(rem - n10, _ratio_arr(p01, 1.0 - p11 - p10))
            out[:, 0] += n11 + n10
            out[:, 1] += n11 + n01
        for row in np.nonzero(totals > self.gaussian_ceiling)[0]:
            out[row] = super().step(states[row], rng)
        return out

    def _cell_probs_batch(self, states, mask):
        """Per-row cell probabilities (p11, p10, p01) for both parent types."""
        z1 = np.where(mask, states[:, 0], 1).astype(float)
        z2 = np.where(mask, states[:, 1], 1).astype(float)
        (a11, a12), (a21, a22) = self.a_coeffs
        den1 = z1 * a11 + z2 * a21
        den2 = z1 * a12 + z2 * a22
        norm = np.hypot(z1, z2)
        rows = []
        for base1, base2, b_lim, beta, au, av in (
                (self.p, 1.0 - self.p, self.b1, self.beta1, a11, a12),
                (self.p_prime, 1.0 - self.p_prime, self.b2, self.beta2, a21, a22)):
            m1 = base1 + self.c1 * au / den1
            m2 = base2 + self.c2 * av / den2
            if np.any(mask & ((m1 > 1.0 + PROB_TOL) | (m2 > 1.0 + PROB_TOL))):
                bad = np.nonzero(mask & ((m1 > 1 + PROB_TOL) | (m2 > 1 + PROB_TOL)))[0][0]
                raise ModelDomainError(
                    f"mean matrix leaves [0,1] at state {states[bad].tolist()}",
                    path="model.cell_division")
            raw = b_lim + beta / (1.0 + norm)
            low = np.maximum(0.0, m1 + m2 - 1.0)
            high = np.minimum(m1, m2)
            if np.any(mask & (low > high + PROB_TOL)):
                bad = np.nonzero(mask & (low > high + PROB_TOL))[0][0]
                raise ModelDomainError(
                    f"no valid joint law at state {states[bad].tolist()}",
                    path="model.cell_division")
            b = np.clip(raw, low, np.maximum(low, high))
            rows.append((np.clip(b, 0, 1),
                         np.clip(m1 - b, 0, 1),
                         np.clip(m2 - b, 0, 1)))
        return rows

    def describe(self) -> dict:
        return {
            "kind": "cell_division",
            "p": self.p, "p_prime": self.p_prime,
            "c1": self.c1, "c2": self.c2,
            "b1": self.b1, "b2": self.b2,
            "beta1": self.beta1, "beta2": self.beta2,
            "a_coeffs": [list(r) for r in self.a_coeffs],
            "gaussian_ceiling": self.gaussian_ceiling,
            "alpha": self.alpha,
            "delta": self.delta,
        }


def _clip_cell_b(raw: float, m1: float, m2: float, z) -> float:
    low = max(0.0, m1 + m2 - 1.0)
    high = min(m1, m2)
    if low > high + PROB_TOL:
        raise ModelDomainError(
            f"no valid joint law at state {np.asarray(z).tolist()} "
            f"(marginals {m1}, {m2})", path="model.cell_division")
    return float(min(max(raw, low), max(low, high)))


def _ratio(num: float, den: float) -> float:
    if den <= 0.0:
        return 0.0
    return min(max(num / den, 0.0), 1.0)


def _ratio_arr(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros_like(num)
    ok = den > 0.0
    out[ok] = np.clip(num[ok] / den[ok], 0.0, 1.0)
    return out
