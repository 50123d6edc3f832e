"""Perron-Frobenius eigendata for non-negative primitive matrices.

Provides the primitivity test (exact boolean reachability up to the
Wielandt bound), power-iteration computation of the Perron root with
jointly normalized right/left eigenvectors (v u = u^T u = 1), and the
contraction factor of M - uv used by the transverse-decay analysis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonConvergenceError, PreconditionError

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 100_000
CRITICALITY_TOL = 1e-9


def as_nonneg_matrix(m) -> np.ndarray:
    """Validate and return `m` as a square non-negative float array."""
    arr = np.asarray(m, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise PreconditionError(f"matrix must be square, got shape {arr.shape}")
    if arr.shape[0] < 1:
        raise PreconditionError("matrix dimension must be >= 1")
    if not np.all(np.isfinite(arr)):
        raise PreconditionError("matrix entries must be finite")
    if np.any(arr < 0):
        raise PreconditionError("matrix entries must be non-negative")
    return arr


@dataclass(frozen=True, eq=False)
class PerronData:
    """Perron root and eigenvectors under the joint normalization.

    u is the right eigenvector (M u = rho u) scaled to unit Euclidean
    norm; v is the left eigenvector (v M = rho v) scaled so that v u = 1.
    residual is max(||M u - rho u||_inf, ||v M - rho v||_inf).
    """

    rho: float
    u: np.ndarray
    v: np.ndarray
    residual: float

    def __post_init__(self):
        object.__setattr__(self, "u", np.asarray(self.u, dtype=float))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))
        self.u.setflags(write=False)
        self.v.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.u.shape[0]

    def projection(self, x) -> float:
        """u-projection x.u of a state (the scalar the criterion tracks)."""
        return float(np.asarray(x, dtype=float) @ self.u)

    def transverse(self, x) -> np.ndarray:
        """Transverse component y = x (I - uv) = x - (x.u) v."""
        x = np.asarray(x, dtype=float)
        return x - (x @ self.u) * self.v

    def to_dict(self) -> dict:
        return {
            "rho": self.rho,
            "u": self.u.tolist(),
            "v": self.v.tolist(),
            "residual": self.residual,
        }


def wielandt_bound(d: int) -> int:
    """Power bound d^2 - 2d + 2: M primitive iff M^bound is positive."""
    return d * d - 2 * d + 2


def is_primitive(m) -> bool:
    """Exact primitivity test via boolean matrix powers.

    Walks k = 1, 2, ... up to the Wielandt bound and returns True as soon
    as some boolean power of the sparsity pattern is all-True. Positivity
    of a power propagates upward, so stopping at the bound is exact.
    """
    arr = as_nonneg_matrix(m)
    pattern = arr > 0
    power = pattern.copy()
    for _ in range(wielandt_bound(arr.shape[0])):
        if power.all():
            return True
        power = power @ pattern
    return bool(power.all())


def _power_iterate(a: np.ndarray, tol: float, max_iter: int):
    """Dominant eigenpair of `a` by power iteration from the all-ones vector.

    Stops once successive Rayleigh-quotient estimates move by less than
    `tol` and the residual ||a x - rho x||_inf is itself below tol (the
    residual check guards against slow eigenvector convergence).
    """
    d = a.shape[0]
    x = np.ones(d) / np.sqrt(d)
    rho = float(x @ (a @ x))
    for iteration in range(1, max_iter + 1):
        y = a @ x
        norm_y = float(np.linalg.norm(y))
        if norm_y == 0.0:
            raise NonConvergenceError(
                "power iteration hit the zero vector (matrix is nilpotent?)",
                rho=rho, vector=x, iterations=iteration,
            )
        x_next = y / norm_y
        rho_next = float(x_next @ (a @ x_next))
        residual = float(np.max(np.abs(a @ x_next - rho_next * x_next)))
        x = x_next
        if abs(rho_next - rho) < tol and residual <= tol:
            return rho_next, x, residual, iteration
        rho = rho_next
    raise NonConvergenceError(
        f"power iteration did not converge within {max_iter} iterations",
        rho=rho, vector=x, iterations=max_iter,
    )


def perron(m, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> PerronData:
    """Perron root and normalized eigenvectors of a primitive matrix.

    Runs power iteration on M for u and on M^T for v, then rescales so
    that u^T u = 1 first and v u = 1 second (the unique joint
    normalization). Raises PreconditionError for non-primitive input and
    NonConvergenceError (carrying the last iterate) past `max_iter`.
    """
    arr = as_nonneg_matrix(m)
    if not is_primitive(arr):
        raise PreconditionError("matrix is not primitive")
    rho_u, u, _, _ = _power_iterate(arr, tol, max_iter)
    rho_v, v, _, _ = _power_iterate(arr.T, tol, max_iter)
    rho = 0.5 * (rho_u + rho_v)
    u = u / np.linalg.norm(u)
    v = v / float(v @ u)
    residual = max(
        float(np.max(np.abs(arr @ u - rho * u))),
        float(np.max(np.abs(v @ arr - rho * v))),
    )
    return PerronData(rho=rho, u=u, v=v, residual=residual)


def spectral_radius(a: np.ndarray, n_squarings: int = 60) -> float:
    """Spectral radius via Gelfand's formula ||A^m||^(1/m) along m = 2^j.

    Uses norm-scaled repeated squaring, so m reaches 2^n_squarings and the
    estimate converges to machine precision for any matrix norm. Returns
    0.0 exactly for nilpotent input (a power vanishes).
    """
    c = np.asarray(a, dtype=float)
    norm = float(np.linalg.norm(c))
    if norm == 0.0:
        return 0.0
    c = c / norm
    log_scale = np.log(norm)
    m = 1
    for _ in range(n_squarings):
        c = c @ c
        m *= 2
        log_scale *= 2.0
        norm = float(np.linalg.norm(c))
        if norm == 0.0:
            return 0.0
        c = c / norm
        log_scale += np.log(norm)
    return float(np.exp(log_scale / m))


def contraction_factor(m, pd: PerronData, criticality_tol: float = CRITICALITY_TOL) -> float:
    """Spectral radius of M - uv for a critical primitive matrix.

    This is the factor at which the transverse component of the state is
    contracted; it is strictly below 1 whenever M is primitive with
    Perron root 1.
    """
    arr = as_nonneg_matrix(m)
    if abs(pd.rho - 1.0) > criticality_tol:
        raise PreconditionError(
            f"contraction factor requires a critical matrix (rho = {pd.rho!r})"
        )
    return spectral_radius(arr - np.outer(pd.u, pd.v))
