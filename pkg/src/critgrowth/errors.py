"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: configuration problems (bad schema,
invalid PMFs, violated preconditions) exit with 1, computational failures
(non-convergence, degenerate variance) with 2.
"""


class CritGrowthError(Exception):
    """Base class for all package errors."""


class ConfigError(CritGrowthError):
    """Invalid configuration: schema violations, bad PMFs, domain errors.

    ``path`` names the config key (or state) that triggered the error.
    """

    def __init__(self, message, path=None):
        super().__init__(message if path is None else f"{path}: {message}")
        self.path = path
        self.message = message


class ModelDomainError(ConfigError):
    """A state-dependent law was requested at a state where it is invalid."""


class PreconditionError(ConfigError):
    """An operation was called on inputs violating its stated precondition."""


class ComputationError(CritGrowthError):
    """A numerical procedure failed (maps to CLI exit code 2)."""


class NonConvergenceError(ComputationError):
    """Iteration did not converge; carries the last iterate for inspection."""

    def __init__(self, message, rho=None, vector=None, iterations=None):
        super().__init__(message)
        self.rho = rho
        self.vector = vector
        self.iterations = iterations


class DegenerateVarianceError(ComputationError):
    """sigma^2 vanished where the growth criterion needs it positive."""


class PopulationOverflow(CritGrowthError):
    """A population coordinate would exceed the 2**63 - 1 integer guard.

    Trajectory drivers catch this and flag the trajectory instead of
    silently truncating.
    """

    def __init__(self, state, message="population exceeds integer overflow guard"):
        super().__init__(message)
        self.state = state
