"""Exception types shared across the toolkit."""


class RiccatiMorError(Exception):
    """Base class for all errors raised by this package."""


class SchurConvergenceError(RiccatiMorError):
    """QR iteration hit its sweep budget without isolating all eigenvalues."""


class SingularLyapunovError(RiccatiMorError):
    """Lyapunov operator is singular to tolerance (unstable coefficient or an
    eigenvalue pair summing to zero)."""


class AreSolveError(RiccatiMorError):
    """Riccati solve failed; carries the last residual seen."""

    def __init__(self, message, residual=None, iterations=None, history=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
        self.history = history


class RankDeficiencyError(RiccatiMorError):
    """Requested reduced order exceeds the numerically attainable rank."""

    def __init__(self, message, attainable=None):
        super().__init__(message)
        self.attainable = attainable


class KrylovBreakdownError(RiccatiMorError):
    """Serious breakdown of the two-sided biorthogonalization."""

    def __init__(self, message, iteration=None, history=None):
        super().__init__(message)
        self.iteration = iteration
        self.history = history


class PgIllPosedError(AreSolveError):
    """The obliquely projected Riccati equation could not be solved."""

    def __init__(self, message, iteration=None, history=None, residual=None):
        super().__init__(message, residual=residual)
        self.iteration = iteration
        self.history = history


class NotConvergedError(RiccatiMorError):
    """Iteration cap reached before the residual tolerance; partial history
    is attached."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history


class RegionError(RiccatiMorError):
    """Actuator or observation region contains no grid node."""


class SpectrumError(RiccatiMorError):
    """Transfer-function evaluation point is numerically on the spectrum."""


class ConfigError(RiccatiMorError):
    """Experiment configuration failed validation."""
