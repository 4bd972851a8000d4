"""Exception hierarchy shared across the package."""


class ContractError(ValueError):
    """An argument violates a documented precondition (shape, symmetry, base point)."""


class DomainError(ValueError):
    """A matrix function was evaluated outside its domain."""


class RankDeficiencyError(DomainError):
    """Requested rank exceeds the numerical rank of the input."""


class RetractionError(DomainError):
    """A retraction left the manifold (e.g. rank drop on the fixed-rank manifold)."""


class DistanceUnavailable(NotImplementedError):
    """The geometry has no closed-form distance."""


class LinearSolveError(RuntimeError):
    """Inner Krylov solve hit negative curvature or stagnated."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class TangentUnavailable(LinearSolveError):
    """The Davidenko tangent could not be computed."""


class TraversalFailed(RuntimeError):
    """Continuation could not reach lambda = 1; carries the trace recorded so far."""

    def __init__(self, message, step, trace=None, solution=None):
        super().__init__(message)
        self.step = step
        self.trace = trace
        self.solution = solution
