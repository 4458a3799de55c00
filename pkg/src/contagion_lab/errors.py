"""Exception hierarchy shared by all modules."""


class ContagionError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(ContagionError, ValueError):
    """An input object (law, parameters, grid, config) is malformed."""


class DomainError(ContagionError, ValueError):
    """A scalar argument lies outside the domain of the operation."""


class InfeasibleMomentsError(ContagionError, ValueError):
    """A moment triple does not correspond to any law on {-1, 1}^2."""

    def __init__(self, cell, weight):
        self.cell = cell
        self.weight = weight
        super().__init__(
            f"moment triple is not a probability law: cell (sigma, omega)={cell} "
            f"has probability {weight:.6g} < 0"
        )


class RegimeError(ContagionError):
    """Operation requires a different interaction regime."""


class IntegrationBlowupError(ContagionError, ArithmeticError):
    """The integrated state left the admissible cube; the step is too large."""


class SingularDriftError(ContagionError, ArithmeticError):
    """The stationary Lyapunov system is singular or ill conditioned."""


class QuadratureError(ContagionError, ArithmeticError):
    """Quadrature did not converge under node doubling."""


class GridMismatchError(ContagionError, ValueError):
    """Sampling grids of two objects are incompatible."""
