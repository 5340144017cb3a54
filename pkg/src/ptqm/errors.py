"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class PTQMError(Exception):
    """Base class for every error raised by :mod:`ptqm`."""


class ValidationError(PTQMError, ValueError):
    """Input violates a documented precondition (shape, finiteness, domain)."""


class ConvergenceError(PTQMError):
    """An iterative kernel failed to reach its residual target."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class HermiticityError(ValidationError):
    """A Hermitian operator was required but the input is not Hermitian."""

    def __init__(self, message: str, defect: float):
        super().__init__(message)
        self.defect = defect


class NotPositiveDefiniteError(PTQMError):
    """A metric candidate has eigenvalues at or below the positivity floor."""

    def __init__(self, message: str, eigenvalues):
        super().__init__(message)
        self.eigenvalues = list(eigenvalues)


class ScaledArgumentOverflow(PTQMError, OverflowError):
    """Matrix exponential argument too large to represent the result."""


class StiffnessError(PTQMError):
    """Adaptive step size underflowed; the problem is likely stiff."""

    def __init__(self, message: str, t: float):
        super().__init__(message)
        self.t = t


class ExceptionalPointError(PTQMError):
    """Eigenvectors coalesce, so the requested construction does not exist."""


class DomainError(ValidationError):
    """Argument outside the domain of a closed-form expression."""


class ObstructionError(PTQMError):
    """Perturbative equation has no solution: source outside range of ad."""

    def __init__(self, message: str, generator: str):
        super().__init__(message)
        self.generator = generator


class TruncationError(PTQMError):
    """A truncated representation leaks weight across its boundary."""


class SingularTransformationError(PTQMError):
    """A Darboux seed or Dyson map vanishes or becomes non-invertible."""

    def __init__(self, message: str, location=None):
        super().__init__(message)
        self.location = location


class InvariantError(PTQMError):
    """A candidate invariant violates its defining property."""
