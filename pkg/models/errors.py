"""
Exception hierarchy.

Checks on hypotheses and estimates are reported through report models; the
exceptions below are reserved for inputs or states an operation cannot work
with.
"""
from typing import Optional


class HaptosimError(Exception):
    """Base class for all errors raised by this package."""


class NonpositiveGamma(HaptosimError):
    """g is not positive somewhere on (0, M]."""


class NonmonotoneG(HaptosimError):
    """g' is not positive somewhere on [0, M]."""


class NonpositivePsi(HaptosimError):
    """The sensitivity psi is not positive on the substitution range."""


class InvariantViolation(HaptosimError):
    """A constructed object or trajectory broke one of its invariants."""


class BracketFailure(HaptosimError):
    """A root could not be bracketed."""


class DomainError(HaptosimError):
    """A functional was evaluated outside its domain (e.g. g(w) <= 0)."""


class PositivityLoss(HaptosimError):
    """A time step produced negative density or nonpositive g(w)."""

    def __init__(self, message: str, dt: float):
        super().__init__(message)
        self.dt = dt


class LinearSolveFailure(HaptosimError):
    """The tridiagonal solve broke down."""


class EmptySchedule(HaptosimError):
    """A sweep was requested over zero regularization levels."""


class NoDegeneracy(HaptosimError):
    """The degeneracy mask has no interior zero cells."""


class RunFailure(HaptosimError):
    """A level run ended with the blow-up detector firing."""

    def __init__(self, message: str, level_index: int, eps: float):
        super().__init__(message)
        self.level_index = level_index
        self.eps = eps


class ConfigError(HaptosimError):
    """Base class for run-config errors; carries the offending line."""

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ParseError(ConfigError):
    """Malformed config text."""


class UnknownKey(ConfigError):
    """A key or section the config schema does not know."""


class InvalidValue(ConfigError):
    """A value outside its expected domain."""
