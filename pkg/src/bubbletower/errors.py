"""Exception hierarchy shared by all modules and mapped to CLI exit codes."""


class BubbleTowerError(Exception):
    exit_code = 1


class DomainError(BubbleTowerError, ValueError):
    """Input outside the admissible parameter range (usage-level problem)."""

    exit_code = 2


class StructuralFailure(BubbleTowerError):
    """A mathematical identity that must hold was violated beyond tolerance."""

    exit_code = 3


class NumericalFailure(BubbleTowerError):
    """A solver failed to converge, produced NaN, or a quadrature diverged."""

    exit_code = 4

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
