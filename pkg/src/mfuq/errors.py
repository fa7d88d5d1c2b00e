"""Exception hierarchy shared by the library and the CLI."""


class MfuqError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class DomainError(MfuqError, ValueError):
    """An argument lies outside the domain of the operation."""

    exit_code = 2


class InsufficientDataError(MfuqError, ValueError):
    exit_code = 2


class DegenerateVarianceError(MfuqError, ValueError):
    """A sample that must vary is constant (or a surrogate has zero spread)."""

    exit_code = 2


class ConfigError(MfuqError, ValueError):
    exit_code = 2


class BudgetError(MfuqError):
    """The computational budget cannot accommodate the requested work."""

    exit_code = 3

    def __init__(self, message, phase=None):
        if phase is not None:
            message = f"[{phase}] {message}"
        super().__init__(message)
        self.phase = phase


class BudgetExceededError(BudgetError):
    """Raised by the cost ledger when a charge would overrun the budget."""


class SolverError(MfuqError):
    """Non-convergence of the forward solver; carries residual diagnostics."""

    exit_code = 4

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = list(residuals) if residuals is not None else []


class PolicyInapplicableError(MfuqError):
    """The efficiency condition fails or the sampling policy degenerates."""

    exit_code = 5


class SnapshotFormatError(MfuqError, IOError):
    """Bad magic, unsupported version or truncated snapshot container."""

    exit_code = 2
