"""Exception taxonomy shared by all modules.

Exit-code mapping in the CLI: DomainError/ContractError/ValidationError
exit 1, NumericalError (and subclasses) exit 2.
"""


class HarmflowError(Exception):
    pass


class DomainError(HarmflowError, ValueError):
    """Invalid input value (bad weight, empty list, out-of-range parameter)."""


class ContractError(HarmflowError, ValueError):
    """A documented precondition between values was violated."""


class ValidationError(HarmflowError, ValueError):
    """A file or message failed schema validation."""

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = list(violations or [])


class NumericalError(HarmflowError, RuntimeError):
    """An iteration failed to converge or a matrix was numerically singular."""


class StabilityError(NumericalError):
    """Energy increased persistently; the flow step size is too large."""
