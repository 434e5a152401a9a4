"""Exception hierarchy.

Every error carries a short machine-readable ``category`` that the CLI
reports and maps to an exit code.
"""


class AttackPlanError(Exception):
    category = "error"
    exit_code = 1


class InvalidInputError(AttackPlanError, ValueError):
    """Malformed scenario data or arguments violating a precondition."""

    category = "invalid-input"
    exit_code = 2

    def __init__(self, message, field=None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class ModelError(AttackPlanError):
    """A model cannot be constructed from otherwise well-formed input."""

    category = "model-error"
    exit_code = 3


class ImpossibleObservationError(AttackPlanError, ValueError):
    category = "impossible-observation"
    exit_code = 3


class CapExceededError(AttackPlanError):
    """A size guard refused to build or search something too large."""

    category = "cap-exceeded"
    exit_code = 4


class SimulationError(AttackPlanError):
    category = "simulation-error"
    exit_code = 5
