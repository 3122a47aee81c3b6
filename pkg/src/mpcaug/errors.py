"""Exception hierarchy shared by every mpcaug module."""

from typing import Optional


class MpcAugError(Exception):
    """Base class for all mpcaug failures."""


class ConfigurationError(MpcAugError):
    """A configuration value is missing, malformed or out of range."""

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.field = field


class DimensionError(MpcAugError):
    """Array dimensions disagree with the declared layout."""


class ModelDomainError(MpcAugError):
    """A model evaluator was called outside its domain."""


class ConvergenceError(MpcAugError):
    """An iterative root finder did not converge."""


class SolverError(MpcAugError):
    """The NLP solver did not return a KKT point."""

    def __init__(self, message: str, iterations: int = 0):
        super().__init__(message)
        self.iterations = iterations


class MaxIterationsError(SolverError):
    pass


class InfeasibleProblemError(SolverError):
    pass


class SensitivityError(MpcAugError):
    """The KKT sensitivity system cannot be built at the given point."""


class WeaklyActiveError(SensitivityError):
    def __init__(self, indices: list[int]):
        super().__init__(f"strict complementarity fails at inequalities {indices[:10]}")
        self.indices = indices


class SingularKktError(SensitivityError):
    pass


class SchemaVersionError(MpcAugError):
    pass


class CorruptDatasetError(MpcAugError):
    """A dataset file's header disagrees with its records."""


class EmptyDatasetError(MpcAugError):
    pass


class DegenerateDataError(MpcAugError):
    pass


class ScenarioMismatchError(MpcAugError):
    pass


class ControllerFailure(MpcAugError):
    def __init__(self, step: int, cause: Exception):
        super().__init__(f"controller failed at step {step}: {cause}")
        self.step = step
        self.cause = cause
