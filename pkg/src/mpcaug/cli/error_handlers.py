"""Error handling strategies mapping pipeline failures to exit codes and hints."""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Dict, List, Optional

from ..errors import (
    ConfigurationError,
    ControllerFailure,
    CorruptDatasetError,
    ConvergenceError,
    DegenerateDataError,
    DimensionError,
    EmptyDatasetError,
    ModelDomainError,
    ScenarioMismatchError,
    SchemaVersionError,
    SensitivityError,
    SolverError,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


@dataclass(frozen=True)
class Diagnostic:
    message: str
    exit_code: int = EXIT_FAILURE
    hint: Optional[str] = None


class ErrorHandler(ABC):
    """Abstract base class for error handling strategies."""

    @abstractmethod
    def can_handle(self, error: Exception, context: Dict[str, Any]) -> bool:
        """Check if this handler can handle the given error."""

    @abstractmethod
    def handle(self, error: Exception, context: Dict[str, Any]) -> Optional[Diagnostic]:
        """Turn the error into a diagnostic, or None to pass it down the chain."""


class ConfigurationErrorHandler(ErrorHandler):
    """Invalid settings name the offending field."""

    def can_handle(self, error: Exception, context: Dict[str, Any]) -> bool:
        return isinstance(error, (ConfigurationError, DimensionError))

    def handle(self, error: Exception, context: Dict[str, Any]) -> Optional[Diagnostic]:
        field = getattr(error, "field", None)
        where = f" ({field})" if field else ""
        return Diagnostic(
            f"invalid configuration{where}: {error}",
            EXIT_USAGE,
            "Run `mpcaug echo` to see the resolved configuration",
        )


class MissingFileHandler(ErrorHandler):
    def can_handle(self, error: Exception, context: Dict[str, Any]) -> bool:
        return isinstance(error, (FileNotFoundError, IsADirectoryError))

    def handle(self, error: Exception, context: Dict[str, Any]) -> Optional[Diagnostic]:
        filename = getattr(error, "filename", None) or str(error)
        stage = context.get("command", "")
        hints = {
            "train": "Run `mpcaug generate` first to produce a dataset",
            "simulate": "Run `mpcaug train` first to produce a policy",
        }
        return Diagnostic(f"file not found: {filename}", EXIT_USAGE, hints.get(stage))


class PermissionErrorHandler(ErrorHandler):
    def can_handle(self, error: Exception, context: Dict[str, Any]) -> bool:
        return isinstance(error, PermissionError)

    def handle(self, error: Exception, context: Dict[str, Any]) -> Optional[Diagnostic]:
        return Diagnostic(
            f"permission denied: {getattr(error, 'filename', None) or error}",
            EXIT_USAGE,
            "Pass --out or set MPCAUG_OUTPUT_DIR to a writable location",
        )


class FileFormatHandler(ErrorHandler):
    """Files mpcaug cannot read back."""

    def can_handle(self, error: Exception, context: Dict[str, Any]) -> bool:
        return isinstance(error, (SchemaVersionError, CorruptDatasetError))

    def handle(self, error: Exception, context: Dict[str, Any]) -> Optional[Diagnostic]:
        return Diagnostic(f"unreadable file: {error}", EXIT_USAGE, "Regenerate the file with this version")


class DataErrorHandler(ErrorHandler):
    def can_handle(self, error: Exception, context: Dict[str, Any]) -> bool:
        return isinstance(error, (EmptyDatasetError, DegenerateDataError, ScenarioMismatchError))

    def handle(self, error: Exception, context: Dict[str, Any]) -> Optional[Diagnostic]:
        hint = None
        if isinstance(error, EmptyDatasetError):
            hint = "Check the dataset rejection counts; the solver may have failed at every anchor"
        return Diagnostic(f"{type(error).__name__}: {error}", EXIT_FAILURE, hint)


class NumericalFailureHandler(ErrorHandler):
    """Solver, sensitivity and model failures that survived to the top level."""

    def can_handle(self, error: Exception, context: Dict[str, Any]) -> bool:
        return isinstance(
            error, (SolverError, SensitivityError, ConvergenceError, ModelDomainError, ControllerFailure)
        )

    def handle(self, error: Exception, context: Dict[str, Any]) -> Optional[Diagnostic]:
        hint = None
        if isinstance(error, SolverError):
            hint = f"stopped after {error.iterations} iterations; try a larger solver.max_iter"
        return Diagnostic(f"numerical failure: {error}", EXIT_FAILURE, hint)


class ErrorHandlerRegistry:
    """Registry for managing error handlers with fallback chain."""

    def __init__(self):
        self.handlers: List[ErrorHandler] = [
            ConfigurationErrorHandler(),
            MissingFileHandler(),
            PermissionErrorHandler(),
            FileFormatHandler(),
            DataErrorHandler(),
            NumericalFailureHandler(),
        ]

    def add_handler(self, handler: ErrorHandler):
        """Add a custom error handler to the registry."""
        self.handlers.insert(0, handler)  # custom handlers get priority

    def resolve(self, error: Exception, command: str = "") -> Diagnostic:
        """Find the first handler that accepts the error."""
        context = {"command": command, "error_type": type(error).__name__}

        for handler in self.handlers:
            try:
                if handler.can_handle(error, context):
                    result = handler.handle(error, context)
                    if result:
                        return result
            except Exception as handler_error:
                # a broken handler must not hide the original error
                logger.warning(f"error in handler {type(handler).__name__}: {handler_error}")
                continue

        return Diagnostic(f"unhandled error in {command or 'mpcaug'}: {type(error).__name__}: {error}")
