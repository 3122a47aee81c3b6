"""Run configuration validators for mpcaug."""

import os
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional


class ValidationSeverity(Enum):
    """Severity levels for validation issues."""

    ERROR = "error"
    WARNING = "warning"
    INFO = "info"


@dataclass
class ValidationIssue:
    """Represents a configuration validation issue."""

    severity: ValidationSeverity
    message: str
    field: Optional[str] = None
    suggestion: Optional[str] = None


class ConfigValidator:
    """Validates the raw (YAML level) run configuration before anything is built."""

    KNOWN_PROBLEMS = ("cstr", "building")

    KNOWN_SECTIONS = {
        "problem",
        "mode",
        "model",
        "ocp",
        "solver",
        "sampler",
        "training",
        "scenario",
        "output_dir",
        "seed",
        "jobs",
    }

    PROBLEM_FILE_SUFFIXES = (".yaml", ".yml")

    # a problem file derives from a built-in problem and may only touch these sections
    PROBLEM_FILE_KEYS = {"base", "name", "model", "ocp", "solver", "sampler", "training", "scenario"}

    GENERATION_MODES = ("augmented", "baseline")

    SAMPLER_MODES = ("grid-two-level", "random-box")

    def __init__(self):
        self.issues: List[ValidationIssue] = []

    def _error(self, message: str, field: Optional[str] = None, suggestion: Optional[str] = None):
        self.issues.append(ValidationIssue(ValidationSeverity.ERROR, message, field, suggestion))

    def _warning(self, message: str, field: Optional[str] = None, suggestion: Optional[str] = None):
        self.issues.append(ValidationIssue(ValidationSeverity.WARNING, message, field, suggestion))

    def validate_run_config(self, data: Dict[str, Any]) -> List[ValidationIssue]:
        """Validate every section of a run configuration."""
        self.issues = []

        unknown = sorted(set(data) - self.KNOWN_SECTIONS)
        for key in unknown:
            self._error(
                f"Unknown configuration section '{key}'",
                field=key,
                suggestion=f"Valid sections: {', '.join(sorted(self.KNOWN_SECTIONS))}",
            )

        problem = data.get("problem", "cstr")
        if self.is_problem_file(problem):
            self.issues.extend(self.validate_input_file(problem, "problem"))
        elif problem not in self.KNOWN_PROBLEMS:
            self._error(
                f"Unknown problem '{problem}'",
                field="problem",
                suggestion=f"Valid problems: {', '.join(self.KNOWN_PROBLEMS)}, or a .yaml problem file",
            )

        mode = data.get("mode", "augmented")
        if mode not in self.GENERATION_MODES:
            self._error(
                f"Unknown generation mode '{mode}'",
                field="mode",
                suggestion=f"Valid modes: {', '.join(self.GENERATION_MODES)}",
            )

        for key in ("model", "ocp", "solver", "sampler", "training", "scenario"):
            if key in data and data[key] is not None and not isinstance(data[key], dict):
                self._error(f"Section '{key}' must be a mapping", field=key)

        self._validate_ocp(data.get("ocp") or {})
        self._validate_sampler(data.get("sampler") or {})
        self._validate_training(data.get("training") or {})
        self._validate_scenario(data.get("scenario") or {})

        seed = data.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            self._error(f"Seed must be a non-negative integer, got {seed!r}", field="seed")

        jobs = data.get("jobs", 1)
        if not isinstance(jobs, int) or isinstance(jobs, bool) or jobs < 1:
            self._error(f"jobs must be a positive integer, got {jobs!r}", field="jobs")
        elif jobs > (os.cpu_count() or 1):
            self._warning(
                f"jobs={jobs} exceeds the {os.cpu_count()} available CPUs",
                field="jobs",
                suggestion="Workers beyond the CPU count only add overhead",
            )

        return self.issues

    def is_problem_file(self, problem: Any) -> bool:
        return isinstance(problem, (str, Path)) and Path(str(problem)).suffix in self.PROBLEM_FILE_SUFFIXES

    def validate_problem_file(self, data: Any) -> List[ValidationIssue]:
        """Validate the contents of a custom problem file."""
        self.issues = []
        if not isinstance(data, dict):
            self._error("Problem file must hold a mapping", field="problem")
            return self.issues

        for key in sorted(set(data) - self.PROBLEM_FILE_KEYS):
            self._error(
                f"Unknown problem file key '{key}'",
                field=f"problem.{key}",
                suggestion=f"Valid keys: {', '.join(sorted(self.PROBLEM_FILE_KEYS))}",
            )
        base = data.get("base")
        if base not in self.KNOWN_PROBLEMS:
            self._error(
                f"Problem file needs a base problem, got {base!r}",
                field="problem.base",
                suggestion=f"Valid bases: {', '.join(self.KNOWN_PROBLEMS)}",
            )
        for key in ("model", "ocp", "solver", "sampler", "training", "scenario"):
            if key in data and data[key] is not None and not isinstance(data[key], dict):
                self._error(f"Section '{key}' must be a mapping", field=f"problem.{key}")

        self._validate_ocp(data.get("ocp") or {})
        self._validate_sampler(data.get("sampler") or {})
        self._validate_training(data.get("training") or {})
        self._validate_scenario(data.get("scenario") or {})
        return self.issues

    def _validate_ocp(self, ocp: Dict[str, Any]):
        if not isinstance(ocp, dict):
            return
        horizon = ocp.get("horizon")
        if horizon is not None and (not isinstance(horizon, int) or horizon < 1):
            self._error(f"Horizon must be a positive integer, got {horizon!r}", field="ocp.horizon")
        dt = ocp.get("dt")
        if dt is not None and (not isinstance(dt, (int, float)) or dt <= 0):
            self._error(f"Sampling time must be positive, got {dt!r}", field="ocp.dt")
        substeps = ocp.get("substeps")
        if substeps is not None and (not isinstance(substeps, int) or substeps < 1):
            self._error(f"substeps must be a positive integer, got {substeps!r}", field="ocp.substeps")

    def _validate_sampler(self, sampler: Dict[str, Any]):
        if not isinstance(sampler, dict):
            return
        mode = sampler.get("mode")
        if mode is not None and mode not in self.SAMPLER_MODES:
            self._error(
                f"Unknown sampler mode '{mode}'",
                field="sampler.mode",
                suggestion=f"Valid modes: {', '.join(self.SAMPLER_MODES)}",
            )
        for key in ("coarse_interval", "fine_interval"):
            value = sampler.get(key)
            if value is None:
                continue
            values = value if isinstance(value, (list, tuple)) else [value]
            if not all(isinstance(v, (int, float)) and v > 0 for v in values):
                self._error(
                    f"Sampling interval must be positive on every axis, got {value!r}",
                    field=f"sampler.{key}",
                )
        for key in ("n_s", "n_p", "fine_steps"):
            value = sampler.get(key)
            if value is not None and (not isinstance(value, int) or value < 0):
                self._error(f"{key} must be a non-negative integer, got {value!r}", field=f"sampler.{key}")
        radius = sampler.get("radius_fraction")
        if radius is not None and not (isinstance(radius, (int, float)) and 0 < radius <= 1):
            self._error(f"radius_fraction must lie in (0, 1], got {radius!r}", field="sampler.radius_fraction")

    def _validate_training(self, training: Dict[str, Any]):
        if not isinstance(training, dict):
            return
        hidden = training.get("hidden")
        if hidden is not None and (
            not isinstance(hidden, (list, tuple)) or not all(isinstance(h, int) and h > 0 for h in hidden)
        ):
            self._error(f"hidden must be a list of positive layer widths, got {hidden!r}", field="training.hidden")
        split = training.get("split")
        if split is not None:
            if not isinstance(split, (list, tuple)) or len(split) != 3:
                self._error("split must hold three fractions", field="training.split")
            elif abs(sum(split) - 1.0) > 1e-9 or any(f <= 0 for f in split):
                self._error(f"split fractions must be positive and sum to 1, got {split!r}", field="training.split")

    def _validate_scenario(self, scenario: Dict[str, Any]):
        if not isinstance(scenario, dict):
            return
        path = scenario.get("file")
        if path is not None:
            self.issues.extend(self.validate_input_file(path, "scenario.file"))
        steps = scenario.get("steps")
        if steps is not None and (not isinstance(steps, int) or steps < 1):
            self._error(f"Scenario steps must be a positive integer, got {steps!r}", field="scenario.steps")

    def validate_input_file(self, path: Any, field: str) -> List[ValidationIssue]:
        """Check that a referenced file exists and is readable."""
        issues: List[ValidationIssue] = []
        p = Path(str(path))
        if not p.exists():
            issues.append(
                ValidationIssue(
                    severity=ValidationSeverity.ERROR,
                    message=f"File does not exist: {p}",
                    field=field,
                    suggestion="Check the path or run the stage that produces it first",
                )
            )
        elif not p.is_file():
            issues.append(ValidationIssue(ValidationSeverity.ERROR, f"Not a file: {p}", field))
        elif not os.access(p, os.R_OK):
            issues.append(ValidationIssue(ValidationSeverity.ERROR, f"No read permission for {p}", field))
        return issues

    def validate_output_dir(self, path: Path) -> List[ValidationIssue]:
        """The output directory may not exist yet; its closest existing ancestor must be writable."""
        issues: List[ValidationIssue] = []
        p = Path(path)
        if p.exists() and not p.is_dir():
            issues.append(
                ValidationIssue(
                    severity=ValidationSeverity.ERROR,
                    message=f"Output path is not a directory: {p}",
                    field="output_dir",
                )
            )
            return issues
        existing = p
        while not existing.exists() and existing != existing.parent:
            existing = existing.parent
        if not os.access(existing, os.W_OK):
            issues.append(
                ValidationIssue(
                    severity=ValidationSeverity.ERROR,
                    message=f"No write permission for output directory: {existing}",
                    field="output_dir",
                    suggestion="Pass --out or set MPCAUG_OUTPUT_DIR to a writable location",
                )
            )
        return issues


class ValidationReporter:
    """Formats and reports validation results."""

    def __init__(self):
        self.severity_tags = {
            ValidationSeverity.ERROR: "[E]",
            ValidationSeverity.WARNING: "[W]",
            ValidationSeverity.INFO: "[I]",
        }

    def format_issues(self, issues: List[ValidationIssue]) -> str:
        """Format validation issues for display."""
        if not issues:
            return "No issues found"

        lines = []
        for issue in issues:
            tag = self.severity_tags[issue.severity]
            field_info = f" ({issue.field})" if issue.field else ""
            line = f"{tag} {issue.severity.value.upper()}{field_info}: {issue.message}"

            if issue.suggestion:
                line += f"\n    suggestion: {issue.suggestion}"

            lines.append(line)

        return "\n".join(lines)

    def get_summary(self, issues: List[ValidationIssue]) -> str:
        """Get a summary of validation results."""
        if not issues:
            return "Configuration validation passed"

        error_count = sum(1 for i in issues if i.severity == ValidationSeverity.ERROR)
        warning_count = sum(1 for i in issues if i.severity == ValidationSeverity.WARNING)
        info_count = sum(1 for i in issues if i.severity == ValidationSeverity.INFO)

        parts = []
        if error_count:
            parts.append(f"{error_count} error(s)")
        if warning_count:
            parts.append(f"{warning_count} warning(s)")
        if info_count:
            parts.append(f"{info_count} info")

        return f"Validation complete: {', '.join(parts)}"

    def has_errors(self, issues: List[ValidationIssue]) -> bool:
        """Check if there are any error-level issues."""
        return any(issue.severity == ValidationSeverity.ERROR for issue in issues)

    def first_error(self, issues: List[ValidationIssue]) -> Optional[ValidationIssue]:
        return next((i for i in issues if i.severity == ValidationSeverity.ERROR), None)
