"""Tests for configuration validation functionality."""

import os

import pytest

from mpcaug.cli.config import RunConfig
from mpcaug.cli.validators import (
    ConfigValidator,
    ValidationIssue,
    ValidationReporter,
    ValidationSeverity,
)
from mpcaug.errors import ConfigurationError


def _errors(issues):
    return [issue for issue in issues if issue.severity == ValidationSeverity.ERROR]


class TestConfigValidator:
    """Test configuration validation logic."""

    def test_empty_config_is_valid(self):
        """Test that the defaults need no settings."""
        assert _errors(ConfigValidator().validate_run_config({})) == []

    def test_full_config_is_valid(self):
        """Test a configuration touching every section."""
        data = {
            "problem": "building",
            "mode": "baseline",
            "model": {"R_is": 1.0},
            "ocp": {"horizon": 20, "dt": 60.0, "substeps": 2},
            "solver": {"max_iter": 100},
            "sampler": {"n_s": 10, "n_p": 5, "radius_fraction": 0.05},
            "training": {"hidden": [8, 8], "split": [0.8, 0.1, 0.1]},
            "scenario": {"steps": 30},
            "output_dir": "out",
            "seed": 3,
            "jobs": 1,
        }
        assert _errors(ConfigValidator().validate_run_config(data)) == []

    def test_unknown_section(self):
        """Test that a misspelled section is an error with a suggestion."""
        issues = ConfigValidator().validate_run_config({"samplr": {}})
        errors = _errors(issues)
        assert len(errors) == 1
        assert errors[0].field == "samplr"
        assert "sampler" in errors[0].suggestion

    def test_unknown_problem(self):
        """Test validation with an unknown problem name."""
        errors = _errors(ConfigValidator().validate_run_config({"problem": "pendulum"}))
        assert any("Unknown problem" in issue.message for issue in errors)

    def test_unknown_mode(self):
        """Test that the generation mode is checked."""
        errors = _errors(ConfigValidator().validate_run_config({"mode": "dense"}))
        assert errors[0].field == "mode"

    @pytest.mark.parametrize("interval", [0, -0.1, [0.02, 0.0]])
    def test_nonpositive_interval(self, interval):
        """Test that zero or negative sampling intervals name the field."""
        errors = _errors(ConfigValidator().validate_run_config({"sampler": {"coarse_interval": interval}}))
        assert [e.field for e in errors] == ["sampler.coarse_interval"]

    def test_bad_horizon_and_dt(self):
        """Test the OCP section checks."""
        errors = _errors(ConfigValidator().validate_run_config({"ocp": {"horizon": 0, "dt": -1.0}}))
        assert {e.field for e in errors} == {"ocp.horizon", "ocp.dt"}

    def test_bad_split(self):
        """Test that split fractions must sum to one."""
        errors = _errors(ConfigValidator().validate_run_config({"training": {"split": [0.5, 0.5, 0.5]}}))
        assert errors[0].field == "training.split"

    def test_bad_seed_and_jobs(self):
        """Test seed and worker count checks."""
        errors = _errors(ConfigValidator().validate_run_config({"seed": -1, "jobs": 0}))
        assert {e.field for e in errors} == {"seed", "jobs"}

    def test_too_many_jobs_is_a_warning(self):
        """Test that more workers than CPUs only warns."""
        issues = ConfigValidator().validate_run_config({"jobs": (os.cpu_count() or 1) + 1})
        assert issues and all(i.severity == ValidationSeverity.WARNING for i in issues)

    def test_missing_scenario_file(self, tmp_path):
        """Test that a referenced scenario file must exist."""
        missing = tmp_path / "missing.yaml"
        errors = _errors(ConfigValidator().validate_run_config({"scenario": {"file": str(missing)}}))
        assert errors[0].field == "scenario.file"
        assert "does not exist" in errors[0].message

    def test_problem_file_is_a_problem(self, tmp_path):
        """Test that an existing YAML file is accepted as the problem selector."""
        path = tmp_path / "reactor.yml"
        path.write_text("base: cstr\n")
        assert _errors(ConfigValidator().validate_run_config({"problem": str(path)})) == []

    def test_missing_problem_file(self, tmp_path):
        """Test that a problem file must exist."""
        errors = _errors(ConfigValidator().validate_run_config({"problem": str(tmp_path / "none.yaml")}))
        assert errors[0].field == "problem"
        assert "does not exist" in errors[0].message

    def test_problem_file_contents(self):
        """Test base, unknown keys and nested sections of a problem file."""
        validator = ConfigValidator()
        assert _errors(validator.validate_problem_file({"base": "building", "ocp": {"horizon": 30}})) == []
        fields = {i.field for i in _errors(validator.validate_problem_file({"base": "pendulum", "seed": 3}))}
        assert fields == {"problem.base", "problem.seed"}
        errors = _errors(validator.validate_problem_file({"base": "cstr", "ocp": {"horizon": 0}}))
        assert errors[0].field == "ocp.horizon"
        assert _errors(validator.validate_problem_file(["cstr"]))[0].field == "problem"

    def test_output_dir_is_a_file(self, tmp_path):
        """Test that an existing file cannot be the output directory."""
        path = tmp_path / "taken"
        path.write_text("x")
        errors = _errors(ConfigValidator().validate_output_dir(path))
        assert errors[0].field == "output_dir"

    def test_output_dir_may_not_exist_yet(self, tmp_path):
        """Test that a new directory under a writable parent is accepted."""
        assert ConfigValidator().validate_output_dir(tmp_path / "a" / "b") == []


class TestValidationReporter:
    """Test validation reporting functionality."""

    def test_format_no_issues(self):
        """Test formatting when there are no issues."""
        assert ValidationReporter().format_issues([]) == "No issues found"

    def test_format_issues_with_suggestion(self):
        """Test severity tags, fields and suggestions."""
        issues = [
            ValidationIssue(ValidationSeverity.ERROR, "bad interval", "sampler.coarse_interval", "use 0.0211"),
            ValidationIssue(ValidationSeverity.WARNING, "many jobs", "jobs"),
        ]
        text = ValidationReporter().format_issues(issues)
        assert "[E] ERROR (sampler.coarse_interval): bad interval" in text
        assert "suggestion: use 0.0211" in text
        assert "[W] WARNING (jobs): many jobs" in text

    def test_get_summary(self):
        """Test summary generation."""
        reporter = ValidationReporter()
        assert reporter.get_summary([]) == "Configuration validation passed"
        issues = [
            ValidationIssue(ValidationSeverity.ERROR, "a"),
            ValidationIssue(ValidationSeverity.ERROR, "b"),
            ValidationIssue(ValidationSeverity.INFO, "c"),
        ]
        assert reporter.get_summary(issues) == "Validation complete: 2 error(s), 1 info"

    def test_first_error(self):
        """Test that warnings are skipped when looking for the first error."""
        issues = [
            ValidationIssue(ValidationSeverity.WARNING, "w"),
            ValidationIssue(ValidationSeverity.ERROR, "e", "seed"),
        ]
        reporter = ValidationReporter()
        assert reporter.has_errors(issues)
        assert reporter.first_error(issues).field == "seed"
        assert reporter.first_error(issues[:1]) is None


class TestConfigIntegration:
    """Test validation as part of loading a run configuration."""

    def test_invalid_file_raises_with_field(self, tmp_path):
        """Test that loading a file with a zero interval raises ConfigurationError."""
        path = tmp_path / "run.yaml"
        path.write_text("sampler:\n  coarse_interval: 0\n")
        with pytest.raises(ConfigurationError) as info:
            RunConfig.load(path)
        assert info.value.field == "sampler.coarse_interval"

    def test_not_a_mapping(self, tmp_path):
        """Test that a YAML list is not a configuration."""
        path = tmp_path / "run.yaml"
        path.write_text("- a\n- b\n")
        with pytest.raises(ConfigurationError):
            RunConfig.load(path)

    def test_overrides_are_validated(self, tmp_path):
        """Test that command-line overrides go through the same checks."""
        config = RunConfig.load().with_overrides(output_dir=tmp_path)
        with pytest.raises(ConfigurationError) as info:
            config.with_overrides(horizon=0)
        assert info.value.field == "ocp.horizon"
