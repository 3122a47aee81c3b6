import os
from dataclasses import asdict, dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import yaml

from ..errors import ConfigurationError
from ..learning.policy import SplitSpec, TrainingOptions
from ..learning.sampling import SamplerConfig
from ..models.defaults import (
    ProblemDefinition,
    building_scenario,
    building_spec,
    cstr_corner_scenarios,
    cstr_spec,
    get_default_problems,
)
from ..models.params import BuildingParams, CstrParams, OdeModel
from ..nlp.ocp import OcpSpec
from ..nlp.solver import SolverOptions
from ..sim.closed_loop import Scenario, ScenarioEvent
from .validators import ConfigValidator, ValidationIssue, ValidationReporter

ENV_OUTPUT_DIR = "MPCAUG_OUTPUT_DIR"
RESOLVED_CONFIG_NAME = "config.resolved.yaml"

# every stage draws from its own substream of the global seed
SEED_STAGES = ("sampler", "split", "training", "bench")

# sections a custom problem file may set
PROBLEM_SECTIONS = ("model", "ocp", "solver", "sampler", "training", "scenario")


def seed_for(global_seed: int, stage: str) -> int:
    if stage not in SEED_STAGES:
        raise ConfigurationError(f"unknown seed stage '{stage}'", "seed")
    seq = np.random.SeedSequence([global_seed, SEED_STAGES.index(stage)])
    return int(seq.generate_state(1)[0])


def _plain(value: Any) -> Any:
    """Convert to YAML-safe builtins."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, Path):
        return str(value)
    return value


def _index(model: OdeModel, key: Any, names: tuple, what: str) -> int:
    if isinstance(key, int):
        if not 0 <= key < len(names):
            raise ConfigurationError(f"{what} index {key} out of range", "scenario.events")
        return key
    if key not in names:
        raise ConfigurationError(f"{model.name} has no {what} '{key}'", "scenario.events")
    return names.index(key)


def load_scenario(path: Path, model: OdeModel) -> Scenario:
    """Piecewise-constant scenario from YAML.

    Keys: ``name``, ``x0``, ``steps``, ``setpoint``, ``disturbance``,
    ``initial_input`` and ``events`` (a list of ``{step, setpoint, disturbance}``
    where the inner mappings go from state or disturbance name to value).
    """
    with open(path, "r") as f:
        data = yaml.safe_load(f) or {}
    try:
        events = [
            ScenarioEvent(
                step=int(e["step"]),
                setpoint={
                    _index(model, k, model.state_names, "state"): float(v)
                    for k, v in (e.get("setpoint") or {}).items()
                },
                disturbance={
                    _index(model, k, model.disturbance_names, "disturbance"): float(v)
                    for k, v in (e.get("disturbance") or {}).items()
                },
            )
            for e in data.get("events") or []
        ]
        return Scenario.piecewise(
            name=str(data.get("name", Path(path).stem)),
            x0=data["x0"],
            steps=int(data["steps"]),
            setpoint=data["setpoint"],
            disturbance=data.get("disturbance", model.nominal_disturbance),
            initial_input=data.get("initial_input", [0.0] * model.n_u),
            events=events,
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigurationError(f"invalid scenario file {path}: {e}", "scenario.file") from e


def load_problem_file(path: Path) -> Dict[str, Any]:
    """Custom problem: a built-in ``base`` problem with its sections overridden.

    A relative scenario file is taken relative to the problem file.
    """
    path = Path(path)
    with open(path, "r") as f:
        try:
            data = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigurationError(f"{path} is not valid YAML: {e}", "problem") from e
    scenario = data.get("scenario") if isinstance(data, dict) else None
    if isinstance(scenario, dict) and scenario.get("file") and not Path(str(scenario["file"])).is_absolute():
        data["scenario"] = {**scenario, "file": str(path.parent / str(scenario["file"]))}
    _raise_on_errors(ConfigValidator().validate_problem_file(data))
    data.setdefault("name", path.stem)
    return data


@dataclass
class ResolvedRun:
    """Everything a pipeline stage needs, built from a RunConfig."""

    problem: ProblemDefinition
    solver: SolverOptions
    sampler: SamplerConfig
    training: TrainingOptions
    split: SplitSpec
    scenarios: List[Scenario]

    @property
    def spec(self) -> OcpSpec:
        return self.problem.spec


@dataclass
class RunConfig:
    problem: str = "cstr"
    mode: str = "augmented"
    model: Dict[str, Any] = field(default_factory=dict)
    ocp: Dict[str, Any] = field(default_factory=dict)
    solver: Dict[str, Any] = field(default_factory=dict)
    sampler: Dict[str, Any] = field(default_factory=dict)
    training: Dict[str, Any] = field(default_factory=dict)
    scenario: Dict[str, Any] = field(default_factory=dict)
    output_dir: Path = Path("runs")
    seed: int = 0
    jobs: int = 1
    source: Optional[Path] = None

    @classmethod
    def from_dict(cls, data: Dict[str, Any], source: Optional[Path] = None) -> "RunConfig":
        issues = ConfigValidator().validate_run_config(data)
        _raise_on_errors(issues)
        known = {f.name for f in fields(cls)} - {"source"}
        values = {k: v for k, v in data.items() if k in known and v is not None}
        if "output_dir" in values:
            values["output_dir"] = Path(values["output_dir"])
        config = cls(source=source, **values)
        env_dir = os.getenv(ENV_OUTPUT_DIR)
        if env_dir:
            config.output_dir = Path(env_dir)
        return config

    @classmethod
    def load(cls, path: Optional[Path] = None) -> "RunConfig":
        """Defaults, overridden by the YAML file at ``path`` and then by the environment."""
        if path is None:
            return cls.from_dict({})
        path = Path(path)
        with open(path, "r") as f:
            try:
                data = yaml.safe_load(f) or {}
            except yaml.YAMLError as e:
                raise ConfigurationError(f"{path} is not valid YAML: {e}") from e
        if not isinstance(data, dict):
            raise ConfigurationError(f"{path} must hold a mapping of sections")
        return cls.from_dict(data, source=path)

    def with_overrides(
        self,
        problem: Optional[str] = None,
        mode: Optional[str] = None,
        n_s: Optional[int] = None,
        n_p: Optional[int] = None,
        jobs: Optional[int] = None,
        seed: Optional[int] = None,
        output_dir: Optional[Path] = None,
        horizon: Optional[int] = None,
    ) -> "RunConfig":
        """Command-line flags take precedence over the file and the environment."""
        config = replace(
            self,
            model=dict(self.model),
            ocp=dict(self.ocp),
            sampler=dict(self.sampler),
        )
        if problem is not None:
            if problem != self.problem:
                config.model = {}
            config.problem = problem
        if mode is not None:
            config.mode = mode
        if n_s is not None:
            config.sampler["n_s"] = n_s
        if n_p is not None:
            config.sampler["n_p"] = n_p
        if jobs is not None:
            config.jobs = jobs
        if seed is not None:
            config.seed = seed
        if output_dir is not None:
            config.output_dir = Path(output_dir)
        if horizon is not None:
            config.ocp["horizon"] = horizon
        issues = ConfigValidator().validate_run_config(config.as_raw())
        issues += ConfigValidator().validate_output_dir(config.output_dir)
        _raise_on_errors(issues)
        return config

    def as_raw(self) -> Dict[str, Any]:
        return {
            "problem": self.problem,
            "mode": self.mode,
            "model": self.model,
            "ocp": self.ocp,
            "solver": self.solver,
            "sampler": self.sampler,
            "training": self.training,
            "scenario": self.scenario,
            "output_dir": str(self.output_dir),
            "seed": self.seed,
            "jobs": self.jobs,
        }

    def _spec(self, base: OcpSpec) -> OcpSpec:
        dt = float(self.ocp.get("dt", base.dt))
        spec = base
        if self.model or dt != base.dt:
            try:
                if self.problem == "cstr":
                    spec = cstr_spec(base.horizon, dt, CstrParams(**self.model))
                else:
                    spec = building_spec(base.horizon, dt, BuildingParams(**self.model))
            except TypeError as e:
                raise ConfigurationError(f"unknown model parameter: {e}", "model") from e
        if "substeps" in self.ocp:
            spec = replace(spec, substeps=int(self.ocp["substeps"]))
        return spec

    def _scenarios(self, problem: ProblemDefinition, spec: OcpSpec) -> List[Scenario]:
        if self.scenario.get("file"):
            return [load_scenario(Path(self.scenario["file"]), spec.model)]
        steps = self.scenario.get("steps")
        if self.problem == "cstr":
            return cstr_corner_scenarios(steps) if steps else problem.scenarios
        if steps or spec.dt != problem.spec.dt:
            return [building_scenario(steps or 720, spec.dt)]
        return problem.scenarios

    def _sampler(self, default: SamplerConfig) -> SamplerConfig:
        data = default.as_dict()
        data["seed"] = seed_for(self.seed, "sampler")
        data.update(self.sampler)
        return SamplerConfig.from_dict(data)

    def _training(self, default: TrainingOptions, split: SplitSpec) -> tuple:
        data = dict(self.training)
        fractions = data.pop("split", split.fractions)
        data.setdefault("seed", seed_for(self.seed, "training"))
        if "hidden" in data:
            data["hidden"] = tuple(data["hidden"])
        try:
            opts = replace(default, **data)
        except TypeError as e:
            raise ConfigurationError(f"unknown training option: {e}", "training") from e
        return opts, SplitSpec(tuple(fractions), seed_for(self.seed, "split"))

    def _expanded(self) -> Tuple["RunConfig", Optional[str]]:
        """Fold a custom problem file into a config of its base problem; run settings win over the file."""
        if not ConfigValidator().is_problem_file(self.problem):
            return self, None
        data = load_problem_file(Path(self.problem))
        sections = {key: {**(data.get(key) or {}), **getattr(self, key)} for key in PROBLEM_SECTIONS}
        return replace(self, problem=data["base"], **sections), str(data["name"])

    def resolve(self) -> ResolvedRun:
        config, name = self._expanded()
        problem = get_default_problems(config.ocp.get("horizon"))[config.problem]
        spec = config._spec(problem.spec)
        if name:
            spec = replace(spec, name=name)
        training, split = config._training(problem.training, problem.split)
        scenarios = config._scenarios(problem, spec)
        for s in scenarios:
            s.check(spec)
        return ResolvedRun(
            problem=replace(problem, spec=spec),
            solver=SolverOptions.from_dict(config.solver),
            sampler=config._sampler(problem.sampler),
            training=training,
            split=split,
            scenarios=scenarios,
        )

    def resolved_dict(self, run: Optional[ResolvedRun] = None) -> Dict[str, Any]:
        """The fully resolved configuration, every default included."""
        run = run or self.resolve()
        ocp = run.spec.describe()
        ocp["fingerprint"] = run.spec.fingerprint()
        training = asdict(run.training)
        training["split"] = list(run.split.fractions)
        training["split_seed"] = run.split.seed
        return _plain(
            {
                "problem": self.problem,
                "mode": self.mode,
                "source": self.source,
                "ocp": ocp,
                "solver": asdict(run.solver),
                "sampler": run.sampler.as_dict(),
                "training": training,
                "scenarios": [s.as_dict() for s in run.scenarios],
                "output_dir": self.output_dir,
                "seed": self.seed,
                "jobs": self.jobs,
            }
        )

    def dump_resolved(self, run: Optional[ResolvedRun] = None) -> str:
        return yaml.safe_dump(self.resolved_dict(run), sort_keys=False)

    def write_resolved(self, run: Optional[ResolvedRun] = None) -> Path:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        path = self.output_dir / RESOLVED_CONFIG_NAME
        path.write_text(self.dump_resolved(run))
        return path


def _raise_on_errors(issues: List[ValidationIssue]):
    reporter = ValidationReporter()
    first = reporter.first_error(issues)
    if first is not None:
        message = first.message
        if first.suggestion:
            message += f" ({first.suggestion})"
        raise ConfigurationError(message, first.field)
