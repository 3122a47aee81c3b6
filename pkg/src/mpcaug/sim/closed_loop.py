"""Receding-horizon simulation of the exact MPC and of the learned policy on one plant."""

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Protocol, Sequence, Tuple

import numpy as np

from ..errors import (
    ConfigurationError,
    ControllerFailure,
    DimensionError,
    ModelDomainError,
    ScenarioMismatchError,
    SolverError,
)
from ..learning.policy import MlpParams, forward
from ..models.dynamics import rk4_step
from ..models.params import OdeModel
from ..nlp.ocp import OcpSpec, build_transcription, transcribe
from ..nlp.sensitivity import extract_control
from ..nlp.solver import KktPoint, SolverOptions, solve

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScenarioEvent:
    step: int
    setpoint: Mapping[int, float] = field(default_factory=dict)
    disturbance: Mapping[int, float] = field(default_factory=dict)


@dataclass
class Scenario:
    name: str
    x0: np.ndarray
    setpoints: np.ndarray
    disturbances: np.ndarray
    initial_input: np.ndarray

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        self.setpoints = np.atleast_2d(np.asarray(self.setpoints, dtype=float))
        d = np.asarray(self.disturbances, dtype=float)
        self.disturbances = d.reshape(len(self.setpoints), -1) if d.size else np.zeros((len(self.setpoints), 0))
        self.initial_input = np.asarray(self.initial_input, dtype=float)

    @property
    def steps(self) -> int:
        return len(self.setpoints)

    @classmethod
    def piecewise(
        cls,
        name: str,
        x0: Sequence[float],
        steps: int,
        setpoint: Sequence[float],
        disturbance: Sequence[float],
        initial_input: Sequence[float],
        events: Sequence[ScenarioEvent] = (),
    ) -> "Scenario":
        """Constant schedules changed by step events that hold until the end."""
        sp = np.tile(np.asarray(setpoint, dtype=float), (steps, 1))
        dist = np.tile(np.asarray(disturbance, dtype=float), (steps, 1))
        for event in sorted(events, key=lambda e: e.step):
            for i, v in event.setpoint.items():
                sp[event.step :, i] = v
            for i, v in event.disturbance.items():
                dist[event.step :, i] = v
        return cls(name, np.asarray(x0, dtype=float), sp, dist, np.asarray(initial_input, dtype=float))

    def check(self, spec: OcpSpec):
        m = spec.model
        if self.x0.shape != (m.n_x,) or self.setpoints.shape[1] != m.n_x:
            raise DimensionError(f"scenario '{self.name}' does not match the {m.name} states")
        if self.disturbances.shape[1] != m.n_d or self.initial_input.shape != (m.n_u,):
            raise DimensionError(f"scenario '{self.name}' does not match the {m.name} inputs")
        if not spec.state_bounds.contains(self.x0):
            raise ConfigurationError(f"scenario '{self.name}' starts outside the state bounds", "scenario")
        lo, hi = np.array(spec.state_bounds.lower), np.array(spec.state_bounds.upper)
        tracked = spec.cost.tracked_states
        sp = self.setpoints[:, tracked]
        if np.any(sp < lo[tracked]) or np.any(sp > hi[tracked]):
            raise ConfigurationError(f"scenario '{self.name}' has setpoints outside the state bounds", "scenario")

    def same_as(self, other: "Scenario") -> bool:
        return (
            self.name == other.name
            and np.array_equal(self.x0, other.x0)
            and np.array_equal(self.setpoints, other.setpoints)
            and np.array_equal(self.disturbances, other.disturbances)
        )

    def as_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "x0": self.x0.tolist(),
            "steps": self.steps,
            "initial_input": self.initial_input.tolist(),
        }


class Controller(Protocol):
    name: str

    def reset(self): ...

    def __call__(self, x_tilde: np.ndarray) -> np.ndarray: ...


class ExactMpcController:
    """Solves the MPC problem at every step, warm-started from the shifted previous solution."""

    name = "exact-mpc"

    def __init__(self, spec: OcpSpec, opts: Optional[SolverOptions] = None, warm_start: bool = True):
        self.spec = spec
        self.opts = opts or SolverOptions(certify=False)
        self.warm_start = warm_start
        self.transcription = build_transcription(spec)
        self.last: Optional[KktPoint] = None

    def reset(self):
        self.last = None

    def _shifted(self) -> Optional[KktPoint]:
        if self.last is None or not self.warm_start:
            return None
        tr = self.transcription
        return KktPoint(
            w=tr.layout.shift(self.last.w),
            lam=tr.shift_equality(self.last.lam),
            mu=tr.shift_inequality(self.last.mu),
            p=self.last.p,
            objective=float("nan"),
            active_set=(),
        )

    def __call__(self, x_tilde: np.ndarray) -> np.ndarray:
        nlp = transcribe(self.spec, x_tilde)
        start = self._shifted()
        try:
            point = solve(nlp, start, self.opts)
        except SolverError as e:
            if start is None:
                raise
            logger.debug(f"warm start failed ({e}), retrying cold")
            point = solve(nlp, None, self.opts)
        self.last = point
        return extract_control(point, self.transcription.layout)


class ApproximateController:
    name = "approx"

    def __init__(self, params: MlpParams):
        self.params = params

    def reset(self):
        pass

    def __call__(self, x_tilde: np.ndarray) -> np.ndarray:
        return np.atleast_1d(forward(self.params, x_tilde))


@dataclass
class Trajectory:
    controller: str
    scenario: Scenario
    dt: float
    states: np.ndarray
    inputs: np.ndarray
    parameters: np.ndarray
    stage_cost: np.ndarray
    controller_time_s: np.ndarray
    violations: List[Tuple[int, int, float]] = field(default_factory=list)
    failure: Optional[str] = None

    @property
    def steps(self) -> int:
        return len(self.inputs)

    @property
    def time(self) -> np.ndarray:
        return self.dt * np.arange(self.steps + 1)

    @property
    def setpoints(self) -> np.ndarray:
        return self.scenario.setpoints[: self.steps]

    @property
    def disturbances(self) -> np.ndarray:
        return self.scenario.disturbances[: self.steps]

    def write_table(self, path: Path, model: OdeModel):
        """One row per step: time, states, inputs, setpoints, disturbances, stage cost, controller time."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        header = (
            ["time_s"]
            + list(model.state_names)
            + list(model.input_names)
            + [f"{n}_sp" for n in model.state_names]
            + list(model.disturbance_names)
            + ["stage_cost", "controller_time_s"]
        )
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(header)
            for k in range(self.steps):
                writer.writerow(
                    [repr(float(self.time[k]))]
                    + [repr(float(v)) for v in self.states[k]]
                    + [repr(float(v)) for v in self.inputs[k]]
                    + [repr(float(v)) for v in self.setpoints[k]]
                    + [repr(float(v)) for v in self.disturbances[k]]
                    + [repr(float(self.stage_cost[k])), repr(float(self.controller_time_s[k]))]
                )


def run_closed_loop(
    controller: Controller,
    scenario: Scenario,
    spec: OcpSpec,
    plant: Optional[OdeModel] = None,
) -> Trajectory:
    """Simulate ``scenario`` with ``controller`` in the loop; a controller failure truncates the run."""
    plant = plant or spec.model
    scenario.check(spec)
    if plant.n_x != spec.model.n_x or plant.n_u != spec.model.n_u:
        raise DimensionError("plant and controller model dimensions differ")
    controller.reset()

    x = scenario.x0.copy()
    u_prev = scenario.initial_input.copy()
    states = [x.copy()]
    inputs, params, costs, times = [], [], [], []
    violations: List[Tuple[int, int, float]] = []
    failure = None
    lo, hi = np.array(spec.state_bounds.lower), np.array(spec.state_bounds.upper)

    for t in range(scenario.steps):
        sp, d = scenario.setpoints[t], scenario.disturbances[t]
        x_tilde = spec.parameters.assemble(x, sp, d, u_prev)
        t0 = time.perf_counter()
        try:
            u = np.asarray(controller(x_tilde), dtype=float).ravel()
        except (SolverError, ModelDomainError) as e:
            failure = str(ControllerFailure(t, e))
            logger.warning(failure)
            break
        elapsed = time.perf_counter() - t0
        u = spec.input_bounds.clip(u)

        costs.append(float(spec.cost.stage(x, u, u_prev, sp)))
        try:
            x = np.asarray(rk4_step(plant, x, u, d, spec.dt, spec.substeps), dtype=float)
        except ModelDomainError as e:
            failure = str(ControllerFailure(t, e))
            logger.warning(failure)
            costs.pop()
            break
        for i in np.flatnonzero((x < lo) | (x > hi)):
            violations.append((t, int(i), float(x[i])))
        inputs.append(u)
        params.append(x_tilde)
        times.append(elapsed)
        states.append(x.copy())
        u_prev = u

    n_u = spec.model.n_u
    traj = Trajectory(
        controller=controller.name,
        scenario=scenario,
        dt=spec.dt,
        states=np.array(states),
        inputs=np.array(inputs).reshape(-1, n_u),
        parameters=np.array(params).reshape(-1, spec.n_p),
        stage_cost=np.array(costs),
        controller_time_s=np.array(times),
        violations=violations,
        failure=failure,
    )
    logger.info(
        f"{controller.name} on '{scenario.name}': {traj.steps}/{scenario.steps} steps, "
        f"{len(violations)} violations, mean controller time {np.mean(times) if times else 0.0:.2e}s"
    )
    return traj


def tracking_error(traj: Trajectory, tracked: Sequence[int]) -> float:
    """Sum over steps of ||y - y_sp||^2 * dt on the tracked states."""
    idx = list(tracked)
    if traj.steps == 0 or not idx:
        return 0.0
    err = traj.states[: traj.steps, idx] - traj.setpoints[:, idx]
    return float(np.sum(err**2) * traj.dt)


def compare(traj_a: Trajectory, traj_b: Trajectory, tracked: Sequence[int]) -> Dict[str, Any]:
    if not traj_a.scenario.same_as(traj_b.scenario) or traj_a.dt != traj_b.dt:
        raise ScenarioMismatchError(
            f"trajectories ran different scenarios ('{traj_a.scenario.name}' vs '{traj_b.scenario.name}')"
        )
    n = min(traj_a.steps, traj_b.steps)
    deviation = float(np.max(np.abs(traj_a.inputs[:n] - traj_b.inputs[:n]))) if n else 0.0
    state_dev = float(np.max(np.abs(traj_a.states[: n + 1] - traj_b.states[: n + 1])))
    return {
        "scenario": traj_a.scenario.name,
        "controllers": [traj_a.controller, traj_b.controller],
        "tracking_error": [tracking_error(traj_a, tracked), tracking_error(traj_b, tracked)],
        "max_input_deviation": deviation,
        "max_state_deviation": state_dev,
        "mean_controller_time_s": [
            float(np.mean(traj_a.controller_time_s)) if traj_a.steps else 0.0,
            float(np.mean(traj_b.controller_time_s)) if traj_b.steps else 0.0,
        ],
        "violations": [len(traj_a.violations), len(traj_b.violations)],
        "steps": [traj_a.steps, traj_b.steps],
        "failures": [traj_a.failure, traj_b.failure],
    }


PLOT_FILES = ("plot-states.csv", "plot-inputs.csv", "plot-deviation.csv")


def _rows(path: Path, header: List[str], rows: Iterable[List[Any]]) -> Path:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def write_plot_data(
    out_dir: Path, pairs: Sequence[Tuple[Trajectory, Trajectory]], model: OdeModel
) -> List[Path]:
    """Long-format tables for external plotting, one per figure.

    ``plot-states.csv`` holds states against setpoints, ``plot-inputs.csv``
    inputs against disturbances, both keyed by scenario and controller.
    ``plot-deviation.csv`` holds the per-step gap between the two controllers
    of each pair over their common steps.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    states, inputs, deviation = (out_dir / name for name in PLOT_FILES)
    trajectories = [traj for pair in pairs for traj in pair]

    def state_rows():
        for traj in trajectories:
            setpoints = traj.scenario.setpoints
            for k in range(traj.steps + 1):
                sp = setpoints[min(k, len(setpoints) - 1)]
                yield [traj.scenario.name, traj.controller, float(traj.time[k]), *traj.states[k], *sp]

    def input_rows():
        for traj in trajectories:
            for k in range(traj.steps):
                yield [
                    traj.scenario.name,
                    traj.controller,
                    float(traj.time[k]),
                    *traj.inputs[k],
                    *traj.disturbances[k],
                ]

    def deviation_rows():
        for a, b in pairs:
            n = min(a.steps, b.steps)
            for k in range(n):
                yield [
                    a.scenario.name,
                    float(a.time[k]),
                    *np.abs(a.states[k + 1] - b.states[k + 1]),
                    *np.abs(a.inputs[k] - b.inputs[k]),
                ]

    keys = ["scenario", "controller", "time_s"]
    paths = [
        _rows(states, keys + list(model.state_names) + [f"{n}_sp" for n in model.state_names], state_rows()),
        _rows(inputs, keys + list(model.input_names) + list(model.disturbance_names), input_rows()),
        _rows(
            deviation,
            ["scenario", "time_s"]
            + [f"{n}_gap" for n in model.state_names]
            + [f"{n}_gap" for n in model.input_names],
            deviation_rows(),
        ),
    ]
    logger.info(f"wrote plot data for {len(pairs)} scenarios to {out_dir}")
    return paths
