"""Tests for scenarios, closed-loop simulation and trajectory comparison."""

import csv

import numpy as np
import pytest

from mpcaug.errors import ConfigurationError, DimensionError, ScenarioMismatchError, SolverError
from mpcaug.learning.policy import MlpParams
from mpcaug.models.defaults import building_scenario, building_spec, cstr_corner_scenarios, cstr_spec
from mpcaug.nlp.solver import SolverOptions
from mpcaug.sim.closed_loop import (
    PLOT_FILES,
    ApproximateController,
    ExactMpcController,
    Scenario,
    ScenarioEvent,
    compare,
    run_closed_loop,
    tracking_error,
    write_plot_data,
)

from .analytic import double_integrator_spec


class ConstantController:
    name = "constant"

    def __init__(self, u, fail_at=None):
        self.u = np.atleast_1d(np.asarray(u, dtype=float))
        self.fail_at = fail_at
        self.calls = 0

    def reset(self):
        self.calls = 0

    def __call__(self, x_tilde):
        if self.fail_at is not None and self.calls == self.fail_at:
            raise SolverError("forced failure", iterations=3)
        self.calls += 1
        return self.u


def _rest(steps=10, x0=(0.0, 0.0)):
    return Scenario.piecewise("rest", x0, steps, (0.0, 0.0), (), (0.0,))


class TestScenario:
    """Test scenario schedules and validation."""

    def test_events_hold_until_the_end(self):
        """Test that a step event changes the schedule from its step on."""
        sc = Scenario.piecewise(
            "step", (0.0, 0.0), 6, (0.0, 0.0), (1.0,), (0.0,),
            events=(ScenarioEvent(2, setpoint={0: 1.0}), ScenarioEvent(4, disturbance={0: 3.0})),
        )
        np.testing.assert_array_equal(sc.setpoints[:, 0], [0, 0, 1, 1, 1, 1])
        np.testing.assert_array_equal(sc.disturbances[:, 0], [1, 1, 1, 1, 3, 3])

    def test_dimension_check(self):
        """Test that a scenario for another model is rejected."""
        sc = Scenario.piecewise("bad", (0.0,), 3, (0.0,), (), (0.0,))
        with pytest.raises(DimensionError):
            sc.check(double_integrator_spec())

    def test_setpoint_outside_bounds(self):
        """Test that an unreachable setpoint is a configuration error."""
        sc = Scenario.piecewise("far", (0.0, 0.0), 3, (20.0, 0.0), (), (0.0,))
        with pytest.raises(ConfigurationError):
            sc.check(double_integrator_spec())

    def test_built_in_scenarios(self):
        """Test the four CSTR corners and the 12 h building run."""
        corners = cstr_corner_scenarios()
        assert len(corners) == 4
        for sc in corners:
            sc.check(cstr_spec(horizon=5))
        building = building_scenario()
        assert building.steps == 720
        assert building.setpoints[180, 1] == pytest.approx(22.0)
        assert building.setpoints[179, 1] == pytest.approx(20.0)
        assert building.disturbances[360, 1] == pytest.approx(0.15)
        assert building.disturbances[540, 0] == pytest.approx(13.0)
        assert building.disturbances[539, 0] == pytest.approx(18.0)
        building.check(building_spec(horizon=5))

    def test_start_outside_bounds(self):
        """Test that a scenario starting outside the state box is rejected."""
        sc = Scenario.piecewise("outside", (12.0, 0.0), 3, (0.0, 0.0), (), (0.0,))
        with pytest.raises(ConfigurationError):
            sc.check(double_integrator_spec())

    def test_building_start_is_a_feasible_steady_state(self):
        """Test that the building run starts inside the temperature box and at rest."""
        building = building_scenario()
        spec = building_spec(horizon=5)
        assert spec.state_bounds.contains(building.x0)
        f = spec.model.rhs(building.x0, building.initial_input, building.disturbances[0])
        assert np.max(np.abs(f)) < 1e-9
        assert building.x0[3] > 12.0


class TestRunClosedLoop:
    """Test the receding-horizon loop."""

    def test_zero_input_at_rest(self):
        """Test that a plant at rest under zero input stays at the setpoint."""
        spec = double_integrator_spec(horizon=5)
        traj = run_closed_loop(ConstantController(0.0), _rest(), spec)
        assert traj.steps == 10
        np.testing.assert_array_equal(traj.states, np.zeros((11, 2)))
        assert tracking_error(traj, spec.cost.tracked_states) == 0.0
        assert traj.failure is None

    def test_violations_are_recorded(self):
        """Test that leaving the state box is logged per step and state."""
        spec = double_integrator_spec(horizon=5)
        traj = run_closed_loop(ConstantController(1.0), _rest(steps=5, x0=(0.0, 4.95)), spec)
        assert traj.violations
        assert all(i == 1 for _, i, _ in traj.violations)

    def test_controller_failure_truncates(self):
        """Test that a failing controller ends the run with a message."""
        spec = double_integrator_spec(horizon=5)
        traj = run_closed_loop(ConstantController(0.0, fail_at=3), _rest(), spec)
        assert traj.steps == 3
        assert "step 3" in traj.failure

    def test_exact_mpc_regulates(self):
        """Test that the exact MPC drives the double integrator towards the origin."""
        spec = double_integrator_spec(horizon=10)
        traj = run_closed_loop(ExactMpcController(spec), _rest(steps=40, x0=(1.0, 0.0)), spec)
        assert traj.failure is None
        assert np.all(np.abs(traj.inputs) <= 1.0 + 1e-9)
        assert np.linalg.norm(traj.states[-1]) < 0.1 * np.linalg.norm(traj.states[0])

    def test_trajectory_table(self, tmp_path):
        """Test the CSV header and row count."""
        spec = double_integrator_spec(horizon=5)
        traj = run_closed_loop(ConstantController(0.5), _rest(steps=4), spec)
        path = tmp_path / "traj.csv"
        traj.write_table(path, spec.model)
        with open(path) as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["time_s", "x0", "x1", "u0", "x0_sp", "x1_sp", "stage_cost", "controller_time_s"]
        assert len(rows) == 5
        assert float(rows[2][0]) == pytest.approx(0.1)

    def test_plot_data(self, tmp_path):
        """Test one table per plot, keyed by scenario and controller."""
        spec = double_integrator_spec(horizon=5)
        a = run_closed_loop(ConstantController(0.0), _rest(steps=4), spec)
        b = run_closed_loop(ConstantController(0.5), _rest(steps=4), spec)
        paths = write_plot_data(tmp_path / "plots", [(a, b)], spec.model)
        assert [p.name for p in paths] == list(PLOT_FILES)

        tables = {}
        for p in paths:
            with open(p) as f:
                tables[p.name] = list(csv.reader(f))
        states, inputs, gaps = (tables[name] for name in PLOT_FILES)
        assert states[0] == ["scenario", "controller", "time_s", "x0", "x1", "x0_sp", "x1_sp"]
        assert len(states) == 1 + 2 * 5
        assert inputs[0] == ["scenario", "controller", "time_s", "u0"]
        assert len(inputs) == 1 + 2 * 4
        assert gaps[0] == ["scenario", "time_s", "x0_gap", "x1_gap", "u0_gap"]
        assert [float(row[-1]) for row in gaps[1:]] == [0.5] * 4
        assert all(row[0] == "rest" for row in states[1:])


class TestRecedingHorizon:
    """Test that the closed loop applies the first move of each optimal plan."""

    def test_resolve_reproduces_recorded_input(self):
        """Test that a cold re-solve from a recorded state returns the applied input."""
        spec = double_integrator_spec(horizon=10)
        opts = SolverOptions(tol_kkt=1e-10, certify=False)
        traj = run_closed_loop(ExactMpcController(spec, opts), _rest(steps=15, x0=(1.0, 0.0)), spec)
        fresh = ExactMpcController(spec, opts, warm_start=False)
        for t in (0, 4, 9, 14):
            np.testing.assert_allclose(fresh(traj.parameters[t]), traj.inputs[t], atol=1e-6)


class TestCompare:
    """Test the comparison metrics."""

    def test_self_comparison(self):
        """Test that a trajectory compared with itself has no deviation."""
        spec = double_integrator_spec(horizon=5)
        traj = run_closed_loop(ConstantController(0.2), _rest(), spec)
        metrics = compare(traj, traj, spec.cost.tracked_states)
        assert metrics["max_input_deviation"] == 0.0
        assert metrics["max_state_deviation"] == 0.0
        assert metrics["tracking_error"][0] == metrics["tracking_error"][1]

    def test_scenario_mismatch(self):
        """Test that different scenarios cannot be compared."""
        spec = double_integrator_spec(horizon=5)
        a = run_closed_loop(ConstantController(0.0), _rest(), spec)
        b = run_closed_loop(ConstantController(0.0), _rest(x0=(0.5, 0.0)), spec)
        with pytest.raises(ScenarioMismatchError):
            compare(a, b, spec.cost.tracked_states)

    def test_approximate_controller_is_clipped(self):
        """Test that the learned controller output stays within the input bounds."""
        spec = double_integrator_spec(horizon=5)
        params = MlpParams.initialize((2, 4, 1), seed=0, output_bounds=([-1.0], [1.0]))
        params.biases[-1] = np.array([50.0])
        traj = run_closed_loop(ApproximateController(params), _rest(steps=3), spec)
        np.testing.assert_allclose(traj.inputs, 1.0)


@pytest.mark.slow
class TestCstrClosedLoop:
    """Longer closed-loop runs on the reactor."""

    @pytest.mark.parametrize("corner", range(4))
    def test_exact_mpc_from_corner(self, corner):
        """Test that the reactor settles at its setpoint from each corner start."""
        spec = cstr_spec(horizon=40)
        scenario = cstr_corner_scenarios(steps=100)[corner]
        traj = run_closed_loop(ExactMpcController(spec), scenario, spec)
        assert traj.failure is None
        assert np.max(np.abs(traj.states[-1] - np.array([0.2632, 0.6519]))) <= 0.01


@pytest.mark.slow
class TestBuildingClosedLoop:
    """The 12 h building run under exact MPC."""

    def test_exact_mpc_tracks_each_setpoint_segment(self):
        """Test that the interior temperature settles within 0.25 degC before every event."""
        spec = building_spec(horizon=60)
        scenario = building_scenario()
        traj = run_closed_loop(ExactMpcController(spec), scenario, spec)
        assert traj.failure is None
        assert traj.steps == scenario.steps
        assert np.min(traj.states[:, 3]) >= 12.0 - 1e-6
        for end in (180, 360, 540, 720):
            assert abs(traj.states[end, 1] - scenario.setpoints[end - 1, 1]) <= 0.25
