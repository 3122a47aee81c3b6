"""Tests for the MPC transcription."""

from dataclasses import replace

import numpy as np
import pytest

from mpcaug.errors import ConfigurationError, DimensionError
from mpcaug.models.defaults import building_spec, cstr_spec
from mpcaug.nlp.ocp import (
    Box,
    DecisionLayout,
    ParameterRole,
    build_transcription,
    eval_cost,
    eval_derivatives,
    transcribe,
)

from .analytic import double_integrator_spec, finite_difference


class TestDecisionLayout:
    """Test the decision vector bookkeeping."""

    def test_slices(self):
        """Test that inputs come first and states x(1..N) follow."""
        layout = DecisionLayout(horizon=3, n_x=2, n_u=1)
        assert layout.n_w == 9
        assert layout.input_slice(2) == slice(2, 3)
        assert layout.state_slice(1) == slice(3, 5)
        assert layout.state_slice(3) == slice(7, 9)

    def test_shift_repeats_last_stage(self):
        """Test the warm-start shift."""
        layout = DecisionLayout(horizon=3, n_x=1, n_u=1)
        w = layout.pack([1.0, 2.0, 3.0], [10.0, 20.0, 30.0])
        np.testing.assert_array_equal(layout.shift(w), [2.0, 3.0, 3.0, 20.0, 30.0, 30.0])


class TestTranscription:
    """Test sizes, bounds and derivatives of the transcribed NLP."""

    def test_cstr_sizes(self):
        """Test the CSTR sizes: N inputs, N states, all bounds finite."""
        spec = cstr_spec(horizon=5)
        nlp = transcribe(spec, np.array([0.3, 0.7]))
        assert nlp.n_w == 5 * (1 + 2)
        assert nlp.n_c == 5 * 2
        assert nlp.n_g == 2 * nlp.n_w
        assert nlp.n_p == 2

    def test_building_sizes_and_parameters(self):
        """Test the building parameter layout of eight entries."""
        spec = building_spec(horizon=4)
        tr = build_transcription(spec)
        assert spec.n_p == 8
        assert spec.parameters.names(spec.model) == ["T_s", "T_i", "T_h", "T_e", "T_i_sp", "T_a", "Phi", "q_prev"]
        assert tr.nlp.n_c == 4 * 4
        assert spec.parameters.has(ParameterRole.PREVIOUS_INPUT)

    def test_infinite_bounds_are_skipped(self):
        """Test that only finite bounds produce inequality rows."""
        spec = double_integrator_spec(horizon=3)
        spec = replace(spec, state_bounds=Box((-np.inf, -np.inf), (np.inf, np.inf)), name="di-free")
        nlp = transcribe(spec, np.zeros(2))
        assert nlp.n_g == 2 * 3

    def test_cache_is_keyed_by_fingerprint(self):
        """Test that equal specs share one transcription."""
        a = build_transcription(cstr_spec(horizon=4))
        b = build_transcription(cstr_spec(horizon=4))
        c = build_transcription(cstr_spec(horizon=5))
        assert a is b
        assert a is not c

    def test_wrong_parameter_size(self):
        """Test that a parameter of the wrong size is rejected."""
        with pytest.raises(DimensionError):
            transcribe(cstr_spec(horizon=3), np.zeros(3))

    def test_shooting_gaps_vanish_on_rollout(self):
        """Test that the rollout guess satisfies the dynamics when no clipping occurs."""
        spec = cstr_spec(horizon=5)
        p = np.array([0.2632, 0.6519])
        nlp = transcribe(spec, p)
        c, g = nlp.eval_constraints(nlp.initial_guess())
        assert np.max(np.abs(c)) < 1e-12
        assert np.all(g <= 1e-12)

    def test_cost_includes_initial_state(self):
        """Test that the stage at k = 0 is charged on the parameter state."""
        spec = double_integrator_spec(horizon=2)
        layout = build_transcription(spec).layout
        w = np.zeros(layout.n_w)
        far = eval_cost(transcribe(spec, np.array([3.0, 0.0])), w)
        near = eval_cost(transcribe(spec, np.array([0.0, 0.0])), w)
        assert far - near == pytest.approx(9.0)

    def test_derivatives_match_finite_differences(self):
        """Test the casadi gradient and parameter Jacobians against central differences."""
        spec = cstr_spec(horizon=3)
        p = np.array([0.25, 0.65])
        nlp = transcribe(spec, p)
        w = nlp.initial_guess() + 0.01
        lam = np.linspace(-1.0, 1.0, nlp.n_c)
        mu = np.linspace(0.1, 1.0, nlp.n_g)
        d = eval_derivatives(nlp, w, lam, mu)

        np.testing.assert_allclose(d.grad_cost, finite_difference(nlp.eval_cost, w)[0], atol=1e-6)
        jc_p = finite_difference(lambda q: nlp.with_parameter(q).eval_constraints(w)[0], p)
        np.testing.assert_allclose(d.jac_eq_p, jc_p, atol=1e-6)

        def grad_l(q):
            blocks = nlp.with_parameter(q).eval_iterate(w, lam, mu)
            return blocks.grad_cost + blocks.jac_eq.T @ lam + blocks.jac_ineq.T @ mu

        np.testing.assert_allclose(d.hess_lagrangian_wp, finite_difference(grad_l, p), atol=1e-5)

    def test_hessian_is_symmetric(self):
        """Test the Lagrangian Hessian symmetry."""
        nlp = transcribe(cstr_spec(horizon=3), np.array([0.25, 0.65]))
        w = nlp.initial_guess()
        d = eval_derivatives(nlp, w, np.ones(nlp.n_c), np.ones(nlp.n_g))
        np.testing.assert_allclose(d.hess_lagrangian, d.hess_lagrangian.T, atol=1e-10)

    def test_derivative_shape_check(self):
        """Test that multipliers of the wrong size are rejected."""
        nlp = transcribe(cstr_spec(horizon=3), np.array([0.25, 0.65]))
        with pytest.raises(DimensionError):
            eval_derivatives(nlp, nlp.initial_guess(), np.ones(1), np.ones(nlp.n_g))


class TestOcpSpec:
    """Test OcpSpec validation."""

    def test_bad_horizon(self):
        """Test that a zero horizon is rejected."""
        with pytest.raises(ConfigurationError):
            cstr_spec(horizon=0)

    def test_fingerprint_changes_with_dt(self):
        """Test that the fingerprint covers the sampling interval."""
        assert cstr_spec(dt=3.0).fingerprint() != cstr_spec(dt=2.0).fingerprint()

    def test_box_contains_and_clip(self):
        """Test the Box helpers."""
        box = Box((0.0, -1.0), (1.0, 1.0))
        assert box.contains([0.5, 0.0])
        assert not box.contains([1.5, 0.0])
        np.testing.assert_array_equal(box.clip(np.array([2.0, -3.0])), [1.0, -1.0])
        with pytest.raises(ConfigurationError):
            Box((1.0,), (0.0,))
