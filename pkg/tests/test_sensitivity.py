"""Tests for the KKT sensitivity system and the tangential predictor."""

import casadi as ca
import numpy as np
import pytest

from mpcaug.errors import DimensionError, SensitivityError, SingularKktError, WeaklyActiveError
from mpcaug.models.defaults import cstr_spec
from mpcaug.nlp.ocp import build_transcription, transcribe
from mpcaug.nlp.problem import ParametricNlp
from mpcaug.nlp.sensitivity import (
    RejectionReason,
    build_sensitivity,
    extract_control,
    tangential_predictor,
)
from mpcaug.nlp.solver import ActiveStatus, KktPoint, solve

from .analytic import double_integrator_spec, scalar_qp


def _point(w, mu, p, status, lam=()):
    return KktPoint(
        w=np.array(w, dtype=float),
        lam=np.array(lam, dtype=float),
        mu=np.array(mu, dtype=float),
        p=np.array(p, dtype=float),
        objective=0.0,
        active_set=tuple(status),
    )


class TestSensitivitySystem:
    """Test the assembled matrices on the scalar QP."""

    def test_active_bound_matrices(self):
        """Test M and N at p = 1 where the bound is strongly active."""
        nlp = scalar_qp().instance(np.array([1.0]))
        sys = build_sensitivity(nlp, _point([0.0], [2.0], [1.0], [ActiveStatus.STRONGLY_ACTIVE]))
        np.testing.assert_allclose(sys.matrix, [[2.0, 1.0], [1.0, 0.0]])
        np.testing.assert_allclose(sys.nmat, [[-2.0], [0.0]])
        np.testing.assert_allclose(sys.parameter_jacobian(), [[0.0], [2.0]], atol=1e-14)

    def test_inactive_bound_follows_parameter(self):
        """Test dw/dp = 1 when the bound is inactive."""
        nlp = scalar_qp().instance(np.array([-1.0]))
        sys = build_sensitivity(nlp, _point([-1.0], [0.0], [-1.0], [ActiveStatus.INACTIVE]))
        assert sys.dim == 1
        np.testing.assert_allclose(sys.step(np.array([0.3])), [0.3])

    def test_weakly_active_point_is_rejected(self):
        """Test that w = 0, mu = 0 cannot be differentiated."""
        nlp = scalar_qp().instance(np.array([0.0]))
        with pytest.raises(WeaklyActiveError) as info:
            build_sensitivity(nlp, _point([0.0], [0.0], [0.0], [ActiveStatus.WEAKLY_ACTIVE]))
        assert info.value.indices == [0]
        assert isinstance(info.value, SensitivityError)

    def test_dependent_active_constraints_are_singular(self):
        """Test that a duplicated active bound fails the inertia check."""
        w = ca.SX.sym("w", 1)
        p = ca.SX.sym("p", 1)
        nlp = ParametricNlp.from_expressions(
            w, p, (w[0] - p[0]) ** 2, ineq=ca.vertcat(w, w), name="duplicated-bound"
        ).instance(np.array([1.0]))
        point = _point([0.0], [1.0, 1.0], [1.0], [ActiveStatus.STRONGLY_ACTIVE] * 2)
        with pytest.raises(SingularKktError):
            build_sensitivity(nlp, point)


class TestTangentialPredictor:
    """Test predictor steps and the active-set change check."""

    def test_zero_perturbation_returns_base_point(self):
        """Test that dp = 0 reproduces the base primal-dual point."""
        nlp = scalar_qp().instance(np.array([1.0]))
        base = _point([0.0], [2.0], [1.0], [ActiveStatus.STRONGLY_ACTIVE])
        result = tangential_predictor(build_sensitivity(nlp, base), np.zeros(1))
        assert result.accepted
        np.testing.assert_array_equal(result.s_hat.s, base.s)

    def test_step_is_linear(self):
        """Test that doubling dp doubles the step."""
        spec = double_integrator_spec(horizon=8)
        nlp = transcribe(spec, np.array([0.5, 0.0]))
        sys = build_sensitivity(nlp, solve(nlp))
        dp = np.array([0.01, -0.02])
        np.testing.assert_allclose(sys.step(2 * dp), 2 * sys.step(dp), rtol=1e-10, atol=1e-14)

    def test_active_multiplier_update(self):
        """Test mu_hat = 2 (p + dp) on the active branch."""
        nlp = scalar_qp().instance(np.array([1.0]))
        sys = build_sensitivity(nlp, _point([0.0], [2.0], [1.0], [ActiveStatus.STRONGLY_ACTIVE]))
        result = tangential_predictor(sys, np.array([0.5]))
        assert result.accepted
        assert result.s_hat.w[0] == pytest.approx(0.0)
        assert result.s_hat.mu[0] == pytest.approx(3.0)

    def test_negative_multiplier_is_rejected(self):
        """Test that dp = -3 from p = 1 predicts mu = -4 and is flagged."""
        nlp = scalar_qp().instance(np.array([1.0]))
        sys = build_sensitivity(nlp, _point([0.0], [2.0], [1.0], [ActiveStatus.STRONGLY_ACTIVE]))
        result = tangential_predictor(sys, np.array([-3.0]))
        assert not result.accepted
        assert result.rejection_reason == RejectionReason.ACTIVE_SET_CHANGE
        assert result.check.negative_multipliers == [0]
        assert result.s_hat.mu[0] == pytest.approx(-4.0)

    def test_violated_inactive_bound_is_rejected(self):
        """Test that dp = 2 from p = -1 predicts w = 1 > 0 and is flagged."""
        nlp = scalar_qp().instance(np.array([-1.0]))
        sys = build_sensitivity(nlp, _point([-1.0], [0.0], [-1.0], [ActiveStatus.INACTIVE]))
        result = tangential_predictor(sys, np.array([2.0]))
        assert not result.accepted
        assert result.check.violated_inactive == [0]
        assert result.check.detail == {"negative_multipliers": [], "violated_inactive": [0]}

    def test_wrong_perturbation_size(self):
        """Test that dp must match the parameter dimension."""
        nlp = scalar_qp().instance(np.array([1.0]))
        sys = build_sensitivity(nlp, _point([0.0], [2.0], [1.0], [ActiveStatus.STRONGLY_ACTIVE]))
        with pytest.raises(DimensionError):
            tangential_predictor(sys, np.zeros(2))


class TestLinearQuadraticExactness:
    """On an LQ problem the predictor is exact while the active set holds."""

    @pytest.mark.parametrize("x0", [[0.5, 0.0], [2.0, -0.5]])
    def test_predictor_matches_resolve(self, x0):
        """Test the predicted solution against a fresh solve at p + dp."""
        spec = double_integrator_spec(horizon=10)
        p = np.array(x0)
        dp = np.array([1e-3, -1e-3])
        nlp = transcribe(spec, p)
        base = solve(nlp)
        result = tangential_predictor(build_sensitivity(nlp, base), dp)
        assert result.accepted

        exact = solve(transcribe(spec, p + dp), base)
        np.testing.assert_allclose(result.s_hat.w, exact.w, atol=1e-6)

        layout = build_transcription(spec).layout
        np.testing.assert_allclose(extract_control(result, layout), exact.w[:1], atol=1e-6)

    def test_random_perturbations(self):
        """Test 50 random perturbations; every accepted one matches the re-solve."""
        spec = double_integrator_spec(horizon=10)
        p = np.array([1.0, 0.0])
        nlp = transcribe(spec, p)
        base = solve(nlp)
        sys = build_sensitivity(nlp, base)
        rng = np.random.default_rng(0)
        checked = 0
        for dp in rng.uniform(-0.05, 0.05, size=(50, 2)):
            result = tangential_predictor(sys, dp)
            exact = solve(transcribe(spec, p + dp), base)
            if not result.accepted or exact.active_set != base.active_set:
                continue
            np.testing.assert_allclose(result.s_hat.w, exact.w, atol=1e-6)
            checked += 1
        assert checked > 0


@pytest.mark.slow
class TestSecondOrderAccuracy:
    """The predictor error shrinks quadratically with the perturbation."""

    def test_error_slope_on_cstr(self):
        """Test a log-log error slope near 2 over four halvings of dp."""
        spec = cstr_spec(horizon=20)
        rng = np.random.default_rng(1)
        sizes = 0.02 * 0.5 ** np.arange(5)
        slopes = []
        for _ in range(10):
            p = np.array([0.2632, 0.6519]) + rng.uniform(-0.05, 0.05, size=2)
            direction = rng.uniform(-1.0, 1.0, size=2)
            direction /= np.max(np.abs(direction))
            nlp = transcribe(spec, p)
            base = solve(nlp)
            sys = build_sensitivity(nlp, base)
            errors = []
            for h in sizes:
                result = tangential_predictor(sys, h * direction)
                exact = solve(transcribe(spec, p + h * direction), base)
                if not result.accepted or exact.active_set != base.active_set:
                    break
                errors.append(np.linalg.norm(result.s_hat.w - exact.w))
            if len(errors) == len(sizes):
                slopes.append(np.polyfit(np.log(sizes), np.log(errors), 1)[0])
        assert slopes
        assert 1.7 <= np.median(slopes) <= 2.3
