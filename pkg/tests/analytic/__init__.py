"""Small problems with closed-form solutions, shared by the test modules."""

from dataclasses import dataclass
from functools import partial
from typing import Any, Tuple

import casadi as ca
import numpy as np

from mpcaug.models.params import OdeModel
from mpcaug.nlp.ocp import Box, OcpSpec, ParameterLayout, QuadraticCost
from mpcaug.nlp.problem import ParametricNlp


def scalar_qp() -> ParametricNlp:
    """min (w - p)^2  s.t.  w <= 0.

    Solution w* = min(p, 0), mu* = 2 max(p, 0); the bound is weakly active at p = 0.
    """
    w = ca.SX.sym("w", 1)
    p = ca.SX.sym("p", 1)
    return ParametricNlp.from_expressions(w, p, (w[0] - p[0]) ** 2, ineq=w, name="scalar-qp")


def scalar_qp_solution(p: float) -> Tuple[float, float]:
    return min(p, 0.0), 2.0 * max(p, 0.0)


def equality_qp() -> ParametricNlp:
    """min (w1 - p)^2 + w2^2  s.t.  w1 + w2 = 1.

    Solution w1 = (1 + p) / 2, w2 = (1 - p) / 2, lam = -(1 - p).
    """
    w = ca.SX.sym("w", 2)
    p = ca.SX.sym("p", 1)
    return ParametricNlp.from_expressions(
        w, p, (w[0] - p[0]) ** 2 + w[1] ** 2, eq=w[0] + w[1] - 1.0, name="equality-qp"
    )


def equality_qp_solution(p: float) -> Tuple[np.ndarray, float]:
    return np.array([(1.0 + p) / 2.0, (1.0 - p) / 2.0]), -(1.0 - p)


@dataclass(frozen=True)
class LinearParams:
    a: Tuple[Tuple[float, ...], ...]
    b: Tuple[Tuple[float, ...], ...]


def _linear_ode(x: Any, u: Any, d: Any, params: LinearParams) -> Any:
    a, b = np.array(params.a), np.array(params.b)
    if isinstance(x, (ca.SX, ca.MX)) or isinstance(u, (ca.SX, ca.MX)):
        return ca.mtimes(ca.DM(a), x) + ca.mtimes(ca.DM(b), u)
    return a @ np.asarray(x, dtype=float) + b @ np.atleast_1d(np.asarray(u, dtype=float))


def linear_model(a, b, name: str = "linear") -> OdeModel:
    params = LinearParams(tuple(map(tuple, a)), tuple(map(tuple, b)))
    n_x, n_u = len(params.a), len(params.b[0])
    return OdeModel(
        name=name,
        state_names=tuple(f"x{i}" for i in range(n_x)),
        input_names=tuple(f"u{j}" for j in range(n_u)),
        rhs=partial(_linear_ode, params=params),
        params=params,
    )


def double_integrator_spec(horizon: int = 10, dt: float = 0.1, u_max: float = 1.0) -> OcpSpec:
    """LQ-MPC of a double integrator: linear dynamics, quadratic cost, box constraints."""
    model = linear_model([[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]], name="double-integrator")
    return OcpSpec(
        model=model,
        horizon=horizon,
        dt=dt,
        state_bounds=Box((-10.0, -5.0), (10.0, 5.0)),
        input_bounds=Box((-u_max,), (u_max,)),
        cost=QuadraticCost(
            state_weights=(1.0, 0.1),
            setpoint=(0.0, 0.0),
            input_weights=(0.01,),
            rate_weights=(0.0,),
        ),
        parameters=ParameterLayout.states_only(2),
        name=f"double-integrator-{horizon}",
    )


def finite_difference(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central differences of a vector function, one column per entry of x."""
    x = np.asarray(x, dtype=float)
    f0 = np.atleast_1d(f(x))
    jac = np.empty((f0.size, x.size))
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        jac[:, j] = (np.atleast_1d(f(x + e)) - np.atleast_1d(f(x - e))) / (2 * h)
    return jac
