"""Plant models of both case studies, a fixed-step RK4 map and an equilibrium finder.

The right-hand sides are written once and evaluate both on numpy arrays and on
casadi symbols; the transcription in ``mpcaug.nlp.ocp`` reuses them verbatim.
"""

import logging
from dataclasses import dataclass
from functools import partial
from typing import Any, Dict, List, Mapping, Optional, Sequence

import casadi as ca
import numpy as np

from ..errors import ConvergenceError, DimensionError, ModelDomainError
from .params import BuildingParams, CstrParams, OdeModel

logger = logging.getLogger(__name__)

_SYMBOLIC = (ca.SX, ca.MX)


def _is_symbolic(*values: Any) -> bool:
    return any(isinstance(v, _SYMBOLIC) for v in values)


def _stack(items: Sequence[Any]) -> Any:
    if _is_symbolic(*items):
        return ca.vertcat(*items)
    return np.array([float(v) for v in items])


def _exp(value: Any) -> Any:
    return ca.exp(value) if _is_symbolic(value) else np.exp(value)


def cstr_rhs(x: Any, u: Any, params: CstrParams) -> Any:
    """Concentration and temperature derivatives of the exothermic CSTR."""
    x1, x2 = x[0], x[1]
    if not _is_symbolic(x2) and float(x2) <= 0.0:
        raise ModelDomainError(f"CSTR temperature must be positive, got {float(x2)}")
    u0 = u[0] if _is_symbolic(u) or np.ndim(u) > 0 else u
    rate = params.k * x1 * _exp(-params.M / x2)
    return _stack(
        [
            (1.0 / params.tau) * (1.0 - x1) - rate,
            (1.0 / params.tau) * (params.x_f - x2) + rate - params.alpha * u0 * (x2 - params.x_c),
        ]
    )


def building_rhs(x: Any, u: Any, d: Any, params: BuildingParams) -> Any:
    """Temperature derivatives of sensor, interior, heater and envelope.

    ``d`` holds the ambient temperature and the solar irradiation.
    """
    T_s, T_i, T_h, T_e = x[0], x[1], x[2], x[3]
    T_a, phi = d[0], d[1]
    q = u[0] if _is_symbolic(u) or np.ndim(u) > 0 else u
    p = params
    return _stack(
        [
            (T_i - T_s) / (p.R_is * p.C_s),
            (T_s - T_i) / (p.R_is * p.C_i)
            + (T_h - T_i) / (p.R_ih * p.C_i)
            + p.A_w * phi / p.C_i
            + (T_e - T_i) / (p.R_ie * p.C_i)
            + (T_a - T_i) / (p.R_ia * p.C_i),
            (T_i - T_h) / (p.R_ih * p.C_h) + q / p.C_h,
            (T_i - T_e) / (p.R_ie * p.C_e) + (T_a - T_e) / (p.R_ea * p.C_e) + p.A_e * phi / p.C_e,
        ]
    )


def _cstr_ode(x: Any, u: Any, d: Any, params: CstrParams) -> Any:
    return cstr_rhs(x, u, params)


def _building_ode(x: Any, u: Any, d: Any, params: BuildingParams) -> Any:
    return building_rhs(x, u, d, params)


def cstr_model(params: Optional[CstrParams] = None) -> OdeModel:
    params = params or CstrParams()
    return OdeModel(
        name="cstr",
        state_names=("x1", "x2"),
        input_names=("u",),
        rhs=partial(_cstr_ode, params=params),
        params=params,
    )


def building_model(params: Optional[BuildingParams] = None) -> OdeModel:
    """Building model with time in seconds (capacitances converted to kJ/degC)."""
    params = (params or BuildingParams()).in_seconds()
    return OdeModel(
        name="building",
        state_names=("T_s", "T_i", "T_h", "T_e"),
        input_names=("q",),
        disturbance_names=("T_a", "Phi"),
        nominal_disturbance=(10.0, 0.0),
        rhs=partial(_building_ode, params=params),
        params=params,
    )


def rk4_step(model: OdeModel, x: Any, u: Any, d: Any, h: float, substeps: int = 1) -> Any:
    """Classical Runge-Kutta step of length h with u and d held constant."""
    if h <= 0:
        raise ValueError(f"step length must be positive, got {h}")
    dt = h / substeps
    for _ in range(substeps):
        k1 = model.rhs(x, u, d)
        k2 = model.rhs(x + (dt / 2) * k1, u, d)
        k3 = model.rhs(x + (dt / 2) * k2, u, d)
        k4 = model.rhs(x + dt * k3, u, d)
        x = x + (dt / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


@dataclass
class Equilibrium:
    x: np.ndarray
    u: np.ndarray
    d: np.ndarray
    residual: float
    iterations: int

    def as_dict(self, model: OdeModel) -> Dict[str, float]:
        names = model.state_names + model.input_names + model.disturbance_names
        return dict(zip(names, np.concatenate([self.x, self.u, self.d]).tolist()))


def find_equilibrium(
    model: OdeModel,
    fixed: Mapping[str, float],
    guess: Optional[Mapping[str, float]] = None,
    equations: Optional[Sequence[int]] = None,
    tol: float = 1e-10,
    max_iter: int = 100,
) -> Equilibrium:
    """Damped Newton on f_c(x, u, d) = 0 over the entries not listed in ``fixed``.

    The Newton matrix is the exact casadi Jacobian of the selected rows.

    ``equations`` selects which right-hand-side rows are driven to zero; by
    default all of them, in which case the free entries must number n_x.
    """
    names = model.state_names + model.input_names + model.disturbance_names
    unknown = [n for n in fixed if n not in names]
    if unknown:
        raise DimensionError(f"unknown model entries {unknown}")
    rows = list(range(model.n_x)) if equations is None else list(equations)
    free = [n for n in names if n not in fixed]
    if len(free) != len(rows):
        raise DimensionError(f"{len(free)} free entries but {len(rows)} equations")

    start = {n: 0.0 for n in names}
    start.update(dict(zip(model.disturbance_names, model.nominal_disturbance)))
    start.update(guess or {})
    start.update(fixed)
    full = np.array([float(start[n]) for n in names])
    free_idx = np.array([names.index(n) for n in free], dtype=int)
    n_x, n_u = model.n_x, model.n_u

    def residual(z: np.ndarray) -> np.ndarray:
        v = full.copy()
        v[free_idx] = z
        f = model.rhs(v[:n_x], v[n_x : n_x + n_u], v[n_x + n_u :])
        return np.asarray(f, dtype=float).ravel()[rows]

    zs = ca.SX.sym("z", len(free))
    position = {int(i): k for k, i in enumerate(free_idx)}
    vs = [zs[position[i]] if i in position else ca.SX(float(full[i])) for i in range(len(names))]

    def column(items: List[Any]) -> Any:
        return ca.vertcat(*items) if items else ca.SX(0, 1)

    xs, us, ds = column(vs[:n_x]), column(vs[n_x : n_x + n_u]), column(vs[n_x + n_u :])
    fs = model.rhs(xs, us, ds)[rows]
    jacobian = ca.Function("equilibrium_jacobian", [zs], [ca.jacobian(fs, zs)])

    z = full[free_idx].copy()
    r = residual(z)
    for iteration in range(max_iter + 1):
        norm = np.max(np.abs(r)) if r.size else 0.0
        if norm <= tol:
            v = full.copy()
            v[free_idx] = z
            logger.debug(f"equilibrium of {model.name} after {iteration} iterations")
            return Equilibrium(v[:n_x], v[n_x : n_x + n_u], v[n_x + n_u :], float(norm), iteration)
        if iteration == max_iter:
            break

        jac = np.array(jacobian(z), dtype=float)
        try:
            dz = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            dz = np.linalg.lstsq(jac, -r, rcond=None)[0]

        alpha = 1.0
        while alpha > 1e-8:
            try:
                trial = residual(z + alpha * dz)
                if np.max(np.abs(trial)) < norm:
                    break
            except ModelDomainError:
                pass
            alpha *= 0.5
        else:
            raise ConvergenceError(f"equilibrium line search stalled at residual {norm:.3e}")
        z = z + alpha * dz
        r = trial

    raise ConvergenceError(f"equilibrium not found within {max_iter} iterations")
