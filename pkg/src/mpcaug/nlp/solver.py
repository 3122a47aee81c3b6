"""Primal-dual interior-point solver for parametric NLP instances.

Inequalities get slacks, g(w) + s = 0 with s > 0, and the barrier problem
min J - tau * sum(log s) is solved for a decreasing sequence of tau. Each
Newton step factors the reduced KKT matrix densely and corrects its inertia.
Steps are globalized by a filter line search on (constraint violation,
barrier objective).
"""

import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from scipy.linalg import null_space, svdvals

from ..errors import (
    ConfigurationError,
    DimensionError,
    InfeasibleProblemError,
    MaxIterationsError,
    SolverError,
)
from .linalg import SymmetricFactorization
from .problem import IterateBlocks, NlpInstance

logger = logging.getLogger(__name__)


class ActiveStatus(Enum):
    STRONGLY_ACTIVE = "strongly-active"
    WEAKLY_ACTIVE = "weakly-active"
    INACTIVE = "inactive"


@dataclass(frozen=True)
class SolverOptions:
    tol_kkt: float = 1e-8
    max_iter: int = 200
    eps_active: float = 1e-6
    barrier_init: float = 0.1
    warm_barrier_init: float = 1e-3
    barrier_factor: float = 0.2
    fraction_to_boundary: float = 0.995
    slack_floor: float = 1e-2
    reduced_hessian_tol: float = 1e-6
    licq_tol: float = 1e-8
    certify: bool = True

    def __post_init__(self):
        if self.tol_kkt <= 0:
            raise ConfigurationError("tol_kkt must be positive", "solver.tol_kkt")
        if self.max_iter < 1:
            raise ConfigurationError("max_iter must be at least 1", "solver.max_iter")
        if self.eps_active <= 0:
            raise ConfigurationError("eps_active must be positive", "solver.eps_active")
        if not 0.0 < self.barrier_factor < 1.0:
            raise ConfigurationError("barrier_factor must lie in (0, 1)", "solver.barrier_factor")
        if not 0.0 < self.fraction_to_boundary < 1.0:
            raise ConfigurationError(
                "fraction_to_boundary must lie in (0, 1)", "solver.fraction_to_boundary"
            )
        if self.barrier_init <= 0 or self.warm_barrier_init <= 0:
            raise ConfigurationError("initial barrier parameters must be positive", "solver.barrier_init")

    @property
    def barrier_min(self) -> float:
        return 0.01 * self.tol_kkt

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SolverOptions":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown solver options {sorted(unknown)}", "solver")
        return cls(**data)


@dataclass(frozen=True)
class KktResidual:
    stationarity: float
    primal_eq: float
    primal_ineq: float
    complementarity: float

    @property
    def max(self) -> float:
        return max(self.stationarity, self.primal_eq, self.primal_ineq, self.complementarity)

    def as_dict(self) -> Dict[str, float]:
        return {
            "stationarity": self.stationarity,
            "primal_eq": self.primal_eq,
            "primal_ineq": self.primal_ineq,
            "complementarity": self.complementarity,
        }


@dataclass
class SolveStats:
    iterations: int
    wall_time_s: float
    residual: KktResidual
    barrier: float
    regularization: float
    warm_start: bool
    reduced_hessian_min_eig: Optional[float] = None
    licq_sigma_min: Optional[float] = None

    def as_dict(self) -> Dict[str, Any]:
        return {
            "iterations": self.iterations,
            "wall_time_s": self.wall_time_s,
            "residual": self.residual.as_dict(),
            "barrier": self.barrier,
            "regularization": self.regularization,
            "warm_start": self.warm_start,
            "reduced_hessian_min_eig": self.reduced_hessian_min_eig,
            "licq_sigma_min": self.licq_sigma_min,
        }


@dataclass
class KktPoint:
    """Primal-dual solution (w, lam, mu) of one NLP instance."""

    w: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    p: np.ndarray
    objective: float
    active_set: Tuple[ActiveStatus, ...]
    stats: Optional[SolveStats] = None
    eps_active: float = 1e-6
    certificate_tols: Tuple[float, float] = field(default=(1e-6, 1e-8))

    @property
    def s(self) -> np.ndarray:
        return np.concatenate([self.w, self.lam, self.mu])

    def indices(self, status: ActiveStatus) -> List[int]:
        return [i for i, a in enumerate(self.active_set) if a == status]

    @property
    def strongly_active(self) -> List[int]:
        return self.indices(ActiveStatus.STRONGLY_ACTIVE)

    @property
    def weakly_active(self) -> List[int]:
        return self.indices(ActiveStatus.WEAKLY_ACTIVE)

    @property
    def inactive(self) -> List[int]:
        return self.indices(ActiveStatus.INACTIVE)

    @property
    def second_order_ok(self) -> bool:
        if self.stats is None or self.stats.reduced_hessian_min_eig is None:
            return True
        return self.stats.reduced_hessian_min_eig >= -self.certificate_tols[0]

    @property
    def licq_ok(self) -> bool:
        if self.stats is None or self.stats.licq_sigma_min is None:
            return True
        return self.stats.licq_sigma_min >= self.certificate_tols[1]

    @property
    def certified(self) -> bool:
        return self.second_order_ok and self.licq_ok


def classify_active_set(g: np.ndarray, mu: np.ndarray, eps: float) -> Tuple[ActiveStatus, ...]:
    out = []
    for gi, mi in zip(g, mu):
        if gi < -eps:
            out.append(ActiveStatus.INACTIVE)
        elif mi >= eps:
            out.append(ActiveStatus.STRONGLY_ACTIVE)
        else:
            out.append(ActiveStatus.WEAKLY_ACTIVE)
    return tuple(out)


def _inf_norm(v: np.ndarray) -> float:
    return float(np.max(np.abs(v))) if v.size else 0.0


def _residual_from_blocks(it: IterateBlocks, lam: np.ndarray, mu: np.ndarray) -> KktResidual:
    stationarity = it.grad_cost + it.jac_eq.T @ lam + it.jac_ineq.T @ mu
    return KktResidual(
        stationarity=_inf_norm(stationarity),
        primal_eq=_inf_norm(it.eq),
        primal_ineq=float(max(0.0, np.max(it.ineq))) if it.ineq.size else 0.0,
        complementarity=_inf_norm(mu * it.ineq),
    )


def kkt_residual(
    nlp: NlpInstance,
    point: Union[KktPoint, Tuple[np.ndarray, np.ndarray, np.ndarray]],
) -> KktResidual:
    """Infinity norms of stationarity, equality, inequality and complementarity residuals."""
    if isinstance(point, KktPoint):
        w, lam, mu = point.w, point.lam, point.mu
    else:
        w, lam, mu = (np.asarray(v, dtype=float) for v in point)
    nlp.nlp._check(w, lam, mu)
    return _residual_from_blocks(nlp.eval_iterate(w, lam, mu), lam, mu)


def reduced_hessian_min_eig(it: IterateBlocks, active: List[int]) -> float:
    """Smallest eigenvalue of the Lagrangian Hessian on the null space of the active constraints."""
    a = np.vstack([it.jac_eq, it.jac_ineq[active]])
    z = null_space(a) if a.shape[0] else np.eye(it.hess_lagrangian.shape[0])
    if z.shape[1] == 0:
        return float("inf")
    reduced = z.T @ it.hess_lagrangian @ z
    return float(np.linalg.eigvalsh(0.5 * (reduced + reduced.T))[0])


def licq_sigma_min(it: IterateBlocks, active: List[int]) -> float:
    a = np.vstack([it.jac_eq, it.jac_ineq[active]])
    if a.shape[0] == 0:
        return float("inf")
    if a.shape[0] > a.shape[1]:
        return 0.0
    norms = np.linalg.norm(a, axis=1)
    if np.any(norms == 0.0):
        return 0.0
    return float(svdvals(a / norms[:, None])[-1])


class _Filter:
    def __init__(self, theta_max: float):
        self.theta_max = theta_max
        self.entries: List[Tuple[float, float]] = []

    def reset(self):
        self.entries = []

    def acceptable(self, theta: float, phi: float) -> bool:
        if theta > self.theta_max:
            return False
        return all(theta < t or phi < f for t, f in self.entries)

    def add(self, theta: float, phi: float):
        self.entries = [(t, f) for t, f in self.entries if not (t >= theta and f >= phi)]
        self.entries.append((theta, phi))


@dataclass(frozen=True)
class _Step:
    w: np.ndarray
    s: np.ndarray
    dw: np.ndarray
    ds: np.ndarray
    theta: float
    phi: float
    slope: float
    tau: float


class InteriorPointSolver:
    """Solves one NlpInstance. Holds only per-solve state.

    Multipliers are kept within [tau / (k s), k tau / s] with k =
    MULTIPLIER_SAFEGUARD, which bounds the barrier Hessian terms mu / s.
    """

    GAMMA_THETA = 1e-5
    GAMMA_PHI = 1e-5
    ETA_ARMIJO = 1e-4
    S_THETA = 1.1
    S_PHI = 2.3
    ALPHA_MIN = 1e-10
    MULTIPLIER_SAFEGUARD = 1e10
    DELTA_MIN = 1e-8
    DELTA_MAX = 1e40
    DELTA_EQ = 1e-8

    def __init__(self, nlp: NlpInstance, opts: Optional[SolverOptions] = None):
        self.nlp = nlp
        self.opts = opts or SolverOptions()
        self._last_delta = 0.0

    def _barrier_objective(self, cost: float, s: np.ndarray, tau: float) -> float:
        return cost - tau * float(np.sum(np.log(s))) if s.size else cost

    @staticmethod
    def _violation(it_eq: np.ndarray, it_ineq: np.ndarray, s: np.ndarray) -> float:
        return float(np.sum(np.abs(it_eq)) + np.sum(np.abs(it_ineq + s)))

    def _factor(
        self, w_block: np.ndarray, jc: np.ndarray, theta: float, iteration: int
    ) -> Tuple[SymmetricFactorization, float]:
        """Factor the reduced KKT matrix, adding delta * I to the Hessian block until the inertia is (n_w, n_c, 0)."""
        n_w, n_c = self.nlp.n_w, self.nlp.n_c
        delta = 0.0
        delta_eq = 0.0
        while True:
            kkt = np.zeros((n_w + n_c, n_w + n_c))
            kkt[:n_w, :n_w] = w_block + delta * np.eye(n_w)
            kkt[:n_w, n_w:] = jc.T
            kkt[n_w:, :n_w] = jc
            kkt[n_w:, n_w:] = -delta_eq * np.eye(n_c)
            fact = SymmetricFactorization(kkt)
            if fact.has_inertia(n_w, n_c):
                if delta > 0:
                    self._last_delta = delta
                return fact, delta
            if fact.singular and delta_eq == 0.0 and n_c:
                delta_eq = self.DELTA_EQ
            if delta == 0.0:
                delta = max(self.DELTA_MIN, self._last_delta / 4)
            else:
                delta *= 2.0
            if delta > self.DELTA_MAX:
                if theta > self.opts.tol_kkt:
                    raise InfeasibleProblemError(
                        f"KKT matrix cannot be regularized at constraint violation {theta:.3e}", iteration
                    )
                raise SolverError("inertia correction failed, KKT matrix cannot be regularized", iteration)

    @staticmethod
    def _max_step(v: np.ndarray, dv: np.ndarray, frac: float) -> float:
        neg = dv < 0
        if not np.any(neg):
            return 1.0
        return float(min(1.0, np.min(-frac * v[neg] / dv[neg])))

    def _line_search(
        self, step: "_Step", alpha_max: float, flt: _Filter, theta_min: float
    ) -> Optional[Tuple[float, bool]]:
        """Backtrack from alpha_max; returns (alpha, armijo) or None when no trial point is acceptable."""
        nlp = self.nlp
        alpha = alpha_max
        while alpha >= self.ALPHA_MIN:
            w_t = step.w + alpha * step.dw
            s_t = step.s + alpha * step.ds
            try:
                cost_t = nlp.eval_cost(w_t)
                c_t, g_t = nlp.eval_constraints(w_t)
            except RuntimeError as exc:  # casadi evaluation failure
                logger.debug(f"trial step rejected: {exc}")
                alpha *= 0.5
                continue
            if not (np.isfinite(cost_t) and np.all(np.isfinite(c_t)) and np.all(np.isfinite(g_t))):
                alpha *= 0.5
                continue
            theta_t = self._violation(c_t, g_t, s_t)
            phi_t = self._barrier_objective(cost_t, s_t, step.tau)
            if flt.acceptable(theta_t, phi_t):
                switching = (
                    step.theta <= theta_min
                    and step.slope < 0
                    and alpha * (-step.slope) ** self.S_PHI > step.theta**self.S_THETA
                )
                if switching:
                    if phi_t <= step.phi + self.ETA_ARMIJO * alpha * step.slope:
                        return alpha, True
                elif (
                    theta_t <= (1 - self.GAMMA_THETA) * step.theta
                    or phi_t <= step.phi - self.GAMMA_PHI * step.theta
                ):
                    return alpha, False
            alpha *= 0.5
        return None

    def solve(self, start: Union[np.ndarray, KktPoint, None] = None) -> KktPoint:
        nlp, opts = self.nlp, self.opts
        t0 = time.perf_counter()
        warm = isinstance(start, KktPoint)

        if start is None:
            w = nlp.initial_guess()
        elif isinstance(start, KktPoint):
            w = np.array(start.w, dtype=float)
        else:
            w = np.array(start, dtype=float).ravel()
        if w.shape != (nlp.n_w,):
            raise DimensionError(f"initial guess has {w.size} entries, expected {nlp.n_w}")
        if not np.all(np.isfinite(w)):
            raise SolverError("initial guess is not finite")

        tau = opts.warm_barrier_init if warm else opts.barrier_init
        _, g0 = nlp.eval_constraints(w)
        floor = tau if warm else opts.slack_floor
        s = np.maximum(-g0, floor)
        if isinstance(start, KktPoint):
            if start.lam.shape != (nlp.n_c,) or start.mu.shape != (nlp.n_g,):
                raise DimensionError("warm-start multipliers do not match the instance")
            lam = np.array(start.lam, dtype=float)
            mu = np.maximum(start.mu, tau / s)
        else:
            lam = np.zeros(nlp.n_c)
            mu = tau / s

        it = nlp.eval_iterate(w, lam, mu)
        theta0 = self._violation(it.eq, it.ineq, s)
        flt = _Filter(1e4 * max(1.0, theta0))
        theta_min = 1e-4 * max(1.0, theta0)
        delta = 0.0

        for iteration in range(opts.max_iter + 1):
            residual = _residual_from_blocks(it, lam, mu)
            slack_gap = _inf_norm(it.ineq + s)
            if residual.max <= opts.tol_kkt and slack_gap <= opts.tol_kkt:
                return self._finish(it, w, lam, mu, residual, iteration, tau, delta, warm, t0)
            if iteration == opts.max_iter:
                break

            # barrier update
            r_d = it.grad_cost + it.jac_eq.T @ lam + it.jac_ineq.T @ mu
            while True:
                e_tau = max(
                    _inf_norm(r_d),
                    _inf_norm(it.eq),
                    slack_gap,
                    _inf_norm(s * mu - tau),
                )
                if e_tau > 10.0 * tau or tau <= opts.barrier_min:
                    break
                tau = max(opts.barrier_min, opts.barrier_factor * tau)
                flt.reset()

            theta = self._violation(it.eq, it.ineq, s)
            phi = self._barrier_objective(it.cost, s, tau)

            sigma = mu / s
            r_g = it.ineq + s
            w_block = it.hess_lagrangian + it.jac_ineq.T @ (sigma[:, None] * it.jac_ineq)
            fact, delta = self._factor(w_block, it.jac_eq, theta, iteration)
            rhs_w = -(it.grad_cost + it.jac_eq.T @ lam) - it.jac_ineq.T @ (sigma * r_g + tau / s)
            sol = fact.solve(np.concatenate([rhs_w, -it.eq]))
            dw, dlam = sol[: nlp.n_w], sol[nlp.n_w :]
            jg_dw = it.jac_ineq @ dw
            dmu = sigma * (jg_dw + r_g) - mu + tau / s
            ds = -r_g - jg_dw

            frac = max(opts.fraction_to_boundary, 1.0 - tau)
            alpha_max = self._max_step(s, ds, frac)
            alpha_dual = self._max_step(mu, dmu, frac)
            slope = float(it.grad_cost @ dw - tau * np.sum(ds / s)) if s.size else float(it.grad_cost @ dw)

            step = _Step(w, s, dw, ds, theta, phi, slope, tau)
            accepted = self._line_search(step, alpha_max, flt, theta_min)
            if accepted is None and flt.entries:
                # a stale filter can block every trial point
                flt.reset()
                accepted = self._line_search(step, alpha_max, flt, theta_min)

            if accepted is None:
                if theta > opts.tol_kkt:
                    raise InfeasibleProblemError(
                        f"line search failed with constraint violation {theta:.3e}", iteration
                    )
                # tiny violation, objective stalls: take the step and restart the filter
                alpha, armijo = alpha_max, True
                flt.reset()
            else:
                alpha, armijo = accepted
                if not armijo:
                    flt.add((1 - self.GAMMA_THETA) * theta, phi - self.GAMMA_PHI * theta)

            w = w + alpha * dw
            s = np.maximum(s + alpha * ds, 1e-300)
            lam = lam + alpha * dlam
            mu = mu + alpha_dual * dmu
            mu = np.clip(mu, tau / (self.MULTIPLIER_SAFEGUARD * s), self.MULTIPLIER_SAFEGUARD * tau / s)
            it = nlp.eval_iterate(w, lam, mu)
            logger.debug(
                f"iter {iteration:3d} cost={it.cost:.6e} theta={theta:.2e} tau={tau:.1e} "
                f"alpha={alpha:.2e} delta={delta:.1e}"
            )

        raise MaxIterationsError(
            f"no KKT point within {opts.max_iter} iterations (residual {residual.max:.3e})",
            opts.max_iter,
        )

    def _finish(
        self,
        it: IterateBlocks,
        w: np.ndarray,
        lam: np.ndarray,
        mu: np.ndarray,
        residual: KktResidual,
        iterations: int,
        tau: float,
        delta: float,
        warm: bool,
        t0: float,
    ) -> KktPoint:
        opts = self.opts
        wall = time.perf_counter() - t0
        active_set = classify_active_set(it.ineq, mu, opts.eps_active)
        stats = SolveStats(
            iterations=iterations,
            wall_time_s=wall,
            residual=residual,
            barrier=tau,
            regularization=delta,
            warm_start=warm,
        )
        point = KktPoint(
            w=w,
            lam=lam,
            mu=mu,
            p=self.nlp.p.copy(),
            objective=it.cost,
            active_set=active_set,
            stats=stats,
            eps_active=opts.eps_active,
            certificate_tols=(opts.reduced_hessian_tol, opts.licq_tol),
        )
        if opts.certify:
            active = point.strongly_active
            stats.reduced_hessian_min_eig = reduced_hessian_min_eig(it, active)
            stats.licq_sigma_min = licq_sigma_min(it, active)
        logger.info(
            f"solved {self.nlp.nlp.name} in {iterations} iterations, {wall:.4f}s",
            extra={"solve_stats": stats.as_dict()},
        )
        return point


def solve(
    nlp: NlpInstance,
    start: Union[np.ndarray, KktPoint, None] = None,
    opts: Optional[SolverOptions] = None,
) -> KktPoint:
    """Solve ``nlp`` from an initial guess, a warm-start KktPoint or the default guess."""
    return InteriorPointSolver(nlp, opts).solve(start)
