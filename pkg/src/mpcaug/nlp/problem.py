"""Parametric NLP  min_w J(w, p)  s.t.  c(w, p) = 0,  g(w, p) <= 0.

``ParametricNlp`` holds the casadi functions for one problem family and is
expensive to build; ``NlpInstance`` binds it to a parameter value and is cheap.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import casadi as ca
import numpy as np

from ..errors import DimensionError


@dataclass(frozen=True)
class DerivativeBlocks:
    grad_cost: np.ndarray
    jac_eq: np.ndarray
    jac_ineq: np.ndarray
    hess_lagrangian: np.ndarray
    jac_eq_p: np.ndarray
    jac_ineq_p: np.ndarray
    hess_lagrangian_wp: np.ndarray


@dataclass(frozen=True)
class IterateBlocks:
    """Everything one interior-point iteration needs, from a single evaluation."""

    cost: float
    grad_cost: np.ndarray
    eq: np.ndarray
    jac_eq: np.ndarray
    ineq: np.ndarray
    jac_ineq: np.ndarray
    hess_lagrangian: np.ndarray


def _column(expr: ca.SX) -> ca.SX:
    if expr.shape[0] == 0 or expr.shape[1] == 0:
        return ca.SX(0, 1)
    return ca.vec(expr)


def _vec(dm: ca.DM) -> np.ndarray:
    return np.asarray(dm.full(), dtype=float).ravel()


def _mat(dm: ca.DM) -> np.ndarray:
    return np.asarray(dm.full(), dtype=float)


class ParametricNlp:
    """Evaluators and exact derivatives of a parametric NLP family.

    The Lagrangian is L = J + lam^T c + mu^T g with mu >= 0. Second
    derivatives come from casadi's forward-over-adjoint Hessian.
    """

    def __init__(
        self,
        w: ca.SX,
        p: ca.SX,
        cost: ca.SX,
        eq: ca.SX,
        ineq: ca.SX,
        name: str = "nlp",
    ):
        eq = _column(eq)
        ineq = _column(ineq)
        self.name = name
        self.n_w = w.shape[0]
        self.n_p = p.shape[0]
        self.n_c = eq.shape[0]
        self.n_g = ineq.shape[0]

        lam = ca.SX.sym("lam", self.n_c)
        mu = ca.SX.sym("mu", self.n_g)
        lagrangian = cost + ca.mtimes(lam.T, eq) + ca.mtimes(mu.T, ineq)
        grad_l = ca.gradient(lagrangian, w)
        hess_l = ca.jacobian(grad_l, w)

        self._cost = ca.Function("cost", [w, p], [cost])
        self._constraints = ca.Function("constraints", [w, p], [eq, ineq])
        self._iterate = ca.Function(
            "iterate",
            [w, p, lam, mu],
            [cost, ca.gradient(cost, w), eq, ca.jacobian(eq, w), ineq, ca.jacobian(ineq, w), hess_l],
        )
        self._parametric = ca.Function(
            "parametric",
            [w, p, lam, mu],
            [ca.jacobian(eq, p), ca.jacobian(ineq, p), ca.jacobian(grad_l, p)],
        )

    @classmethod
    def from_expressions(
        cls,
        w: ca.SX,
        p: ca.SX,
        cost: ca.SX,
        eq: Optional[ca.SX] = None,
        ineq: Optional[ca.SX] = None,
        name: str = "nlp",
    ) -> "ParametricNlp":
        return cls(
            w,
            p,
            cost,
            eq if eq is not None else ca.SX(0, 1),
            ineq if ineq is not None else ca.SX(0, 1),
            name,
        )

    def instance(self, p: np.ndarray) -> "NlpInstance":
        return NlpInstance(self, p)

    def _check(self, w: np.ndarray, lam: np.ndarray, mu: np.ndarray):
        if w.shape != (self.n_w,) or lam.shape != (self.n_c,) or mu.shape != (self.n_g,):
            raise DimensionError(
                f"expected w[{self.n_w}], lam[{self.n_c}], mu[{self.n_g}], "
                f"got {w.shape}, {lam.shape}, {mu.shape}"
            )


class NlpInstance:
    """A parametric NLP at a fixed parameter value p."""

    def __init__(
        self,
        nlp: ParametricNlp,
        p: np.ndarray,
        layout=None,
        guess: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    ):
        p = np.asarray(p, dtype=float).ravel()
        if p.shape != (nlp.n_p,):
            raise DimensionError(f"parameter has {p.size} entries, expected {nlp.n_p}")
        self.nlp = nlp
        self.p = p
        self.layout = layout
        self._guess = guess

    @property
    def n_w(self) -> int:
        return self.nlp.n_w

    @property
    def n_c(self) -> int:
        return self.nlp.n_c

    @property
    def n_g(self) -> int:
        return self.nlp.n_g

    @property
    def n_p(self) -> int:
        return self.nlp.n_p

    def with_parameter(self, p: np.ndarray) -> "NlpInstance":
        return NlpInstance(self.nlp, p, self.layout, self._guess)

    def initial_guess(self) -> np.ndarray:
        if self._guess is None:
            return np.zeros(self.n_w)
        return np.asarray(self._guess(self.p), dtype=float)

    def eval_cost(self, w: np.ndarray) -> float:
        w = np.asarray(w, dtype=float)
        if w.shape != (self.n_w,):
            raise DimensionError(f"decision vector has {w.size} entries, expected {self.n_w}")
        return float(self.nlp._cost(w, self.p))

    def eval_constraints(self, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        c, g = self.nlp._constraints(np.asarray(w, dtype=float), self.p)
        return _vec(c), _vec(g)

    def eval_iterate(self, w: np.ndarray, lam: np.ndarray, mu: np.ndarray) -> IterateBlocks:
        out = self.nlp._iterate(w, self.p, lam, mu)
        return IterateBlocks(
            cost=float(out[0]),
            grad_cost=_vec(out[1]),
            eq=_vec(out[2]),
            jac_eq=_mat(out[3]).reshape(self.n_c, self.n_w),
            ineq=_vec(out[4]),
            jac_ineq=_mat(out[5]).reshape(self.n_g, self.n_w),
            hess_lagrangian=_mat(out[6]).reshape(self.n_w, self.n_w),
        )

    def eval_derivatives(self, w: np.ndarray, lam: np.ndarray, mu: np.ndarray) -> DerivativeBlocks:
        w = np.asarray(w, dtype=float)
        lam = np.asarray(lam, dtype=float)
        mu = np.asarray(mu, dtype=float)
        self.nlp._check(w, lam, mu)
        it = self.eval_iterate(w, lam, mu)
        jc_p, jg_p, h_wp = self.nlp._parametric(w, self.p, lam, mu)
        return DerivativeBlocks(
            grad_cost=it.grad_cost,
            jac_eq=it.jac_eq,
            jac_ineq=it.jac_ineq,
            hess_lagrangian=it.hess_lagrangian,
            jac_eq_p=_mat(jc_p).reshape(self.n_c, self.n_p),
            jac_ineq_p=_mat(jg_p).reshape(self.n_g, self.n_p),
            hess_lagrangian_wp=_mat(h_wp).reshape(self.n_w, self.n_p),
        )
