"""Parametric sensitivities of a KKT point and the tangential predictor.

At a solution with strict complementarity the KKT conditions restricted to the
active set A are linearized in (w, lam, mu_A) and p:

    M ds = -N dp,   M = [[H, Jc^T, Ja^T], [Jc, 0, 0], [Ja, 0, 0]],
                    N = [H_wp; Jc_p; Ja_p]

M is factored once per base point; every perturbation is one pair of
triangular solves.
"""

import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Union

import numpy as np

from ..errors import DimensionError, SingularKktError, WeaklyActiveError
from .linalg import SymmetricFactorization
from .problem import NlpInstance
from .solver import KktPoint

logger = logging.getLogger(__name__)


class RejectionReason(Enum):
    NONE = "none"
    ACTIVE_SET_CHANGE = "active-set-change"
    SINGULAR_KKT = "singular-kkt"


@dataclass(frozen=True)
class ActiveSetCheck:
    changed: bool
    negative_multipliers: List[int] = field(default_factory=list)
    violated_inactive: List[int] = field(default_factory=list)

    @property
    def detail(self) -> Dict[str, List[int]]:
        return {
            "negative_multipliers": self.negative_multipliers,
            "violated_inactive": self.violated_inactive,
        }


@dataclass
class PredictedPoint:
    w: np.ndarray
    lam: np.ndarray
    mu: np.ndarray

    @property
    def s(self) -> np.ndarray:
        return np.concatenate([self.w, self.lam, self.mu])


@dataclass
class PredictorResult:
    s_hat: PredictedPoint
    dp: np.ndarray
    accepted: bool
    rejection_reason: RejectionReason
    check: Optional[ActiveSetCheck] = None
    wall_time_s: float = 0.0


class SensitivitySystem:
    """Factored KKT matrix at one base point, reusable for any number of dp."""

    def __init__(self, nlp: NlpInstance, base: KktPoint):
        t0 = time.perf_counter()
        if base.weakly_active:
            raise WeaklyActiveError(base.weakly_active)
        self.nlp = nlp
        self.base = base
        self.active = base.strongly_active
        self.inactive = [i for i in range(nlp.n_g) if i not in set(self.active)]
        n_w, n_c, n_a = nlp.n_w, nlp.n_c, len(self.active)

        blocks = nlp.eval_derivatives(base.w, base.lam, base.mu)
        hess = 0.5 * (blocks.hess_lagrangian + blocks.hess_lagrangian.T)
        jac_a = blocks.jac_ineq[self.active]
        n = n_w + n_c + n_a
        m = np.zeros((n, n))
        m[:n_w, :n_w] = hess
        m[:n_w, n_w : n_w + n_c] = blocks.jac_eq.T
        m[n_w : n_w + n_c, :n_w] = blocks.jac_eq
        m[:n_w, n_w + n_c :] = jac_a.T
        m[n_w + n_c :, :n_w] = jac_a
        self.matrix = m
        self.nmat = np.vstack([blocks.hess_lagrangian_wp, blocks.jac_eq_p, blocks.jac_ineq_p[self.active]])

        self.factorization = SymmetricFactorization(m)
        if not self.factorization.has_inertia(n_w, n_c + n_a):
            raise SingularKktError(
                f"KKT matrix inertia {self.factorization.inertia} differs from "
                f"({n_w}, {n_c + n_a}, 0); second-order or constraint qualification fails"
            )
        self.build_time_s = time.perf_counter() - t0
        logger.debug(f"sensitivity system of size {n} with {n_a} active constraints in {self.build_time_s:.4f}s")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def step(self, dp: np.ndarray) -> np.ndarray:
        return self.factorization.solve(-self.nmat @ dp)

    def parameter_jacobian(self) -> np.ndarray:
        """d(w, lam, mu_A)/dp at the base point."""
        return self.factorization.solve(-self.nmat)

    def expand(self, ds: np.ndarray) -> PredictedPoint:
        n_w, n_c = self.nlp.n_w, self.nlp.n_c
        mu = self.base.mu.copy()
        mu[self.active] = mu[self.active] + ds[n_w + n_c :]
        return PredictedPoint(
            w=self.base.w + ds[:n_w],
            lam=self.base.lam + ds[n_w : n_w + n_c],
            mu=mu,
        )


def build_sensitivity(nlp: NlpInstance, point: KktPoint) -> SensitivitySystem:
    return SensitivitySystem(nlp, point)


def check_active_set_change(
    sys: SensitivitySystem,
    s_hat: PredictedPoint,
    nlp_at_new_p: NlpInstance,
) -> ActiveSetCheck:
    """Flag a predicted point whose active multipliers turn negative or whose inactive constraints become violated."""
    eps = sys.base.eps_active
    negative = [i for i in sys.active if s_hat.mu[i] < -eps]
    violated: List[int] = []
    if sys.inactive:
        _, g = nlp_at_new_p.eval_constraints(s_hat.w)
        violated = [i for i in sys.inactive if g[i] > eps]
    return ActiveSetCheck(bool(negative or violated), negative, violated)


def tangential_predictor(sys: SensitivitySystem, dp: np.ndarray) -> PredictorResult:
    t0 = time.perf_counter()
    dp = np.asarray(dp, dtype=float).ravel()
    if dp.shape != (sys.nlp.n_p,):
        raise DimensionError(f"perturbation has {dp.size} entries, expected {sys.nlp.n_p}")
    s_hat = sys.expand(sys.step(dp))
    check = check_active_set_change(sys, s_hat, sys.nlp.with_parameter(sys.base.p + dp))
    reason = RejectionReason.ACTIVE_SET_CHANGE if check.changed else RejectionReason.NONE
    return PredictorResult(
        s_hat=s_hat,
        dp=dp,
        accepted=not check.changed,
        rejection_reason=reason,
        check=check,
        wall_time_s=time.perf_counter() - t0,
    )


def extract_control(s: Union[KktPoint, PredictedPoint, PredictorResult, np.ndarray], layout: Any) -> np.ndarray:
    """u(0): the first n_u entries of the decision vector."""
    if isinstance(s, PredictorResult):
        s = s.s_hat
    w = s.w if isinstance(s, (KktPoint, PredictedPoint)) else np.asarray(s, dtype=float)
    return np.array(w[layout.input_slice(0)], dtype=float)
