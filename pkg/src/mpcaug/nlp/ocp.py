"""MPC problem family and its transcription into a parametric NLP.

Decision vector layout: w = [u(0), ..., u(N-1), x(1), ..., x(N)]. The initial
state x(0) is substituted from the parameter vector, the shooting gaps
x(k+1) - F(x(k), u(k), d) are the equalities and every finite bound on w is
one inequality row in <= 0 form.
"""

import hashlib
import json
import logging
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import casadi as ca
import numpy as np

from ..errors import ConfigurationError, DimensionError, ModelDomainError
from ..models.dynamics import rk4_step
from ..models.params import OdeModel
from .problem import DerivativeBlocks, NlpInstance, ParametricNlp

logger = logging.getLogger(__name__)

BOUND_PUSH = 1e-2


class ParameterRole(Enum):
    STATE = "state"
    SETPOINT = "setpoint"
    DISTURBANCE = "disturbance"
    PREVIOUS_INPUT = "previous_input"


@dataclass(frozen=True)
class ParameterEntry:
    role: ParameterRole
    index: int


@dataclass(frozen=True)
class ParameterLayout:
    """Ordered meaning of each entry of the parameter vector p."""

    entries: Tuple[ParameterEntry, ...]

    @classmethod
    def states_only(cls, n_x: int) -> "ParameterLayout":
        return cls(tuple(ParameterEntry(ParameterRole.STATE, i) for i in range(n_x)))

    def __len__(self) -> int:
        return len(self.entries)

    def has(self, role: ParameterRole) -> bool:
        return any(e.role == role for e in self.entries)

    def names(self, model: OdeModel) -> List[str]:
        labels = {
            ParameterRole.STATE: lambda i: model.state_names[i],
            ParameterRole.SETPOINT: lambda i: f"{model.state_names[i]}_sp",
            ParameterRole.DISTURBANCE: lambda i: model.disturbance_names[i],
            ParameterRole.PREVIOUS_INPUT: lambda i: f"{model.input_names[i]}_prev",
        }
        return [labels[e.role](e.index) for e in self.entries]

    def split(
        self,
        p: Any,
        setpoint: Sequence[float],
        disturbance: Sequence[float],
        n_u: int,
    ) -> Tuple[List[Any], List[Any], List[Any], Optional[List[Any]]]:
        """Distribute p over (x0, setpoint, disturbance, previous input).

        Entries without a parameter keep the given defaults; the previous input
        is None when the layout does not carry one.
        """
        n_x = sum(1 for e in self.entries if e.role == ParameterRole.STATE)
        x0: List[Any] = [None] * n_x
        ref: List[Any] = list(setpoint)
        d: List[Any] = list(disturbance)
        u_prev: Optional[List[Any]] = [None] * n_u if self.has(ParameterRole.PREVIOUS_INPUT) else None
        for pos, entry in enumerate(self.entries):
            value = p[pos]
            if entry.role == ParameterRole.STATE:
                x0[entry.index] = value
            elif entry.role == ParameterRole.SETPOINT:
                ref[entry.index] = value
            elif entry.role == ParameterRole.DISTURBANCE:
                d[entry.index] = value
            else:
                assert u_prev is not None
                u_prev[entry.index] = value
        return x0, ref, d, u_prev

    def assemble(
        self,
        x: Sequence[float],
        setpoint: Sequence[float],
        disturbance: Sequence[float],
        u_prev: Sequence[float],
    ) -> np.ndarray:
        sources = {
            ParameterRole.STATE: x,
            ParameterRole.SETPOINT: setpoint,
            ParameterRole.DISTURBANCE: disturbance,
            ParameterRole.PREVIOUS_INPUT: u_prev,
        }
        return np.array([float(sources[e.role][e.index]) for e in self.entries])


@dataclass(frozen=True)
class QuadraticCost:
    """Tracking stage cost sum_i q_i (x_i - r_i)^2 + sum_j r_j u_j^2 + sum_j s_j (du_j)^2."""

    state_weights: Tuple[float, ...]
    setpoint: Tuple[float, ...]
    input_weights: Tuple[float, ...]
    rate_weights: Tuple[float, ...]

    def stage(self, x: Any, u: Any, u_prev: Any, ref: Sequence[Any]) -> Any:
        cost: Any = 0.0
        for i, q in enumerate(self.state_weights):
            if q:
                cost = cost + q * (x[i] - ref[i]) ** 2
        for j, r in enumerate(self.input_weights):
            if r:
                cost = cost + r * u[j] ** 2
        for j, s in enumerate(self.rate_weights):
            if s:
                cost = cost + s * (u[j] - u_prev[j]) ** 2
        return cost

    @property
    def tracked_states(self) -> List[int]:
        return [i for i, q in enumerate(self.state_weights) if q]


@dataclass(frozen=True)
class Box:
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]

    def __post_init__(self):
        if len(self.lower) != len(self.upper):
            raise ConfigurationError("box bounds differ in length")
        if any(lo > hi for lo, hi in zip(self.lower, self.upper)):
            raise ConfigurationError(f"box lower bound exceeds upper bound: {self}")

    @property
    def dim(self) -> int:
        return len(self.lower)

    def contains(self, v: Sequence[float], tol: float = 0.0) -> bool:
        return all(lo - tol <= x <= hi + tol for x, lo, hi in zip(v, self.lower, self.upper))

    def clip(self, v: np.ndarray) -> np.ndarray:
        return np.clip(v, self.lower, self.upper)

    def shrink(self, fraction: float) -> "Box":
        """The box moved inward by ``fraction`` of each finite range."""
        lo, hi = np.array(self.lower, dtype=float), np.array(self.upper, dtype=float)
        push = np.where(np.isfinite(lo) & np.isfinite(hi), fraction * (hi - lo), 0.0)
        return Box(tuple((lo + push).tolist()), tuple((hi - push).tolist()))

    @property
    def midpoint(self) -> np.ndarray:
        lo, hi = np.array(self.lower), np.array(self.upper)
        mid = np.where(np.isfinite(lo) & np.isfinite(hi), 0.5 * (lo + hi), 0.0)
        mid = np.where(np.isfinite(lo) & ~np.isfinite(hi), lo, mid)
        return np.where(~np.isfinite(lo) & np.isfinite(hi), hi, mid)


@dataclass(frozen=True)
class OcpSpec:
    model: OdeModel
    horizon: int
    dt: float
    state_bounds: Box
    input_bounds: Box
    cost: QuadraticCost
    parameters: ParameterLayout
    terminal_bounds: Optional[Box] = None
    substeps: int = 1
    name: str = field(default="")

    def __post_init__(self):
        m = self.model
        if self.horizon < 1:
            raise ConfigurationError("horizon must be at least 1", "horizon")
        if self.dt <= 0:
            raise ConfigurationError("sampling interval must be positive", "dt")
        if self.substeps < 1:
            raise ConfigurationError("substeps must be at least 1", "substeps")
        if self.state_bounds.dim != m.n_x or self.terminal_set.dim != m.n_x:
            raise ConfigurationError("state bounds do not match the model", "state_bounds")
        if self.input_bounds.dim != m.n_u:
            raise ConfigurationError("input bounds do not match the model", "input_bounds")
        c = self.cost
        if len(c.state_weights) != m.n_x or len(c.setpoint) != m.n_x:
            raise ConfigurationError("state weights do not match the model", "cost")
        if len(c.input_weights) != m.n_u or len(c.rate_weights) != m.n_u:
            raise ConfigurationError("input weights do not match the model", "cost")
        states = sorted(e.index for e in self.parameters.entries if e.role == ParameterRole.STATE)
        if states != list(range(m.n_x)):
            raise ConfigurationError("parameter layout must carry every initial state", "parameters")

    @property
    def terminal_set(self) -> Box:
        return self.terminal_bounds or self.state_bounds

    @property
    def n_p(self) -> int:
        return len(self.parameters)

    def describe(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "model": self.model.describe(),
            "horizon": self.horizon,
            "dt": self.dt,
            "substeps": self.substeps,
            "state_bounds": {"lower": list(self.state_bounds.lower), "upper": list(self.state_bounds.upper)},
            "terminal_bounds": {"lower": list(self.terminal_set.lower), "upper": list(self.terminal_set.upper)},
            "input_bounds": {"lower": list(self.input_bounds.lower), "upper": list(self.input_bounds.upper)},
            "cost": {
                "state_weights": list(self.cost.state_weights),
                "setpoint": list(self.cost.setpoint),
                "input_weights": list(self.cost.input_weights),
                "rate_weights": list(self.cost.rate_weights),
            },
            "parameters": self.parameters.names(self.model),
        }

    def fingerprint(self) -> str:
        text = json.dumps(self.describe(), sort_keys=True, default=str)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class DecisionLayout:
    horizon: int
    n_x: int
    n_u: int

    @property
    def n_w(self) -> int:
        return self.horizon * (self.n_u + self.n_x)

    def input_slice(self, k: int) -> slice:
        return slice(k * self.n_u, (k + 1) * self.n_u)

    def state_slice(self, k: int) -> slice:
        """Slice of x(k) for k = 1..N."""
        start = self.horizon * self.n_u + (k - 1) * self.n_x
        return slice(start, start + self.n_x)

    def inputs(self, w: np.ndarray) -> np.ndarray:
        return np.asarray(w[: self.horizon * self.n_u]).reshape(self.horizon, self.n_u)

    def states(self, w: np.ndarray) -> np.ndarray:
        return np.asarray(w[self.horizon * self.n_u :]).reshape(self.horizon, self.n_x)

    def pack(self, inputs: np.ndarray, states: np.ndarray) -> np.ndarray:
        inputs = np.asarray(inputs, dtype=float).reshape(self.horizon, self.n_u)
        states = np.asarray(states, dtype=float).reshape(self.horizon, self.n_x)
        return np.concatenate([inputs.ravel(), states.ravel()])

    def shift(self, w: np.ndarray) -> np.ndarray:
        """Drop the first stage and repeat the last one."""
        u, x = self.inputs(w), self.states(w)
        return self.pack(np.vstack([u[1:], u[-1:]]), np.vstack([x[1:], x[-1:]]))


class Transcription:
    """An OcpSpec turned into a ParametricNlp plus the bookkeeping around w."""

    def __init__(self, spec: OcpSpec):
        m = spec.model
        N = spec.horizon
        self.spec = spec
        self.layout = DecisionLayout(N, m.n_x, m.n_u)

        w = ca.SX.sym("w", self.layout.n_w)
        p = ca.SX.sym("p", spec.n_p)
        x0, ref, d, u_prev = spec.parameters.split(p, spec.cost.setpoint, m.nominal_disturbance, m.n_u)
        d_expr = ca.vertcat(*d) if d else ca.SX(0, 1)

        xs = [ca.vertcat(*x0)] + [w[self.layout.state_slice(k)] for k in range(1, N + 1)]
        us = [w[self.layout.input_slice(k)] for k in range(N)]

        cost: Any = 0
        gaps = []
        for k in range(N):
            if k > 0:
                prev = us[k - 1]
            elif u_prev is not None:
                prev = ca.vertcat(*u_prev)
            else:
                prev = us[0]
            cost = cost + spec.cost.stage(xs[k], us[k], prev, ref)
            gaps.append(xs[k + 1] - rk4_step(m, xs[k], us[k], d_expr, spec.dt, spec.substeps))

        lower, upper = self.variable_bounds()
        rows, var_index, var_sign = [], [], []
        for i in range(self.layout.n_w):
            if np.isfinite(upper[i]):
                rows.append(w[i] - float(upper[i]))
                var_index.append(i)
                var_sign.append(1)
            if np.isfinite(lower[i]):
                rows.append(float(lower[i]) - w[i])
                var_index.append(i)
                var_sign.append(-1)
        self.ineq_var_index = np.array(var_index, dtype=int)
        self.ineq_sign = np.array(var_sign, dtype=int)

        self.nlp = ParametricNlp.from_expressions(
            w,
            p,
            cost,
            ca.vertcat(*gaps),
            ca.vertcat(*rows) if rows else None,
            name=spec.name or m.name,
        )
        logger.debug(
            f"transcribed {self.nlp.name}: n_w={self.nlp.n_w} n_c={self.nlp.n_c} n_g={self.nlp.n_g}"
        )

    def variable_bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        s = self.spec
        N = s.horizon
        u_lo = np.tile(s.input_bounds.lower, N)
        u_hi = np.tile(s.input_bounds.upper, N)
        x_lo = np.concatenate([np.tile(s.state_bounds.lower, N - 1), s.terminal_set.lower])
        x_hi = np.concatenate([np.tile(s.state_bounds.upper, N - 1), s.terminal_set.upper])
        return np.concatenate([u_lo, x_lo]).astype(float), np.concatenate([u_hi, x_hi]).astype(float)

    def shift_inequality(self, mu: np.ndarray) -> np.ndarray:
        """Shift inequality multipliers consistently with DecisionLayout.shift."""
        shifted_var = self.layout.shift(np.arange(self.layout.n_w, dtype=float)).astype(int)
        lookup = {(v, s): row for row, (v, s) in enumerate(zip(self.ineq_var_index, self.ineq_sign))}
        out = np.empty_like(mu)
        for row, (v, s) in enumerate(zip(self.ineq_var_index, self.ineq_sign)):
            out[row] = mu[lookup.get((shifted_var[v], s), row)]
        return out

    def shift_equality(self, lam: np.ndarray) -> np.ndarray:
        n_x = self.layout.n_x
        blocks = lam.reshape(self.layout.horizon, n_x)
        return np.vstack([blocks[1:], blocks[-1:]]).ravel()

    def rollout(self, p: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Initial guess: simulate the model from p with input u, clipping strictly inside X."""
        s = self.spec
        x0, _, d, _ = s.parameters.split(p, s.cost.setpoint, s.model.nominal_disturbance, s.model.n_u)
        x = np.array(x0, dtype=float)
        d_arr = np.array(d, dtype=float)
        u = np.asarray(u, dtype=float)
        inner = s.state_bounds.shrink(BOUND_PUSH)
        inner_terminal = s.terminal_set.shrink(BOUND_PUSH)
        states = []
        for k in range(s.horizon):
            try:
                x = np.asarray(rk4_step(s.model, x, u, d_arr, s.dt, s.substeps), dtype=float)
            except ModelDomainError:
                pass
            box = inner_terminal if k == s.horizon - 1 else inner
            x = box.clip(np.nan_to_num(x))
            states.append(x)
        return self.layout.pack(np.tile(u, (s.horizon, 1)), np.array(states))

    def initial_guess(self, p: np.ndarray) -> np.ndarray:
        u_mid = self.spec.input_bounds.midpoint
        return self.rollout(p, u_mid)


_CACHE: Dict[str, Transcription] = {}
_CACHE_LOCK = threading.Lock()


def build_transcription(spec: OcpSpec) -> Transcription:
    """Transcription of ``spec``, built once per process and per spec."""
    key = spec.fingerprint()
    with _CACHE_LOCK:
        cached = _CACHE.get(key)
        if cached is None:
            cached = Transcription(spec)
            _CACHE[key] = cached
    return cached


def transcribe(spec: OcpSpec, p: np.ndarray) -> NlpInstance:
    p = np.asarray(p, dtype=float).ravel()
    if p.size != spec.n_p:
        raise DimensionError(f"parameter has {p.size} entries, layout expects {spec.n_p}")
    tr = build_transcription(spec)
    return NlpInstance(tr.nlp, p, layout=tr.layout, guess=tr.initial_guess)


def eval_cost(nlp: NlpInstance, w: np.ndarray) -> float:
    return nlp.eval_cost(w)


def eval_derivatives(nlp: NlpInstance, w: np.ndarray, lam: np.ndarray, mu: np.ndarray) -> DerivativeBlocks:
    return nlp.eval_derivatives(w, lam, mu)
