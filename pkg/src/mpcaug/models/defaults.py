"""Built-in problem definitions: the CSTR and the building zone."""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..learning.policy import SplitSpec, TrainingOptions
from ..learning.sampling import SamplerConfig, SamplerMode
from ..nlp.ocp import Box, OcpSpec, ParameterEntry, ParameterLayout, ParameterRole, QuadraticCost
from ..sim.closed_loop import Scenario, ScenarioEvent
from .dynamics import building_model, cstr_model, find_equilibrium
from .params import BuildingParams, CstrParams

CSTR_SETPOINT = (0.2632, 0.6519)
CSTR_STATE_BOUNDS = Box((0.0632, 0.4519), (0.4632, 0.8519))
CSTR_INPUT_BOUNDS = Box((0.0,), (2.0,))

BUILDING_TEMPERATURE_RANGE = (12.0, 40.0)
BUILDING_SETPOINT_RANGE = (18.0, 25.0)
BUILDING_AMBIENT_RANGE = (-5.0, 20.0)
BUILDING_IRRADIATION_RANGE = (0.0, 0.2)
BUILDING_INPUT_BOUNDS = Box((0.0,), (40.0,))

HOUR = 3600.0


@dataclass
class ProblemDefinition:
    name: str
    spec: OcpSpec
    sampler: SamplerConfig
    scenarios: List[Scenario]
    training: TrainingOptions = field(default_factory=TrainingOptions)
    split: SplitSpec = field(default_factory=SplitSpec)
    description: str = ""


def cstr_spec(horizon: int = 140, dt: float = 3.0, params: Optional[CstrParams] = None) -> OcpSpec:
    model = cstr_model(params)
    return OcpSpec(
        model=model,
        horizon=horizon,
        dt=dt,
        state_bounds=CSTR_STATE_BOUNDS,
        input_bounds=CSTR_INPUT_BOUNDS,
        cost=QuadraticCost(
            state_weights=(1.0, 1.0),
            setpoint=CSTR_SETPOINT,
            input_weights=(1e-4,),
            rate_weights=(0.0,),
        ),
        parameters=ParameterLayout.states_only(model.n_x),
        name="cstr",
    )


def cstr_corner_scenarios(steps: int = 100, inset: float = 0.25) -> List[Scenario]:
    """Starts at the four corners of the state box, moved inward by ``inset`` of its range."""
    lo, hi = np.array(CSTR_STATE_BOUNDS.lower), np.array(CSTR_STATE_BOUNDS.upper)
    a, b = lo + inset * (hi - lo), hi - inset * (hi - lo)
    corners = [(a[0], a[1]), (a[0], b[1]), (b[0], a[1]), (b[0], b[1])]
    return [
        Scenario.piecewise(f"cstr-corner-{i}", c, steps, CSTR_SETPOINT, (), (0.0,))
        for i, c in enumerate(corners)
    ]


def cstr_problem(horizon: int = 140) -> ProblemDefinition:
    return ProblemDefinition(
        name="cstr",
        spec=cstr_spec(horizon),
        sampler=SamplerConfig(
            mode=SamplerMode.GRID_TWO_LEVEL,
            box=CSTR_STATE_BOUNDS,
            coarse_interval=(0.0211, 0.0211),
            fine_interval=(0.0052, 0.0052),
            fine_steps=2,
        ),
        scenarios=cstr_corner_scenarios(),
        description="exothermic CSTR, grid sampling of the state box",
    )


def building_layout() -> ParameterLayout:
    """[T_s, T_i, T_h, T_e, T_i_sp, T_a, Phi, q_prev]."""
    return ParameterLayout(
        tuple(ParameterEntry(ParameterRole.STATE, i) for i in range(4))
        + (
            ParameterEntry(ParameterRole.SETPOINT, 1),
            ParameterEntry(ParameterRole.DISTURBANCE, 0),
            ParameterEntry(ParameterRole.DISTURBANCE, 1),
            ParameterEntry(ParameterRole.PREVIOUS_INPUT, 0),
        )
    )


def building_spec(horizon: int = 180, dt: float = 60.0, params: Optional[BuildingParams] = None) -> OcpSpec:
    model = building_model(params)
    t_lo, t_hi = BUILDING_TEMPERATURE_RANGE
    return OcpSpec(
        model=model,
        horizon=horizon,
        dt=dt,
        state_bounds=Box((t_lo,) * 4, (t_hi,) * 4),
        input_bounds=BUILDING_INPUT_BOUNDS,
        cost=QuadraticCost(
            state_weights=(0.0, 1.0, 0.0, 0.0),
            setpoint=(20.0, 20.0, 20.0, 20.0),
            input_weights=(0.0,),
            rate_weights=(0.1,),
        ),
        parameters=building_layout(),
        name="building",
    )


def building_sampling_box() -> Box:
    t_lo, t_hi = BUILDING_TEMPERATURE_RANGE
    ranges = [
        BUILDING_SETPOINT_RANGE,
        BUILDING_AMBIENT_RANGE,
        BUILDING_IRRADIATION_RANGE,
        (BUILDING_INPUT_BOUNDS.lower[0], BUILDING_INPUT_BOUNDS.upper[0]),
    ]
    return Box((t_lo,) * 4 + tuple(r[0] for r in ranges), (t_hi,) * 4 + tuple(r[1] for r in ranges))


def building_steady_state(t_i: float, t_a: float, phi: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
    """Temperatures and heating power holding the interior at ``t_i``."""
    model = building_model()
    eq = find_equilibrium(
        model,
        fixed={"T_i": t_i, "T_a": t_a, "Phi": phi},
        guess={"T_s": t_i, "T_h": t_i, "T_e": t_a, "q": 1.0},
    )
    return eq.x, eq.u


def building_scenario(steps: int = 720, dt: float = 60.0) -> Scenario:
    """12 h: setpoint 20 -> 22 degC at 3 h, irradiation 0 -> 0.15 at 6 h, ambient 18 -> 13 degC at 9 h.

    Starts from the steady state at 20 degC and keeps the envelope above its
    12 degC bound throughout.
    """
    x0, u0 = building_steady_state(20.0, 18.0)

    def at(hours: float) -> int:
        return int(round(hours * HOUR / dt))

    return Scenario.piecewise(
        "building-12h",
        x0,
        steps,
        setpoint=(20.0, 20.0, 20.0, 20.0),
        disturbance=(18.0, 0.0),
        initial_input=u0,
        events=(
            ScenarioEvent(at(3), setpoint={1: 22.0}),
            ScenarioEvent(at(6), disturbance={1: 0.15}),
            ScenarioEvent(at(9), disturbance={0: 13.0}),
        ),
    )


def building_problem(horizon: int = 180) -> ProblemDefinition:
    return ProblemDefinition(
        name="building",
        spec=building_spec(horizon),
        sampler=SamplerConfig(
            mode=SamplerMode.RANDOM_BOX,
            box=building_sampling_box(),
            n_s=330,
            n_p=20,
            radius_fraction=0.02,
        ),
        scenarios=[building_scenario()],
        description="single-zone building heating, random sampling of the 8-dimensional parameter box",
    )


def get_default_problems(horizon: Optional[int] = None) -> Dict[str, ProblemDefinition]:
    """Problem registry keyed by name; ``horizon`` overrides every default horizon."""
    if horizon is None:
        return {"cstr": cstr_problem(), "building": building_problem()}
    return {"cstr": cstr_problem(horizon), "building": building_problem(horizon)}
