from dataclasses import dataclass, fields, replace, asdict
from typing import Any, Callable, Dict, Tuple

from ..errors import ConfigurationError

SECONDS_PER_HOUR = 3600.0


@dataclass(frozen=True)
class CstrParams:
    tau: float = 20.0
    k: float = 300.0
    M: float = 5.0
    x_f: float = 0.3947
    x_c: float = 0.3816
    alpha: float = 0.117

    def __post_init__(self):
        for name in ("tau", "k", "M", "alpha"):
            # k = 0 switches the reaction off
            if getattr(self, name) < 0 or (name != "k" and getattr(self, name) == 0):
                raise ConfigurationError(f"CSTR parameter {name} must be positive", name)
        for name in ("x_f", "x_c"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ConfigurationError(f"CSTR parameter {name} must lie in (0, 1)", name)


@dataclass(frozen=True)
class BuildingParams:
    """Thermal RC network of a single zone.

    Resistances are in degC/kW and areas in m^2. Capacitances are stored in
    ``capacitance_unit``: "kWh/degC" gives derivatives per hour,
    "kJ/degC" gives derivatives per second.
    """

    R_is: float = 1.89
    R_ih: float = 0.146
    R_ie: float = 0.897
    R_ia: float = 2.5
    R_ea: float = 0.146
    C_s: float = 0.0549
    C_i: float = 0.0928
    C_e: float = 3.32
    C_h: float = 0.889
    A_e: float = 3.87
    A_w: float = 5.75
    capacitance_unit: str = "kWh/degC"

    def __post_init__(self):
        for f in fields(self):
            if f.name == "capacitance_unit":
                continue
            if getattr(self, f.name) <= 0:
                raise ConfigurationError(f"building parameter {f.name} must be positive", f.name)
        if self.capacitance_unit not in ("kWh/degC", "kJ/degC"):
            raise ConfigurationError(
                f"unknown capacitance unit '{self.capacitance_unit}'", "capacitance_unit"
            )

    def in_seconds(self) -> "BuildingParams":
        if self.capacitance_unit == "kJ/degC":
            return self
        return replace(
            self,
            C_s=self.C_s * SECONDS_PER_HOUR,
            C_i=self.C_i * SECONDS_PER_HOUR,
            C_e=self.C_e * SECONDS_PER_HOUR,
            C_h=self.C_h * SECONDS_PER_HOUR,
            capacitance_unit="kJ/degC",
        )


@dataclass(frozen=True)
class OdeModel:
    """Continuous-time model x' = f_c(x, u, d) on declared box domains.

    ``rhs`` must be a picklable callable (module level function or partial)
    so models can be shipped to sampling workers.
    """

    name: str
    state_names: Tuple[str, ...]
    input_names: Tuple[str, ...]
    rhs: Callable[[Any, Any, Any], Any]
    disturbance_names: Tuple[str, ...] = ()
    nominal_disturbance: Tuple[float, ...] = ()
    params: Any = None

    def __post_init__(self):
        if len(self.nominal_disturbance) != len(self.disturbance_names):
            raise ConfigurationError(
                "nominal disturbance must match the disturbance names", "nominal_disturbance"
            )

    @property
    def n_x(self) -> int:
        return len(self.state_names)

    @property
    def n_u(self) -> int:
        return len(self.input_names)

    @property
    def n_d(self) -> int:
        return len(self.disturbance_names)

    def describe(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "states": list(self.state_names),
            "inputs": list(self.input_names),
            "disturbances": list(self.disturbance_names),
            "nominal_disturbance": list(self.nominal_disturbance),
            "params": asdict(self.params) if self.params is not None else None,
        }
