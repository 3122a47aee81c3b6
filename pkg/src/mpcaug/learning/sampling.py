"""Anchor and neighborhood sampling of the parameter box."""

import itertools
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import ConfigurationError
from ..nlp.ocp import Box

GRID_EPS = 1e-12


class SamplerMode(Enum):
    GRID_TWO_LEVEL = "grid-two-level"
    RANDOM_BOX = "random-box"


def _per_axis(value: Union[float, Sequence[float]], dim: int, name: str) -> Tuple[float, ...]:
    values = (float(value),) * dim if np.isscalar(value) else tuple(float(v) for v in value)  # type: ignore[arg-type]
    if len(values) != dim:
        raise ConfigurationError(f"{name} needs {dim} entries, got {len(values)}", f"sampler.{name}")
    if any(v <= 0 for v in values):
        raise ConfigurationError(f"{name} must be positive", f"sampler.{name}")
    return values


@dataclass(frozen=True)
class SamplerConfig:
    mode: SamplerMode
    box: Box
    coarse_interval: Optional[Tuple[float, ...]] = None
    fine_interval: Optional[Tuple[float, ...]] = None
    fine_steps: int = 2
    n_s: Optional[int] = None
    n_p: int = 0
    radius_fraction: float = 0.02
    max_attempt_factor: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.n_s is not None and self.n_s < 0:
            raise ConfigurationError("n_s must not be negative", "sampler.n_s")
        if self.n_p < 0:
            raise ConfigurationError("n_p must not be negative", "sampler.n_p")
        if self.mode == SamplerMode.GRID_TWO_LEVEL:
            if self.coarse_interval is None:
                raise ConfigurationError("grid sampling needs a coarse interval", "sampler.coarse_interval")
            object.__setattr__(
                self, "coarse_interval", _per_axis(self.coarse_interval, self.box.dim, "coarse_interval")
            )
            if self.fine_interval is not None:
                object.__setattr__(
                    self, "fine_interval", _per_axis(self.fine_interval, self.box.dim, "fine_interval")
                )
            if self.fine_steps < 0:
                raise ConfigurationError("fine_steps must not be negative", "sampler.fine_steps")
        else:
            if not self.n_s:
                raise ConfigurationError("random sampling needs n_s >= 1", "sampler.n_s")
            if not 0.0 < self.radius_fraction <= 1.0:
                raise ConfigurationError("radius_fraction must lie in (0, 1]", "sampler.radius_fraction")
        if self.max_attempt_factor < 1:
            raise ConfigurationError("max_attempt_factor must be at least 1", "sampler.max_attempt_factor")

    @property
    def augments(self) -> bool:
        if self.mode == SamplerMode.GRID_TWO_LEVEL:
            return self.fine_interval is not None and self.fine_steps > 0
        return self.n_p > 0

    @property
    def radius(self) -> np.ndarray:
        return self.radius_fraction * (np.array(self.box.upper) - np.array(self.box.lower))

    def as_dict(self) -> Dict[str, Any]:
        return {
            "mode": self.mode.value,
            "box": {"lower": list(self.box.lower), "upper": list(self.box.upper)},
            "coarse_interval": list(self.coarse_interval) if self.coarse_interval else None,
            "fine_interval": list(self.fine_interval) if self.fine_interval else None,
            "fine_steps": self.fine_steps,
            "n_s": self.n_s,
            "n_p": self.n_p,
            "radius_fraction": self.radius_fraction,
            "max_attempt_factor": self.max_attempt_factor,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SamplerConfig":
        data = dict(data)
        try:
            mode = SamplerMode(data.pop("mode"))
        except (KeyError, ValueError) as e:
            raise ConfigurationError(f"unknown sampler mode: {e}", "sampler.mode") from e
        box = data.pop("box")
        if not isinstance(box, Box):
            box = Box(tuple(box["lower"]), tuple(box["upper"]))
        for key in ("coarse_interval", "fine_interval"):
            if isinstance(data.get(key), list):
                data[key] = tuple(data[key])
        try:
            return cls(mode=mode, box=box, **data)
        except TypeError as e:
            raise ConfigurationError(f"invalid sampler settings: {e}", "sampler") from e


def axis_points(lower: float, upper: float, interval: float) -> np.ndarray:
    """lower, lower + h, ... while the point stays within upper + 1e-12."""
    if lower > upper:
        return np.empty(0)
    count = int(np.floor((upper - lower) / interval + GRID_EPS / interval)) + 1
    points = lower + interval * np.arange(count)
    if count and points[-1] > upper + GRID_EPS:
        points = points[:-1]
    return points


def grid_points(box: Box, interval: Union[float, Sequence[float]]) -> np.ndarray:
    """Cartesian product of the axis points, as rows."""
    steps = _per_axis(interval, box.dim, "interval")
    axes = [axis_points(lo, hi, h) for lo, hi, h in zip(box.lower, box.upper, steps)]
    if any(a.size == 0 for a in axes):
        return np.empty((0, box.dim))
    return np.array(list(itertools.product(*axes)), dtype=float).reshape(-1, box.dim)


def fine_offsets(interval: Sequence[float], steps: int) -> np.ndarray:
    """Stencil of +-steps fine intervals per axis, without the zero offset."""
    ranges = [h * np.arange(-steps, steps + 1) for h in interval]
    offsets = np.array(list(itertools.product(*ranges)), dtype=float)
    return offsets[np.any(offsets != 0.0, axis=1)]


def anchor_rng(seed: int, anchor_id: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(anchor_id,)))


def redraw_anchor(sampler: SamplerConfig, anchor_id: int, attempt: int) -> np.ndarray:
    """Replacement for an infeasible random anchor, drawn from its own seeded stream."""
    rng = np.random.default_rng(np.random.SeedSequence(sampler.seed, spawn_key=(anchor_id, attempt)))
    return rng.uniform(sampler.box.lower, sampler.box.upper)


def anchor_points(sampler: SamplerConfig) -> np.ndarray:
    box = sampler.box
    rng = np.random.default_rng(np.random.SeedSequence(sampler.seed))
    if sampler.mode == SamplerMode.GRID_TWO_LEVEL:
        assert sampler.coarse_interval is not None
        points = grid_points(box, sampler.coarse_interval)
        if sampler.n_s is not None and sampler.n_s < len(points):
            keep = np.sort(rng.choice(len(points), size=sampler.n_s, replace=False))
            points = points[keep]
        return points
    assert sampler.n_s is not None
    return rng.uniform(box.lower, box.upper, size=(sampler.n_s, box.dim))


def grid_neighborhood(sampler: SamplerConfig, anchor: np.ndarray) -> List[np.ndarray]:
    """Fine-grid perturbations of ``anchor`` that stay inside the box."""
    if not sampler.augments:
        return []
    assert sampler.fine_interval is not None
    out = []
    for dp in fine_offsets(sampler.fine_interval, sampler.fine_steps):
        if sampler.box.contains(anchor + dp, GRID_EPS):
            out.append(dp)
    return out


class RandomNeighborhood:
    """Uniform draws in the infinity-norm ball around an anchor, rejecting points outside the box."""

    def __init__(self, sampler: SamplerConfig, anchor: np.ndarray, anchor_id: int):
        self.box = sampler.box
        self.anchor = np.asarray(anchor, dtype=float)
        self.radius = sampler.radius
        self.rng = anchor_rng(sampler.seed, anchor_id)
        self.max_draws = sampler.max_attempt_factor * max(sampler.n_p, 1)
        self.draws = 0

    def __iter__(self):
        return self

    def __next__(self) -> np.ndarray:
        while self.draws < self.max_draws:
            self.draws += 1
            dp = self.rng.uniform(-self.radius, self.radius)
            if self.box.contains(self.anchor + dp):
                return dp
        raise StopIteration
