"""Training data generation: one full solve per anchor, optionally fanned out by tangential predictors.

Anchors are independent work units. With ``jobs > 1`` they run in a process
pool; results are always merged in anchor order.
"""

import logging
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Tuple

import numpy as np

from ..errors import SingularKktError, SolverError, WeaklyActiveError
from ..nlp.ocp import OcpSpec, build_transcription, transcribe
from ..nlp.problem import NlpInstance
from ..nlp.sensitivity import build_sensitivity, extract_control, tangential_predictor
from ..nlp.solver import KktPoint, SolverOptions, solve
from .dataset import Dataset, DatasetMeta, Provenance, Sample
from .sampling import (
    RandomNeighborhood,
    SamplerConfig,
    SamplerMode,
    anchor_points,
    grid_neighborhood,
    redraw_anchor,
)

logger = logging.getLogger(__name__)


@dataclass
class AnchorTask:
    anchor_id: int
    x: np.ndarray
    spec: OcpSpec
    sampler: SamplerConfig
    opts: SolverOptions
    augment: bool
    redraws: int = 0


@dataclass
class AnchorResult:
    anchor_id: int
    samples: List[Sample] = field(default_factory=list)
    rejections: Counter = field(default_factory=Counter)


def _label(u: np.ndarray, spec: OcpSpec, eps: float) -> Optional[Tuple[np.ndarray, float]]:
    """Clip u into U; None when it lies further than eps outside."""
    clipped = spec.input_bounds.clip(u)
    amount = float(np.max(np.abs(clipped - u))) if u.size else 0.0
    if amount > eps:
        return None
    return clipped, amount


def _solve_anchor(
    task: AnchorTask, x: np.ndarray, result: AnchorResult
) -> Optional[Tuple[NlpInstance, KktPoint]]:
    """Full solve at x, recorded as one FULL_NLP row; returns the instance and point when feasible."""
    spec, opts = task.spec, task.opts
    layout = build_transcription(spec).layout
    nlp = transcribe(spec, x)

    t0 = time.perf_counter()
    try:
        point = solve(nlp, None, opts)
    except SolverError as e:
        logger.info(f"anchor {task.anchor_id} infeasible: {e}")
        result.samples.append(
            Sample(
                x,
                np.full(spec.model.n_u, np.nan),
                Provenance.FULL_NLP,
                task.anchor_id,
                time.perf_counter() - t0,
                feasible=False,
            )
        )
        result.rejections["solver-failure"] += 1
        return None
    elapsed = point.stats.wall_time_s if point.stats else time.perf_counter() - t0

    label = _label(extract_control(point, layout), spec, opts.eps_active)
    feasible = point.certified and label is not None
    if not point.certified:
        result.rejections["uncertified"] += 1
    elif label is None:
        result.rejections["label-out-of-bounds"] += 1
    u_star, clip = label if label is not None else (extract_control(point, layout), 0.0)
    result.samples.append(
        Sample(x, u_star, Provenance.FULL_NLP, task.anchor_id, elapsed, feasible=feasible, clip=clip)
    )
    return (nlp, point) if feasible else None


def process_anchor(task: AnchorTask) -> AnchorResult:
    """Solve one anchor and fan it out; an infeasible random anchor is re-drawn up to ``task.redraws`` times."""
    spec, opts = task.spec, task.opts
    result = AnchorResult(task.anchor_id)
    x = task.x
    solved = _solve_anchor(task, x, result)
    for attempt in range(1, task.redraws + 1):
        if solved is not None:
            break
        x = redraw_anchor(task.sampler, task.anchor_id, attempt)
        result.rejections["anchor-redrawn"] += 1
        solved = _solve_anchor(task, x, result)
    if solved is None or not task.augment or not task.sampler.augments:
        return result
    nlp, point = solved
    layout = build_transcription(spec).layout

    try:
        system = build_sensitivity(nlp, point)
    except WeaklyActiveError:
        result.rejections["weakly-active"] += 1
        return result
    except SingularKktError:
        result.rejections["singular-kkt"] += 1
        return result

    sampler = task.sampler
    if sampler.mode == SamplerMode.GRID_TWO_LEVEL:
        perturbations: Iterable[np.ndarray] = grid_neighborhood(sampler, x)
        target = None
    else:
        perturbations = RandomNeighborhood(sampler, x, task.anchor_id)
        target = sampler.n_p

    predicted: List[Tuple[np.ndarray, np.ndarray, float, float]] = []
    attempts = 0
    for dp in perturbations:
        if target is not None and len(predicted) >= target:
            break
        attempts += 1
        res = tangential_predictor(system, dp)
        if not res.accepted:
            result.rejections[res.rejection_reason.value] += 1
            continue
        label = _label(extract_control(res, layout), spec, opts.eps_active)
        if label is None:
            result.rejections["label-out-of-bounds"] += 1
            continue
        predicted.append((x + res.dp, label[0], label[1], res.wall_time_s))

    # the factorization is shared by every predictor of this anchor
    share = system.build_time_s / attempts if attempts else 0.0
    for xp, u, clip, wall in predicted:
        result.samples.append(Sample(xp, u, Provenance.PREDICTOR, task.anchor_id, wall + share, clip=clip))
    logger.debug(
        f"anchor {task.anchor_id}: {len(predicted)} predictor samples out of {attempts} perturbations"
    )
    return result


def _run(tasks: List[AnchorTask], jobs: int) -> List[AnchorResult]:
    if jobs <= 1 or len(tasks) <= 1:
        return [process_anchor(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(process_anchor, tasks))


def _generate(
    spec: OcpSpec,
    sampler: SamplerConfig,
    opts: Optional[SolverOptions],
    jobs: int,
    augment: bool,
    points: Optional[np.ndarray],
) -> Dataset:
    opts = opts or SolverOptions()
    anchors = anchor_points(sampler) if points is None else np.asarray(points, dtype=float)
    anchors = anchors.reshape(-1, spec.n_p)
    logger.info(f"generating from {len(anchors)} anchors ({'augmented' if augment else 'baseline'}, jobs={jobs})")

    # explicit points are kept as given; sampled random anchors may be replaced
    redraws = sampler.max_attempt_factor - 1 if points is None and sampler.mode == SamplerMode.RANDOM_BOX else 0
    tasks = [AnchorTask(i, x, spec, sampler, opts, augment, redraws) for i, x in enumerate(anchors)]
    results = _run(tasks, jobs)

    samples: List[Sample] = []
    rejections: Counter = Counter()
    for r in sorted(results, key=lambda r: r.anchor_id):
        samples.extend(r.samples)
        rejections.update(r.rejections)

    meta = DatasetMeta(
        ocp_hash=spec.fingerprint(),
        problem=spec.name or spec.model.name,
        mode="augmented" if augment else "baseline",
        sampler=sampler.as_dict(),
        rejections=dict(sorted(rejections.items())),
        parameter_names=spec.parameters.names(spec.model),
        input_names=list(spec.model.input_names),
    )
    ds = Dataset(samples, meta)
    ds.refresh_meta()
    logger.info(f"dataset counts {ds.meta.counts}, rejections {ds.meta.rejections}")
    return ds


def generate_baseline(
    spec: OcpSpec,
    sampler: SamplerConfig,
    opts: Optional[SolverOptions] = None,
    jobs: int = 1,
    points: Optional[np.ndarray] = None,
) -> Dataset:
    """One full NLP solve per sampled parameter."""
    return _generate(spec, sampler, opts, jobs, False, points)


def generate_augmented(
    spec: OcpSpec,
    sampler: SamplerConfig,
    opts: Optional[SolverOptions] = None,
    jobs: int = 1,
    points: Optional[np.ndarray] = None,
) -> Dataset:
    """Full solves at the anchors plus accepted tangential predictions in their neighborhoods."""
    return _generate(spec, sampler, opts, jobs, True, points)

