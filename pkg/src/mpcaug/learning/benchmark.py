"""Accuracy and smoothness checks of predictor samples against re-solved NLPs."""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from ..errors import SolverError
from ..nlp.ocp import OcpSpec, build_transcription, transcribe
from ..nlp.sensitivity import extract_control
from ..nlp.solver import KktPoint, SolverOptions, solve
from .dataset import Dataset, Provenance, speedup, timing_report

logger = logging.getLogger(__name__)


@dataclass
class PairCheck:
    """One predictor sample re-solved exactly, compared to its anchor."""

    anchor_id: int
    distance: float
    solution_ratio: float
    objective_ratio: float
    label_error: float


@dataclass
class ResolveReport:
    pairs: List[PairCheck] = field(default_factory=list)
    failures: int = 0

    @staticmethod
    def _stats(values: List[float]) -> Dict[str, Any]:
        if not values:
            return {"max": None, "mean": None, "count": 0}
        arr = np.array(values)
        return {"max": float(arr.max()), "mean": float(arr.mean()), "count": int(arr.size)}

    def as_dict(self) -> Dict[str, Any]:
        return {
            "solution_lipschitz": self._stats([p.solution_ratio for p in self.pairs]),
            "objective_lipschitz": self._stats([p.objective_ratio for p in self.pairs]),
            "label_error": self._stats([p.label_error for p in self.pairs]),
            "resolve_failures": self.failures,
        }


def resolve_pairs(
    spec: OcpSpec,
    ds: Dataset,
    opts: Optional[SolverOptions] = None,
    pairs: int = 10,
    seed: int = 0,
) -> ResolveReport:
    """Re-solve up to ``pairs`` predictor samples and their anchors with the full solver.

    Ratios are ||s(p1) - s(p0)|| / ||p1 - p0|| for the primal-dual vector and
    |J(p1) - J(p0)| / ||p1 - p0|| for the optimal value; the label error is the
    largest input difference between the predicted and the re-solved control.
    """
    opts = opts or SolverOptions()
    layout = build_transcription(spec).layout
    anchors = ds.anchors()
    candidates = [
        s for s in ds.feasible() if s.provenance == Provenance.PREDICTOR and s.anchor_id in anchors
    ]
    report = ResolveReport()
    if not candidates or pairs <= 0:
        return report
    rng = np.random.default_rng(seed)
    chosen = sorted(rng.choice(len(candidates), size=min(pairs, len(candidates)), replace=False))

    solved: Dict[int, Optional[KktPoint]] = {}
    for i in chosen:
        sample = candidates[i]
        if sample.anchor_id not in solved:
            try:
                solved[sample.anchor_id] = solve(transcribe(spec, anchors[sample.anchor_id].x_tilde), None, opts)
            except SolverError as e:
                logger.info(f"anchor {sample.anchor_id} re-solve failed: {e}")
                solved[sample.anchor_id] = None
        base = solved[sample.anchor_id]
        if base is None:
            report.failures += 1
            continue
        try:
            point = solve(transcribe(spec, sample.x_tilde), None, opts)
        except SolverError as e:
            logger.info(f"predictor sample of anchor {sample.anchor_id} re-solve failed: {e}")
            report.failures += 1
            continue
        dist = float(np.linalg.norm(sample.x_tilde - anchors[sample.anchor_id].x_tilde))
        if dist == 0.0:
            continue
        report.pairs.append(
            PairCheck(
                anchor_id=sample.anchor_id,
                distance=dist,
                solution_ratio=float(np.linalg.norm(point.s - base.s)) / dist,
                objective_ratio=abs(point.objective - base.objective) / dist,
                label_error=float(np.max(np.abs(extract_control(point, layout) - sample.u_star))),
            )
        )
    logger.info(f"re-solved {len(report.pairs)} predictor samples, {report.failures} failures")
    return report


def bench_report(
    spec: OcpSpec,
    ds: Dataset,
    opts: Optional[SolverOptions] = None,
    pairs: int = 10,
    seed: int = 0,
) -> Dict[str, Any]:
    """Timing per provenance, the speedup ratio and the re-solve checks in one mapping."""
    timing = timing_report(ds)
    return {
        "problem": ds.meta.problem or spec.name,
        "ocp_hash": spec.fingerprint(),
        "counts": ds.count_by_provenance(),
        "rejections": dict(ds.meta.rejections),
        "timing": {k: row.as_dict() for k, row in timing.items()},
        "speedup": speedup(timing),
        "resolve": resolve_pairs(spec, ds, opts, pairs, seed).as_dict(),
    }
