"""Labelled samples (x_tilde, u*) with provenance, timing and persistence."""

from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from ..errors import CorruptDatasetError, EmptyDatasetError
from ..serialization import read_records, write_records

DATASET_SCHEMA = "mpcaug.dataset"
DATASET_VERSION = 1


class Provenance(Enum):
    FULL_NLP = "full-nlp"
    PREDICTOR = "predictor"


@dataclass
class Sample:
    x_tilde: np.ndarray
    u_star: np.ndarray
    provenance: Provenance
    anchor_id: int
    wall_time_s: float
    feasible: bool = True
    clip: float = 0.0

    def to_record(self, timing: bool = True) -> Dict[str, Any]:
        return {
            "x_tilde": self.x_tilde,
            "u_star": self.u_star,
            "provenance": self.provenance,
            "anchor_id": self.anchor_id,
            "wall_time_s": self.wall_time_s if timing else 0.0,
            "feasible": self.feasible,
            "clip": self.clip,
        }

    @classmethod
    def from_record(cls, record: Dict[str, Any]) -> "Sample":
        return cls(
            x_tilde=np.array(record["x_tilde"], dtype=float),
            u_star=np.array(record["u_star"], dtype=float),
            provenance=Provenance(record["provenance"]),
            anchor_id=int(record["anchor_id"]),
            wall_time_s=float(record["wall_time_s"]),
            feasible=bool(record["feasible"]),
            clip=float(record.get("clip", 0.0)),
        )


@dataclass(frozen=True)
class TimingRow:
    minimum: float
    average: float
    maximum: float
    count: int

    def as_dict(self) -> Dict[str, Any]:
        return {"min": self.minimum, "avg": self.average, "max": self.maximum, "count": self.count}


@dataclass
class DatasetMeta:
    ocp_hash: str = ""
    problem: str = ""
    mode: str = ""
    sampler: Dict[str, Any] = field(default_factory=dict)
    counts: Dict[str, int] = field(default_factory=dict)
    rejections: Dict[str, int] = field(default_factory=dict)
    timing: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    parameter_names: List[str] = field(default_factory=list)
    input_names: List[str] = field(default_factory=list)

    def as_dict(self) -> Dict[str, Any]:
        return {
            "ocp_hash": self.ocp_hash,
            "problem": self.problem,
            "mode": self.mode,
            "sampler": self.sampler,
            "counts": self.counts,
            "rejections": self.rejections,
            "timing": self.timing,
            "parameter_names": self.parameter_names,
            "input_names": self.input_names,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DatasetMeta":
        return cls(**data)


@dataclass
class Dataset:
    samples: List[Sample] = field(default_factory=list)
    meta: DatasetMeta = field(default_factory=DatasetMeta)

    def __len__(self) -> int:
        return len(self.samples)

    def count_by_provenance(self, feasible_only: bool = True) -> Dict[str, int]:
        counts = Counter(s.provenance.value for s in self.samples if s.feasible or not feasible_only)
        return {p.value: counts.get(p.value, 0) for p in Provenance}

    def refresh_meta(self):
        """Recompute the counts and timing summary from the samples."""
        counts = self.count_by_provenance()
        counts["infeasible"] = sum(1 for s in self.samples if not s.feasible)
        self.meta.counts = counts
        self.meta.timing = (
            {k: row.as_dict() for k, row in timing_report(self).items()} if self.feasible() else {}
        )

    def feasible(self) -> List[Sample]:
        return [s for s in self.samples if s.feasible]

    def arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        """Inputs and labels of the feasible samples, one row each."""
        rows = self.feasible()
        if not rows:
            return np.empty((0, 0)), np.empty((0, 0))
        return np.vstack([s.x_tilde for s in rows]), np.vstack([s.u_star for s in rows])

    def anchors(self) -> Dict[int, Sample]:
        """Full-solve row per anchor id; a feasible row wins over rejected re-draws."""
        out: Dict[int, Sample] = {}
        for s in self.samples:
            if s.provenance == Provenance.FULL_NLP and (s.anchor_id not in out or s.feasible):
                out[s.anchor_id] = s
        return out


def timing_report(ds: Dataset) -> Dict[str, TimingRow]:
    """Min, mean and max generation time per provenance over the feasible samples."""
    rows = ds.feasible()
    if not rows:
        raise EmptyDatasetError("timing report needs at least one feasible sample")
    report: Dict[str, TimingRow] = {}
    for prov in Provenance:
        times = np.array([s.wall_time_s for s in rows if s.provenance == prov])
        if times.size:
            report[prov.value] = TimingRow(
                float(times.min()), float(times.mean()), float(times.max()), int(times.size)
            )
    return report


def speedup(report: Dict[str, TimingRow]) -> Optional[float]:
    full = report.get(Provenance.FULL_NLP.value)
    pred = report.get(Provenance.PREDICTOR.value)
    if full is None or pred is None or pred.average <= 0:
        return None
    return full.average / pred.average


def save_dataset(ds: Dataset, path: Path, timing: bool = True):
    meta = ds.meta.as_dict()
    if not timing:
        meta["timing"] = {}
    header = {"schema": DATASET_SCHEMA, "version": DATASET_VERSION, "meta": meta}
    write_records(Path(path), header, (s.to_record(timing) for s in ds.samples))


def load_dataset(path: Path) -> Dataset:
    """Read a dataset file; the header counts must match the records."""
    header, records = read_records(Path(path), DATASET_SCHEMA, DATASET_VERSION)
    try:
        samples = [Sample.from_record(r) for r in records]
        meta = DatasetMeta.from_dict(header.get("meta", {}))
    except (KeyError, TypeError, ValueError) as e:
        raise CorruptDatasetError(f"{path} has a malformed record: {e}") from e
    ds = Dataset(samples=samples, meta=meta)
    if meta.counts:
        found = ds.count_by_provenance()
        found["infeasible"] = sum(1 for s in samples if not s.feasible)
        if {k: int(v) for k, v in meta.counts.items()} != found:
            raise CorruptDatasetError(f"{path} header counts {meta.counts} do not match its records {found}")
    return ds
