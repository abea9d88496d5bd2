"""Repeated fitting over datasets with error and timing statistics."""
from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from ..errors import HRMPError
from ..geometry import PointSet
from ..pipeline import FitConfig, ablate
from .metrics import misclassification_error
from .synthetic import SyntheticSpec, generate_synthetic

log = logging.getLogger(__name__)


@dataclass
class RunRecord:
    dataset: str
    repeat: int
    seed: int
    error: float
    time: float
    instances: int
    failure: str | None = None


@dataclass
class DatasetStats:
    name: str
    mean: float
    std: float
    median: float
    mean_time: float
    runs: int
    failures: int


@dataclass
class BenchStats:
    datasets: list
    total_average: float
    total_median: float
    log: list = field(default_factory=list)

    @classmethod
    def from_records(cls, records: list) -> "BenchStats":
        names = list(dict.fromkeys(r.dataset for r in records))
        per = []
        for name in names:
            rs = [r for r in records if r.dataset == name]
            err = np.array([r.error for r in rs])
            per.append(DatasetStats(
                name,
                float(err.mean()),
                float(err.std()),
                float(np.median(err)),
                float(np.mean([r.time for r in rs])),
                len(rs),
                sum(r.failure is not None for r in rs),
            ))
        means = [d.mean for d in per]
        medians = [d.median for d in per]
        return cls(per, float(np.mean(means)) if per else 0.0, float(np.median(medians)) if per else 0.0, list(records))

    def to_dict(self) -> dict:
        return {
            "datasets": [dataclasses.asdict(d) for d in self.datasets],
            "total_average": self.total_average,
            "total_median": self.total_median,
            "runs": [dataclasses.asdict(r) for r in self.log],
        }


def _dataset(spec, seed: int) -> PointSet:
    if isinstance(spec, SyntheticSpec):
        return generate_synthetic(dataclasses.replace(spec, seed=seed))
    return spec


def _name(spec, i: int) -> str:
    name = spec.name if isinstance(spec, SyntheticSpec) else spec.meta.get("name", "")
    return name or f"dataset {i}"


def run_benchmark(specs, cfg: FitConfig, repeats: int = 20, variant: str = "HMP+IAP") -> BenchStats:
    """Fit every dataset ``repeats`` times and collect error statistics.

    Repeat r of a synthetic spec with seed s regenerates the data with seed
    s + r and fits with the same seed; fixed point sets (which must carry
    ground-truth labels) are refit with seeds cfg.seed + r. A failed run
    counts as 100% error and is logged with its reason.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    if isinstance(specs, (SyntheticSpec, PointSet)):
        specs = [specs]
    records = []
    for i, spec in enumerate(specs):
        base = spec.seed if isinstance(spec, SyntheticSpec) else cfg.seed
        name = _name(spec, i)
        for r in range(repeats):
            seed = base + r
            points = _dataset(spec, seed)
            if points.labels is None:
                raise ValueError(f"{name} has no ground-truth labels")
            run_cfg = dataclasses.replace(cfg, seed=seed)
            t0 = time.perf_counter()
            try:
                report = ablate(points, run_cfg, variant)
            except HRMPError as exc:
                elapsed = time.perf_counter() - t0
                log.warning("%s repeat %d failed: %s", name, r, exc)
                records.append(RunRecord(name, r, seed, 100.0, elapsed, 0, f"{type(exc).__name__}: {exc}"))
                continue
            elapsed = time.perf_counter() - t0
            err = misclassification_error(report.labels, points.labels)
            records.append(RunRecord(name, r, seed, err, elapsed, len(report.instances)))
    return BenchStats.from_records(records)
