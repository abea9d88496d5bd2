"""Proximity-guided hypothesis generation and IKOSE inlier-scale estimation."""
from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import InsufficientInliers, NotEnoughPoints, SamplingExhausted
from .geometry import ModelHypothesis, ModelKind, PointSet, residual_matrix, solve_batch

log = logging.getLogger(__name__)


@dataclass
class SamplerConfig:
    hypothesis_count: int = 5000
    proximity_sigma: float | None = None  # None: 0.1 x bounding-box diagonal
    seed: int = 0
    max_degenerate_retries: int = 10

    def __post_init__(self):
        if self.hypothesis_count < 1:
            raise ValueError("hypothesis_count must be >= 1")
        if self.proximity_sigma is not None and not self.proximity_sigma > 0:
            raise ValueError("proximity_sigma must be positive")
        if self.max_degenerate_retries < 1:
            raise ValueError("max_degenerate_retries must be >= 1")


@dataclass
class IkoseConfig:
    k: int | None = None  # None: max(10, ceil(0.1 N)), clipped to N
    inlier_cutoff: float = 2.5
    max_iters: int = 20
    min_scale: float = 1e-9

    def __post_init__(self):
        if self.k is not None and self.k < 1:
            raise ValueError("k must be >= 1")
        if not self.inlier_cutoff > 0:
            raise ValueError("inlier_cutoff must be positive")
        if self.max_iters < 1 or not self.min_scale > 0:
            raise ValueError("max_iters must be >= 1 and min_scale positive")

    def resolve_k(self, n: int) -> int:
        k = self.k if self.k is not None else max(10, math.ceil(0.1 * n))
        return min(k, n)


def default_proximity_sigma(data: np.ndarray) -> float:
    diag = float(np.linalg.norm(np.ptp(data, axis=0)))
    return 0.1 * diag if diag > 0 else 1.0


class HypothesisSet(Sequence):
    """The hypothesis layer: M hypotheses stored as parameter and scale arrays.

    Indexing yields :class:`ModelHypothesis` objects; ``residuals`` caches the
    (N, M) residual matrix computed while estimating the scales.
    """

    def __init__(self, kind: ModelKind, params, scales, subsets=None, residuals=None, skipped: int = 0):
        self.kind = kind
        self.params = np.asarray(params, dtype=float).reshape(-1, kind.param_size)
        self.scales = np.asarray(scales, dtype=float).reshape(-1)
        if self.scales.shape[0] != self.params.shape[0]:
            raise ValueError("params and scales disagree on M")
        self.subsets = subsets
        self.residuals = residuals
        self.skipped = skipped

    @classmethod
    def from_list(cls, hyps: Sequence[ModelHypothesis]) -> "HypothesisSet":
        if isinstance(hyps, HypothesisSet):
            return hyps
        if not hyps:
            raise ValueError("empty hypothesis list")
        kind = hyps[0].kind
        return cls(kind, np.array([h.params for h in hyps]), np.array([h.scale for h in hyps]))

    def __len__(self):
        return self.params.shape[0]

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        return ModelHypothesis(self.kind, self.params[i].copy(), float(self.scales[i]))

    def select(self, idx) -> "HypothesisSet":
        idx = np.asarray(idx, dtype=int)
        res = None if self.residuals is None else self.residuals[:, idx]
        sub = None if self.subsets is None else self.subsets[idx]
        return HypothesisSet(self.kind, self.params[idx], self.scales[idx], sub, res)


def _gumbel_topk(rng, logw: np.ndarray, k: int) -> np.ndarray:
    # Gumbel top-k == sequential sampling without replacement, P ~ exp(logw)
    keys = logw + rng.gumbel(size=logw.shape)
    return np.argpartition(-keys, k - 1, axis=1)[:, :k]


def _draw_subsets(rng, sq_dist: np.ndarray, sigma: float, size: int, count: int, chunk: int = 2048) -> np.ndarray:
    n = sq_dist.shape[0]
    first = rng.integers(0, n, size=count)
    out = np.empty((count, size), dtype=np.intp)
    out[:, 0] = first
    if size == 1:
        return out
    for start in range(0, count, chunk):
        f = first[start:start + chunk]
        logw = -sq_dist[f] / sigma**2
        logw[np.arange(len(f)), f] = -np.inf
        out[start:start + chunk, 1:] = _gumbel_topk(rng, logw, size - 1)
    return out


def _sample_and_solve(points: PointSet, kind: ModelKind, cfg: SamplerConfig, rng):
    kind = ModelKind.parse(kind)
    data = points.data
    n, size = data.shape[0], kind.minimal_size
    if n < size:
        raise NotEnoughPoints(f"{kind.value} needs at least {size} points, got {n}")
    if points.kind != kind.observation_kind:
        raise ValueError(f"{kind.value} needs {kind.observation_kind} data, got {points.kind}")
    sigma = cfg.proximity_sigma if cfg.proximity_sigma is not None else default_proximity_sigma(data)
    sq = (data**2).sum(axis=1)
    sq_dist = np.maximum(sq[:, None] + sq[None, :] - 2.0 * data @ data.T, 0.0)

    M = cfg.hypothesis_count
    subsets = np.empty((M, size), dtype=np.intp)
    params = np.full((M, kind.param_size), np.nan)
    pending = np.arange(M)
    for _ in range(cfg.max_degenerate_retries):
        if pending.size == 0:
            break
        draw = np.sort(_draw_subsets(rng, sq_dist, sigma, size, pending.size), axis=1)
        p, ok = solve_batch(kind, data[draw])
        subsets[pending[ok]] = draw[ok]
        params[pending[ok]] = p[ok]
        pending = pending[~ok]
    if pending.size == M:
        raise SamplingExhausted(f"no non-degenerate {kind.value} subset after {cfg.max_degenerate_retries} tries")
    if pending.size:
        log.warning("skipped %d degenerate sampling slots", pending.size)
        keep = np.setdiff1d(np.arange(M), pending)
        subsets, params = subsets[keep], params[keep]
    return subsets, params, int(pending.size)


def proximity_sample(points: PointSet, kind: ModelKind, cfg: SamplerConfig, rng=None) -> np.ndarray:
    """Draw minimal subsets, later members favoured near the first one.

    The first index is uniform; the rest are drawn without replacement with
    probability proportional to ``exp(-d(x_j, x_first)**2 / sigma**2)``.
    Degenerate subsets are redrawn up to ``max_degenerate_retries`` times and
    then dropped, so fewer than M rows come back only in pathological data.
    """
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    subsets, _, _ = _sample_and_solve(points, kind, cfg, rng)
    return subsets


def ikose(residuals, cfg: IkoseConfig | None = None) -> float:
    """Iterative K-th ordered scale estimate of the inlier residual spread.

    Raises InsufficientInliers when fewer than K residuals fall inside the
    inlier band.
    """
    r = np.abs(np.asarray(residuals, dtype=float)).reshape(-1, 1)
    if r.size == 0:
        raise ValueError("ikose needs at least one residual")
    cfg = cfg or IkoseConfig()
    if cfg.k is not None and cfg.k > r.shape[0]:
        raise ValueError("K exceeds the number of residuals")
    sigma, ok = ikose_batch(r, cfg)
    if not ok[0]:
        raise InsufficientInliers("fewer than K residuals inside the inlier band")
    return float(sigma[0])


def ikose_batch(R: np.ndarray, cfg: IkoseConfig | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Column-wise IKOSE over an (N, M) residual matrix.

    Returns (sigma, ok); failed columns have sigma 0.
    """
    cfg = cfg or IkoseConfig()
    R = np.asarray(R, dtype=float)
    n, m = R.shape
    k = cfg.resolve_k(n)
    r_k = np.partition(R, k - 1, axis=0)[k - 1]
    n_in = np.full(m, n, dtype=np.int64)
    sigma = np.zeros(m)
    ok = np.isfinite(r_k)
    active = ok.copy()
    for _ in range(cfg.max_iters):
        if not active.any():
            break
        cols = np.flatnonzero(active)
        with np.errstate(divide="ignore"):
            q = ndtri((1.0 + k / n_in[cols]) / 2.0)
        s = np.maximum(r_k[cols] / q, cfg.min_scale)
        sigma[cols] = s
        counts = (R[:, cols] <= cfg.inlier_cutoff * s).sum(axis=0)
        failed = counts < k
        ok[cols[failed]] = False
        done = failed | (counts == n_in[cols])
        n_in[cols] = counts
        active[cols[done]] = False
    sigma[~ok] = 0.0
    return sigma, ok


def generate_hypotheses(points: PointSet, kind: ModelKind, scfg: SamplerConfig | None = None,
                        icfg: IkoseConfig | None = None, rng=None) -> HypothesisSet:
    """Sample minimal subsets, solve them, and estimate each hypothesis' inlier scale."""
    kind = ModelKind.parse(kind)
    scfg = scfg or SamplerConfig()
    icfg = icfg or IkoseConfig()
    rng = np.random.default_rng(scfg.seed) if rng is None else rng
    subsets, params, skipped = _sample_and_solve(points, kind, scfg, rng)
    R = residual_matrix(kind, params, points.data)
    scales, _ = ikose_batch(R, icfg)
    return HypothesisSet(kind, params, scales, subsets=subsets, residuals=R, skipped=skipped)
