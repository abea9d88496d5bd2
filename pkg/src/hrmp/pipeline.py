"""End-to-end fitting: hypotheses -> representation -> propagation -> pruning -> clustering."""
from __future__ import annotations

import dataclasses
import time
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .clustering import (
    APResult,
    ClusterResult,
    build_knn_graph,
    refine_clusters,
    sparse_affinity_propagation,
)
from .errors import EmptyResult, HRMPError
from .geometry import ModelKind, PointSet
from .hierarchy import build_representation, propagate, prune_layers
from .hypothesis import IkoseConfig, SamplerConfig, generate_hypotheses

VARIANTS = ("HMP+IAP", "HMP+SAP", "IAP", "SAP")


@dataclass
class FitConfig:
    kind: ModelKind = ModelKind.LINE2D
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    ikose: IkoseConfig = field(default_factory=IkoseConfig)
    propagation_iters: int = 3
    tau: int | None = None  # None: min(30, N' - 1)
    damping: float = 0.9
    ap_max_iters: int = 1000
    ap_stable_window: int = 50
    seed: int = 0

    def __post_init__(self):
        self.kind = ModelKind.parse(self.kind)
        if self.propagation_iters < 1:
            raise ValueError("propagation_iters must be >= 1")
        if self.tau is not None and self.tau < 1:
            raise ValueError("tau must be >= 1")
        if not 0 <= self.damping < 1:
            raise ValueError("damping must lie in [0, 1)")


@dataclass
class FitReport:
    instances: list  # (params, member indices into the input points)
    labels: np.ndarray  # per input point, 0 = outlier
    counts: dict
    timings: dict
    diagnostics: dict

    def to_dict(self) -> dict:
        return {
            "instances": [{"params": p.tolist(), "members": m.tolist()} for p, m in self.instances],
            "labels": self.labels.tolist(),
            "counts": dict(self.counts),
            "timings": dict(self.timings),
            "diagnostics": dict(self.diagnostics),
        }


class _Stages:
    def __init__(self):
        self.timings = {}

    @contextmanager
    def stage(self, name):
        t0 = time.perf_counter()
        try:
            yield
        except HRMPError as exc:
            if exc.stage is None:
                exc.stage = name
            raise
        finally:
            self.timings[name] = time.perf_counter() - t0


def default_tau(n: int) -> int:
    return max(1, min(30, n - 1))


def preference_vectors(rep, hyp_score, rows, cols) -> sp.csr_matrix:
    """Per-edge preference messages P(i, m) = h(m) * w(i, m) on a sub-block."""
    W = rep.weights[rows][:, cols]
    return sp.csr_matrix(W @ sp.diags(np.asarray(hyp_score)[cols]))


def fit(points: PointSet, cfg: FitConfig | None = None) -> FitReport:
    return ablate(points, cfg, "HMP+IAP")


def ablate(points: PointSet, cfg: FitConfig | None, variant: str) -> FitReport:
    """Run the pipeline with components switched off.

    HMP+IAP is the full method. HMP+SAP keeps layer pruning but reports the
    first clustering pass without merging. IAP skips propagation and pruning
    and clusters every point on its raw edge weights. SAP skips both.
    """
    cfg = cfg or FitConfig()
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    use_hmp = variant.startswith("HMP")
    merge = variant.endswith("IAP")
    kind = cfg.kind
    if points.kind != kind.observation_kind:
        raise ValueError(f"{kind.value} needs {kind.observation_kind} data, got {points.kind}")
    N = len(points)
    st = _Stages()
    rng = np.random.default_rng(cfg.seed)
    scfg = dataclasses.replace(cfg.sampler, seed=cfg.seed)

    with st.stage("hypotheses"):
        hyps = generate_hypotheses(points, kind, scfg, cfg.ikose, rng=rng)
    M = len(hyps)
    with st.stage("representation"):
        rep = build_representation(points, hyps)
        hyps.residuals = None  # the representation keeps what is needed
    with st.stage("propagation"):
        if use_hmp:
            msg = propagate(rep, cfg.propagation_iters)
            h = msg.hyp_score
        else:
            msg = None
            h = np.full(M, 1.0 / M)
    with st.stage("pruning"):
        if use_hmp:
            pruned = prune_layers(rep, msg)
            kept_h, kept_d, phi = pruned.kept_hypotheses, pruned.kept_points, pruned.threshold
        else:
            kept_h, kept_d, phi = np.arange(M), np.arange(N), None
    with st.stage("graph"):
        P = preference_vectors(rep, h, kept_d, kept_h)
        nonzero = np.diff(P.indptr) > 0
        vertices = kept_d[nonzero]
        P = P[nonzero]
        if vertices.size == 0:
            raise EmptyResult("no kept point has a surviving edge")
        tau = cfg.tau if cfg.tau is not None else default_tau(vertices.size)
        tau = min(tau, max(vertices.size - 1, 1))
        graph = build_knn_graph(P, tau) if vertices.size > 1 else None
    with st.stage("clustering"):
        if graph is None:
            stage1 = APResult(np.array([0]), np.array([0]), True, 0)
        else:
            stage1 = sparse_affinity_propagation(graph, cfg.damping, cfg.ap_max_iters, cfg.ap_stable_window)
    with st.stage("estimation"):
        clusters: ClusterResult = refine_clusters(
            stage1, P, points.data[vertices], kind, cfg.damping, cfg.ap_max_iters, cfg.ap_stable_window,
            merge=merge,
        )

    labels = np.zeros(N, dtype=int)
    labels[vertices] = clusters.labels
    instances = [(params, vertices[members]) for params, members in clusters.instances]
    counts = {
        "M": M,
        "M_kept": int(kept_h.size),
        "N": N,
        "N_kept": int(kept_d.size),
        "N_clustered": int(vertices.size),
        "stage1_clusters": int(np.unique(stage1.labels).size),
        "significant_clusters": clusters.stage1_cluster_count,
        "instances": len(instances),
    }
    diagnostics = {
        "variant": variant,
        "degenerate_skipped": hyps.skipped,
        "ap_converged": bool(clusters.converged),
        "ap_iterations": int(stage1.iterations),
        "threshold": phi,
        "tau": int(tau),
    }
    return FitReport(instances, labels, counts, st.timings, diagnostics)
