"""Tanimoto-like similarity, tau-nearest-neighbour graphs and sparse affinity propagation."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import DegenerateSubset, NoClusters, ZeroVector
from .geometry import ModelKind, PointSet, refit

log = logging.getLogger(__name__)

TIE_BREAK = 1e-9
MIN_OVERLAP = 0.1  # cluster pairs sharing less preference mass than this are not neighbours
SAME_TOL = 1e-12  # similarities this close to 0 are rounding noise between equal vectors


def tanimoto_similarity(p, q) -> float:
    """<p,q> / (|p|^2 + |q|^2 - <p,q>) - 1, in [-1, 0] for nonnegative vectors."""
    p = np.asarray(p, dtype=float).ravel()
    q = np.asarray(q, dtype=float).ravel()
    if p.shape != q.shape:
        raise ValueError("preference vectors differ in length")
    pp, qq, pq = p @ p, q @ q, p @ q
    if pp == 0 or qq == 0:
        raise ZeroVector("preference vector is all zero")
    s = pq / (pp + qq - pq) - 1.0
    return 0.0 if s > -SAME_TOL else s


def tanimoto_matrix(prefs) -> np.ndarray:
    """Pairwise similarities between the rows of ``prefs`` (dense or sparse)."""
    if sp.issparse(prefs):
        G = (prefs @ prefs.T).toarray()
    else:
        P = np.asarray(prefs, dtype=float)
        G = P @ P.T
    sq = np.diag(G).copy()
    if np.any(sq == 0):
        raise ZeroVector(f"{int(np.sum(sq == 0))} preference vectors are all zero")
    S = G / (sq[:, None] + sq[None, :] - G) - 1.0
    S[S > -SAME_TOL] = 0.0
    np.fill_diagonal(S, 0.0)
    return S


@dataclass
class SimilarityGraph:
    """Symmetric sparse similarity graph; both directions of every edge are stored."""

    n: int
    rows: np.ndarray
    cols: np.ndarray
    s: np.ndarray
    preference: np.ndarray

    def adjacency(self) -> sp.csr_matrix:
        return sp.csr_matrix((np.ones(self.rows.size), (self.rows, self.cols)), shape=(self.n, self.n))

    def to_dense(self, fill: float = -np.inf) -> np.ndarray:
        S = np.full((self.n, self.n), fill)
        S[self.rows, self.cols] = self.s
        S[np.arange(self.n), np.arange(self.n)] = self.preference
        return S


def median_preference(s: np.ndarray) -> float:
    return float(np.median(s)) if s.size else 0.0


def knn_graph_from_similarity(S: np.ndarray, tau: int, preference=None) -> SimilarityGraph:
    """Union of every vertex's ``tau`` most similar neighbours (ties: lowest index)."""
    S = np.asarray(S, dtype=float)
    n = S.shape[0]
    if n >= 2 and not 1 <= tau <= n - 1:
        raise ValueError(f"tau must lie in [1, {n - 1}]")
    if n < 2:
        rows = cols = np.empty(0, dtype=np.intp)
    else:
        key = -S.copy()
        np.fill_diagonal(key, np.inf)
        order = np.argsort(key, axis=1, kind="stable")[:, :tau]
        A = np.zeros((n, n), dtype=bool)
        A[np.repeat(np.arange(n), tau), order.ravel()] = True
        A |= A.T
        rows, cols = np.nonzero(A)
    s = S[rows, cols]
    if preference is None:
        preference = median_preference(s)
    pref = np.broadcast_to(np.asarray(preference, dtype=float), (n,)).copy()
    return SimilarityGraph(n, rows, cols, s, pref)


def build_knn_graph(prefs, tau: int, preference=None) -> SimilarityGraph:
    return knn_graph_from_similarity(tanimoto_matrix(prefs), tau, preference)


@dataclass
class APResult:
    exemplars: np.ndarray
    labels: np.ndarray  # exemplar index per vertex
    converged: bool
    iterations: int


def sparse_affinity_propagation(g: SimilarityGraph, damping: float = 0.9, max_iters: int = 1000,
                                stable_window: int = 50) -> APResult:
    """Affinity propagation with messages restricted to the graph's edges.

    Responsibilities are updated first (from the previous availabilities),
    then availabilities from the damped responsibilities. A vertex k is an
    exemplar when a(k,k) + r(k,k) > 0. The run stops once a non-empty
    exemplar set has stayed the same for ``stable_window`` iterations.
    """
    if not 0 <= damping < 1:
        raise ValueError("damping must lie in [0, 1)")
    n = g.n
    if n == 0:
        return APResult(np.empty(0, dtype=np.intp), np.empty(0, dtype=np.intp), True, 0)

    # edge list with self loops, sorted by row then column
    rows = np.concatenate([g.rows, np.arange(n)])
    cols = np.concatenate([g.cols, np.arange(n)])
    s = np.concatenate([g.s, g.preference])
    order = np.lexsort((cols, rows))
    rows, cols, s = rows[order], cols[order], s[order]
    starts = np.searchsorted(rows, np.arange(n))
    diag = np.flatnonzero(rows == cols)  # one per vertex, in vertex order
    off = rows != cols
    isolated = np.bincount(rows[off], minlength=n) == 0

    r = np.zeros_like(s)
    a = np.zeros_like(s)
    prev = None
    stable = 0
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        v = a + s
        first = np.maximum.reduceat(v, starts)
        arg = np.flatnonzero(v == first[rows])
        # first hit per row (lowest column among ties)
        arg = arg[np.unique(rows[arg], return_index=True)[1]]
        v2 = v.copy()
        v2[arg] = -np.inf
        second = np.maximum.reduceat(v2, starts)
        best_other = first[rows]
        best_other[arg] = second[rows[arg]]
        r_new = s - best_other
        r_new[diag[isolated]] = 0.0
        r = damping * r + (1 - damping) * r_new

        rp = np.where(off, np.maximum(r, 0.0), 0.0)
        colsum = np.bincount(cols, weights=rp, minlength=n)
        a_new = np.minimum(0.0, r[diag][cols] + colsum[cols] - rp)
        a_new[diag] = colsum
        a = damping * a + (1 - damping) * a_new

        ex = (a[diag] + r[diag] > 0) | isolated
        if prev is not None and np.array_equal(ex, prev):
            stable += 1
        else:
            stable = 1
        prev = ex
        if stable >= stable_window and ex.any():
            converged = True
            break

    evidence = a[diag] + r[diag]
    exemplar = prev.copy()
    labels = _assign(g, exemplar, evidence)
    return APResult(np.flatnonzero(labels == np.arange(n)), labels, converged, it)


def _assign(g: SimilarityGraph, exemplar: np.ndarray, evidence: np.ndarray) -> np.ndarray:
    n = g.n
    exemplar = exemplar.copy()
    ncomp, comp = connected_components(g.adjacency(), directed=False)
    for c in range(ncomp):
        members = np.flatnonzero(comp == c)
        if not exemplar[members].any():
            # no positive evidence in this component: elect its strongest vertex
            exemplar[members[np.argmax(evidence[members])]] = True

    labels = np.full(n, -1, dtype=np.intp)
    labels[exemplar] = np.flatnonzero(exemplar)
    cand = exemplar[g.cols] & ~exemplar[g.rows]
    r, c, s = g.rows[cand], g.cols[cand], g.s[cand]
    if r.size:
        # best similarity per row, lowest exemplar index on ties
        order = np.lexsort((c, -s, r))
        r, c = r[order], c[order]
        first = np.unique(r, return_index=True)[1]
        labels[r[first]] = c[first]
    orphans = labels < 0
    labels[orphans] = np.flatnonzero(orphans)
    return labels


@dataclass
class ClusterResult:
    labels: np.ndarray  # final cluster id per vertex, 0 = discarded
    exemplars: np.ndarray  # stage-1 exemplars
    instances: list = field(default_factory=list)  # (params, member indices)
    stage1_cluster_count: int = 0
    converged: bool = True


def _groups(labels: np.ndarray) -> list[np.ndarray]:
    uniq, inv = np.unique(labels, return_inverse=True)
    return [np.flatnonzero(inv == j) for j in range(uniq.size)]


def _merge_pass(groups, prefs, preference, min_overlap, damping, max_iters, stable_window):
    means = np.vstack([np.asarray(prefs[m].mean(axis=0)).ravel() for m in groups])
    S = tanimoto_matrix(means)
    n = len(groups)
    rows, cols = np.nonzero((S + 1.0 >= min_overlap) & ~np.eye(n, dtype=bool))
    s = S[rows, cols]
    pref = median_preference(s) if preference is None else preference
    # symmetric pairs tie exactly under AP; favour lower indices by a hair
    pref = pref - TIE_BREAK * (1.0 + abs(pref)) * np.arange(n) / n
    g = SimilarityGraph(n, rows, cols, s, pref)
    res = sparse_affinity_propagation(g, damping, max_iters, stable_window)
    merged = [np.sort(np.concatenate([groups[j] for j in np.flatnonzero(res.labels == ex)]))
              for ex in np.unique(res.labels)]
    return merged, res.converged


def _merge_groups(groups, prefs, preference, min_overlap, damping, max_iters, stable_window):
    """Repeat cluster-level AP passes until the cluster count stops shrinking."""
    converged = True
    while len(groups) > 1:
        merged, ok = _merge_pass(groups, prefs, preference, min_overlap, damping, max_iters, stable_window)
        converged &= ok
        if len(merged) == len(groups):
            break
        groups = merged
    return groups, converged


def refine_clusters(stage1: APResult, prefs, points, kind: ModelKind, damping: float = 0.9,
                    max_iters: int = 1000, stable_window: int = 50, merge: bool = True,
                    preference: float | None = None, min_overlap: float = MIN_OVERLAP) -> ClusterResult:
    """Drop small stage-1 clusters, merge the rest by cluster-level AP, refit each cluster.

    ``prefs`` and ``points`` are indexed like the stage-1 vertices. With
    ``merge=False`` the surviving stage-1 clusters are reported as they are.
    Merging repeats until the cluster count stops shrinking. Each pass links
    clusters whose mean preference vectors overlap by at least
    ``min_overlap`` (Tanimoto ratio, i.e. similarity + 1); ``preference`` is
    the self-similarity, None for the median similarity of the pass.
    """
    kind = ModelKind.parse(kind)
    n = stage1.labels.size
    if n == 0:
        raise NoClusters("nothing to refine")
    data = points.data if isinstance(points, PointSet) else np.asarray(points, dtype=float)
    groups = [m for m in _groups(stage1.labels) if m.size >= kind.minimal_size]
    if not groups:
        raise NoClusters("every stage-1 cluster is smaller than a minimal subset")

    converged = stage1.converged
    if merge:
        groups, ok = _merge_groups(groups, prefs, preference, min_overlap, damping, max_iters, stable_window)
        converged &= ok

    groups.sort(key=lambda m: m[0])
    labels = np.zeros(n, dtype=int)
    instances = []
    for members in groups:
        try:
            params = refit(kind, data[members])
        except DegenerateSubset:
            log.warning("dropping a degenerate cluster of %d members", members.size)
            continue
        instances.append((params, members))
        labels[members] = len(instances)
    if not instances:
        raise NoClusters("every cluster was degenerate")
    n_sig = sum(1 for m in _groups(stage1.labels) if m.size >= kind.minimal_size)
    return ClusterResult(labels, stage1.exemplars, instances, n_sig, converged)
