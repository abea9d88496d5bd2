"""Two-layer hypothesis/point representation, message propagation and layer pruning."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import logsumexp

from .errors import AllZeroWeights, DegenerateInput, EmptyGraph, EmptyResult
from .geometry import PointSet, residual_matrix
from .hypothesis import HypothesisSet

CUTOFF = 2.5


def edge_weight(r, sigma):
    """exp(-r / sigma) inside the 2.5 sigma band, 0 outside."""
    r = np.asarray(r, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        raise ValueError("sigma must be positive")
    w = np.where(r <= CUTOFF * sigma, np.exp(-r / sigma), 0.0)
    return w if w.ndim else float(w)


@dataclass
class HierarchicalRepresentation:
    """Sparse N x M edge weights between the point layer and the hypothesis layer.

    ``weights`` and ``residuals`` share one CSC sparsity pattern: the stored
    entries are exactly the edges, and ``residuals.data[j]`` is the residual
    behind ``weights.data[j]``.
    """

    weights: sp.csc_matrix
    residuals: sp.csc_matrix
    hypotheses: HypothesisSet
    point_count: int

    @property
    def shape(self):
        return self.weights.shape

    def dense(self) -> np.ndarray:
        return self.weights.toarray()


def build_representation(points: PointSet | np.ndarray, hypotheses, residuals=None) -> HierarchicalRepresentation:
    hyps = HypothesisSet.from_list(hypotheses)
    if len(hyps) == 0:
        raise ValueError("need at least one hypothesis")
    data = points.data if isinstance(points, PointSet) else np.asarray(points, dtype=float)
    if residuals is None:
        residuals = hyps.residuals
    if residuals is None or residuals.shape != (data.shape[0], len(hyps)):
        residuals = residual_matrix(hyps.kind, hyps.params, data)
    sigma = hyps.scales
    live = sigma > 0
    mask = (residuals <= CUTOFF * np.where(live, sigma, 0.0)) & live
    # nonzero on the transpose walks column-major, which is CSC order
    cols, rows = np.nonzero(mask.T)
    r = residuals[rows, cols]
    w = np.exp(-r / sigma[cols])
    indptr = np.zeros(len(hyps) + 1, dtype=np.int64)
    np.cumsum(np.bincount(cols, minlength=len(hyps)), out=indptr[1:])
    shape = (data.shape[0], len(hyps))
    W = sp.csc_matrix((w, rows, indptr), shape=shape)
    Rs = sp.csc_matrix((r, rows.copy(), indptr.copy()), shape=shape)
    return HierarchicalRepresentation(W, Rs, hyps, data.shape[0])


@dataclass
class MessageState:
    point_score: np.ndarray
    hyp_score: np.ndarray
    iterations_run: int


def propagate(rep: HierarchicalRepresentation, iterations: int = 3, state: MessageState | None = None) -> MessageState:
    """Alternate point and hypothesis score updates over the weighted edges.

    Each round computes ``d = W h`` then ``h = W^T d`` and max-normalizes both.
    Passing ``state`` continues from an earlier run.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    W = rep.weights
    if W.nnz == 0 or not np.any(W.data):
        raise EmptyGraph("every edge weight is zero")
    n, m = W.shape
    if state is None:
        h = np.full(m, 1.0 / m)
        d = np.zeros(n)
        done = 0
    else:
        h, d, done = state.hyp_score.copy(), state.point_score.copy(), state.iterations_run
    Wt = W.T.tocsr()
    for _ in range(iterations):
        d = W @ h
        h = Wt @ d
        d = d / d.max()
        h = h / h.max()
    return MessageState(d, h, done + iterations)


# relative spread below which point weights count as identical; noise-free
# structures leave ~1e-7 rounding ripple once residuals are divided by the scale floor
IDENTICAL_RTOL = 1e-6


def bandwidth_factor(n: int) -> float:
    """Epanechnikov plug-in bandwidth, in units of the inlier scale."""
    return (243.0 / (35.0 * n)) ** 0.2


def hypothesis_weights(rep: HierarchicalRepresentation) -> np.ndarray:
    """Kernel density of each hypothesis' residuals at zero, divided by its scale."""
    n, m = rep.shape
    sigma = rep.hypotheses.scales
    R = rep.residuals
    cols = np.repeat(np.arange(m), np.diff(R.indptr))
    b = sigma * bandwidth_factor(n)
    out = np.zeros(m)
    if R.nnz == 0:
        return out
    u = R.data / b[cols]
    k = np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u**2), 0.0)
    np.add.at(out, cols, k)
    live = sigma > 0
    out[live] /= n * sigma[live] * b[live]
    out[~live] = 0.0
    return out


def prune_hypotheses(weights, rtol: float = 1e-12) -> np.ndarray:
    """Keep hypotheses whose normalized weight is at least 2**-entropy."""
    w = np.asarray(weights, dtype=float)
    total = w.sum()
    if not total > 0:
        raise AllZeroWeights("every hypothesis weight is zero")
    p = w / total
    nz = p > 0
    entropy = -np.sum(p[nz] * np.log2(p[nz]))
    return np.flatnonzero(p >= 2.0 ** (-entropy) * (1.0 - rtol))


def point_weights(rep: HierarchicalRepresentation, msg: MessageState, columns=None) -> np.ndarray:
    """Per-point sum of hypothesis-score-weighted edge weights.

    ``columns`` restricts the sum to a subset of hypotheses (the survivors of
    hypothesis pruning).
    """
    h = msg.hyp_score
    if columns is not None:
        mask = np.zeros_like(h)
        mask[np.asarray(columns, dtype=int)] = 1.0
        h = h * mask
    return np.asarray(rep.weights @ h).ravel()


@dataclass
class GMMFit:
    weights: np.ndarray  # alpha_1, alpha_2
    means: np.ndarray  # ascending
    stds: np.ndarray
    threshold: float
    loglik: list = field(default_factory=list)

    @property
    def n_iter(self) -> int:
        return len(self.loglik)


def _log_normal(x, mu, var):
    return -0.5 * (np.log(2 * np.pi * var) + (x - mu) ** 2 / var)


def fit_gmm_1d(values, max_iters: int = 200, tol: float = 1e-8, var_floor: float = 1e-12) -> GMMFit:
    """Two-component 1-D Gaussian mixture by EM; threshold is the midpoint of the means.

    Initialization splits the sorted values at the median.
    """
    x = np.sort(np.asarray(values, dtype=float).ravel())
    n = x.size
    if n < 4:
        raise DegenerateInput("need at least 4 values for a two-component fit")
    if np.ptp(x) <= max(1e-12, IDENTICAL_RTOL * np.abs(x).max()):
        raise DegenerateInput("all values identical")
    half = n // 2
    lo, hi = x[:half], x[half:]
    alpha = np.array([lo.size, hi.size], dtype=float) / n
    mu = np.array([lo.mean(), hi.mean()])
    var = np.maximum(np.array([lo.var(), hi.var()]), var_floor)

    history = []
    for _ in range(max_iters):
        logp = np.log(alpha)[None, :] + _log_normal(x[:, None], mu[None, :], var[None, :])
        norm = logsumexp(logp, axis=1)
        ll = float(norm.sum())
        if history and ll - history[-1] < tol:
            history.append(ll)
            break
        history.append(ll)
        resp = np.exp(logp - norm[:, None])
        nk = resp.sum(axis=0)
        if np.any(nk <= 0):
            break
        alpha = nk / n
        mu = (resp * x[:, None]).sum(axis=0) / nk
        var = np.maximum((resp * (x[:, None] - mu) ** 2).sum(axis=0) / nk, var_floor)

    order = np.argsort(mu)
    alpha, mu, var = alpha[order], mu[order], var[order]
    return GMMFit(alpha, mu, np.sqrt(var), float(0.5 * (mu[0] + mu[1])), history)


def prune_points(weights, threshold: float) -> np.ndarray:
    idx = np.flatnonzero(np.asarray(weights, dtype=float) >= threshold)
    if idx.size == 0:
        raise EmptyResult("no point reaches the inlier threshold")
    return idx


@dataclass
class PruneResult:
    kept_hypotheses: np.ndarray
    kept_points: np.ndarray
    point_weights: np.ndarray
    hyp_weights: np.ndarray
    gmm: GMMFit | None
    threshold: float


def prune_layers(rep: HierarchicalRepresentation, msg: MessageState) -> PruneResult:
    """Entropy-prune the hypothesis layer, then GMM-gate the point layer."""
    wh = hypothesis_weights(rep)
    kept_h = prune_hypotheses(wh)
    wd = point_weights(rep, msg, columns=kept_h)
    try:
        gmm = fit_gmm_1d(wd)
        phi = gmm.threshold
    except DegenerateInput:
        # no two populations to separate: keep every point
        gmm, phi = None, float(wd.min())
    kept_d = prune_points(wd, phi)
    return PruneResult(kept_h, kept_d, wd, wh, gmm, phi)
