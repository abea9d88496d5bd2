"""Model kinds, minimal solvers, residuals and least-squares refitting.

Parameter conventions
---------------------
line2d       (a, b, c) with a**2 + b**2 == 1, sign fixed so that a > 0 (or b > 0 when a == 0)
circle2d     (cx, cy, r) with r > 0
homography   row-major 3x3, unit Frobenius norm, largest-magnitude entry positive
fundamental  row-major 3x3, unit Frobenius norm, rank 2, largest-magnitude entry positive

Observations are rows of an ``(N, 2)`` array for planar points and of an
``(N, 4)`` array ``(x, y, x', y')`` for correspondences.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .errors import DegenerateSubset

# smallest/largest singular value ratio below which a design matrix is rank deficient
DEGENERACY_RTOL = 1e-10

PLANAR = "planar-point"
CORRESPONDENCE = "correspondence"
OBSERVATION_DIMS = {PLANAR: 2, CORRESPONDENCE: 4}


class ModelKind(enum.Enum):
    LINE2D = "line2d"
    CIRCLE2D = "circle2d"
    HOMOGRAPHY = "homography"
    FUNDAMENTAL = "fundamental"

    @property
    def minimal_size(self) -> int:
        return _MINIMAL_SIZE[self]

    @property
    def param_size(self) -> int:
        return 3 if self in (ModelKind.LINE2D, ModelKind.CIRCLE2D) else 9

    @property
    def observation_kind(self) -> str:
        return PLANAR if self in (ModelKind.LINE2D, ModelKind.CIRCLE2D) else CORRESPONDENCE

    @property
    def observation_dim(self) -> int:
        return OBSERVATION_DIMS[self.observation_kind]

    @classmethod
    def parse(cls, value) -> "ModelKind":
        if isinstance(value, cls):
            return value
        return cls(str(value).lower())


_MINIMAL_SIZE = {
    ModelKind.LINE2D: 2,
    ModelKind.CIRCLE2D: 3,
    ModelKind.HOMOGRAPHY: 4,
    ModelKind.FUNDAMENTAL: 8,
}


@dataclass(eq=False)
class PointSet:
    """N observations with optional ground-truth labels (0 = gross outlier)."""

    kind: str
    data: np.ndarray
    labels: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in OBSERVATION_DIMS:
            raise ValueError(f"unknown observation kind {self.kind!r}")
        self.data = np.asarray(self.data, dtype=float)
        dim = OBSERVATION_DIMS[self.kind]
        if self.data.ndim != 2 or self.data.shape[1] != dim:
            raise ValueError(f"{self.kind} data must have shape (N, {dim}), got {self.data.shape}")
        if self.data.shape[0] < 1:
            raise ValueError("a point set needs at least one observation")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=int)
            if self.labels.shape != (self.data.shape[0],):
                raise ValueError("labels must have exactly one entry per observation")
            if np.any(self.labels < 0):
                raise ValueError("labels must be non-negative")

    def __len__(self):
        return self.data.shape[0]

    def __eq__(self, other):
        if not isinstance(other, PointSet):
            return NotImplemented
        if self.kind != other.kind or not np.array_equal(self.data, other.data):
            return False
        if (self.labels is None) != (other.labels is None):
            return False
        return self.labels is None or np.array_equal(self.labels, other.labels)


@dataclass
class ModelHypothesis:
    kind: ModelKind
    params: np.ndarray
    scale: float = 0.0


def check_observations(kind: ModelKind, data) -> np.ndarray:
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if data.shape[1] != kind.observation_dim:
        raise ValueError(f"{kind.value} expects {kind.observation_dim}-d observations, got {data.shape[1]}")
    return data


# ---------------------------------------------------------------------------
# normalization helpers


def _canonical_sign(params: np.ndarray) -> np.ndarray:
    """Flip rows of ``params`` so that their largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(params), axis=-1)
    lead = np.take_along_axis(params, idx[..., None], axis=-1)
    return params * np.where(lead < 0, -1.0, 1.0)


def _normalize_line(params: np.ndarray) -> np.ndarray:
    params = params / np.linalg.norm(params[..., :2], axis=-1, keepdims=True)
    a, b = params[..., 0], params[..., 1]
    flip = (a < 0) | ((a == 0) & (b < 0))
    return params * np.where(flip, -1.0, 1.0)[..., None]


def _normalize_matrix(params: np.ndarray) -> np.ndarray:
    params = params / np.linalg.norm(params, axis=-1, keepdims=True)
    return _canonical_sign(params)


def hartley_transform(pts: np.ndarray) -> np.ndarray:
    """Similarity taking the (..., n, 2) points to zero mean and mean distance sqrt(2).

    Returns the (..., 3, 3) transforms.
    """
    centroid = pts.mean(axis=-2)
    dist = np.linalg.norm(pts - centroid[..., None, :], axis=-1).mean(axis=-1)
    s = np.sqrt(2.0) / np.where(dist > 0, dist, 1.0)
    T = np.zeros(pts.shape[:-2] + (3, 3))
    T[..., 0, 0] = s
    T[..., 1, 1] = s
    T[..., 0, 2] = -s * centroid[..., 0]
    T[..., 1, 2] = -s * centroid[..., 1]
    T[..., 2, 2] = 1.0
    return T


def _apply(T: np.ndarray, pts: np.ndarray) -> np.ndarray:
    return pts @ np.swapaxes(T[..., :2, :2], -1, -2) + T[..., None, :2, 2]


def _rank_deficient(A: np.ndarray, rank: int) -> np.ndarray:
    """True where the ``rank``-th singular value of each design matrix is negligible."""
    sv = np.linalg.svd(A, compute_uv=False)
    return sv[..., rank - 1] < DEGENERACY_RTOL * sv[..., 0]


def _dlt_homography_design(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    x, y = src[..., 0], src[..., 1]
    u, v = dst[..., 0], dst[..., 1]
    zero = np.zeros_like(x)
    one = np.ones_like(x)
    r1 = np.stack([-x, -y, -one, zero, zero, zero, u * x, u * y, u], axis=-1)
    r2 = np.stack([zero, zero, zero, -x, -y, -one, v * x, v * y, v], axis=-1)
    A = np.stack([r1, r2], axis=-2)
    return A.reshape(src.shape[:-2] + (2 * src.shape[-2], 9))


def _eight_point_design(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    x, y = src[..., 0], src[..., 1]
    u, v = dst[..., 0], dst[..., 1]
    return np.stack([u * x, u * y, u, v * x, v * y, v, x, y, np.ones_like(x)], axis=-1)


def _null_vector(A: np.ndarray) -> np.ndarray:
    # full_matrices keeps Vt square when A has fewer rows than columns
    _, _, Vt = np.linalg.svd(A, full_matrices=True)
    return Vt[..., -1, :]


def _collinear_triples(pts: np.ndarray) -> np.ndarray:
    """Per subset, whether some triple of the (..., 4, 2) points is collinear."""
    from itertools import combinations

    span = np.ptp(pts, axis=-2).max(axis=-1)
    out = np.zeros(pts.shape[:-2], dtype=bool)
    for i, j, k in combinations(range(pts.shape[-2]), 3):
        e1 = pts[..., j, :] - pts[..., i, :]
        e2 = pts[..., k, :] - pts[..., i, :]
        area = np.abs(e1[..., 0] * e2[..., 1] - e1[..., 1] * e2[..., 0])
        out |= area <= DEGENERACY_RTOL * span**2
    return out


def _enforce_rank2(F: np.ndarray) -> np.ndarray:
    U, S, Vt = np.linalg.svd(F)
    S = S.copy()
    S[..., 2] = 0.0
    return (U * S[..., None, :]) @ Vt


# ---------------------------------------------------------------------------
# batched solvers


def solve_batch(kind: ModelKind, samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Solve many minimal (or larger) samples at once.

    Parameters
    ----------
    samples : (B, n, d) array of observations

    Returns
    -------
    params : (B, p) normalized parameters (rows for degenerate samples are NaN)
    ok : (B,) bool, False where the sample is degenerate
    """
    samples = np.asarray(samples, dtype=float)
    B = samples.shape[0]
    if kind is ModelKind.LINE2D:
        design = np.concatenate([samples, np.ones(samples.shape[:-1] + (1,))], axis=-1)
        ok = ~_rank_deficient(design, 2)
        p, q = samples[:, 0], samples[:, 1]
        d = q - p
        n = np.stack([-d[:, 1], d[:, 0]], axis=-1)
        params = np.concatenate([n, -(n * p).sum(axis=1, keepdims=True)], axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            params = _normalize_line(params)
    elif kind is ModelKind.CIRCLE2D:
        design = np.concatenate([samples, np.ones(samples.shape[:-1] + (1,))], axis=-1)
        ok = ~_rank_deficient(design, 3)
        # circumcenter relative to the first point keeps cancellation small
        a = samples[:, 0]
        b = samples[:, 1] - a
        c = samples[:, 2] - a
        den = 2.0 * (b[:, 0] * c[:, 1] - b[:, 1] * c[:, 0])
        bb = (b**2).sum(axis=1)
        cc = (c**2).sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            ux = (c[:, 1] * bb - b[:, 1] * cc) / den
            uy = (b[:, 0] * cc - c[:, 0] * bb) / den
        r = np.hypot(ux, uy)
        params = np.stack([ux + a[:, 0], uy + a[:, 1], r], axis=1)
        ok &= np.isfinite(params).all(axis=1) & (r > 0)
    elif kind is ModelKind.HOMOGRAPHY:
        src, dst = samples[..., :2], samples[..., 2:]
        T1, T2 = hartley_transform(src), hartley_transform(dst)
        A = _dlt_homography_design(_apply(T1, src), _apply(T2, dst))
        ok = ~_rank_deficient(A, 8)
        if samples.shape[1] == 4:
            ok &= ~_collinear_triples(src) & ~_collinear_triples(dst)
        Hn = _null_vector(A).reshape(B, 3, 3)
        H = np.linalg.inv(T2) @ Hn @ T1
        params = _normalize_matrix(H.reshape(B, 9))
    elif kind is ModelKind.FUNDAMENTAL:
        src, dst = samples[..., :2], samples[..., 2:]
        T1, T2 = hartley_transform(src), hartley_transform(dst)
        A = _eight_point_design(_apply(T1, src), _apply(T2, dst))
        ok = ~_rank_deficient(A, 8)
        Fn = _enforce_rank2(_null_vector(A).reshape(B, 3, 3))
        F = np.swapaxes(T2, -1, -2) @ Fn @ T1
        F = F / np.linalg.norm(F, axis=(-2, -1), keepdims=True)
        F = _enforce_rank2(F)
        params = _normalize_matrix(F.reshape(B, 9))
    else:  # pragma: no cover
        raise ValueError(kind)
    ok &= np.isfinite(params).all(axis=1)
    params = np.where(ok[:, None], params, np.nan)
    return params, ok


def minimal_solve(kind: ModelKind, subset) -> np.ndarray:
    """Parameters interpolating a minimal subset of observations.

    Raises DegenerateSubset on rank-deficient configurations.
    """
    kind = ModelKind.parse(kind)
    subset = check_observations(kind, subset)
    if subset.shape[0] != kind.minimal_size:
        raise ValueError(f"{kind.value} needs exactly {kind.minimal_size} observations, got {subset.shape[0]}")
    params, ok = solve_batch(kind, subset[None])
    if not ok[0]:
        raise DegenerateSubset(f"degenerate {kind.value} subset")
    return params[0]


# ---------------------------------------------------------------------------
# residuals


def _homogeneous(pts: np.ndarray) -> np.ndarray:
    return np.concatenate([pts, np.ones(pts.shape[:-1] + (1,))], axis=-1)


def _transfer(H: np.ndarray, src_h: np.ndarray, dst: np.ndarray) -> np.ndarray:
    # H (M,3,3), src_h (N,3), dst (N,2) -> squared distance (N,M)
    proj = np.einsum("mij,nj->nmi", H, src_h)
    with np.errstate(invalid="ignore", divide="ignore"):
        xy = proj[..., :2] / proj[..., 2:3]
        d2 = ((xy - dst[:, None, :]) ** 2).sum(axis=-1)
    return np.where(np.isfinite(d2), d2, np.inf)


def _adjugate(H: np.ndarray) -> np.ndarray:
    # proportional to the inverse; scale drops out after dehomogenization
    c = np.empty_like(H)
    c[..., 0, 0] = H[..., 1, 1] * H[..., 2, 2] - H[..., 1, 2] * H[..., 2, 1]
    c[..., 0, 1] = H[..., 0, 2] * H[..., 2, 1] - H[..., 0, 1] * H[..., 2, 2]
    c[..., 0, 2] = H[..., 0, 1] * H[..., 1, 2] - H[..., 0, 2] * H[..., 1, 1]
    c[..., 1, 0] = H[..., 1, 2] * H[..., 2, 0] - H[..., 1, 0] * H[..., 2, 2]
    c[..., 1, 1] = H[..., 0, 0] * H[..., 2, 2] - H[..., 0, 2] * H[..., 2, 0]
    c[..., 1, 2] = H[..., 0, 2] * H[..., 1, 0] - H[..., 0, 0] * H[..., 1, 2]
    c[..., 2, 0] = H[..., 1, 0] * H[..., 2, 1] - H[..., 1, 1] * H[..., 2, 0]
    c[..., 2, 1] = H[..., 0, 1] * H[..., 2, 0] - H[..., 0, 0] * H[..., 2, 1]
    c[..., 2, 2] = H[..., 0, 0] * H[..., 1, 1] - H[..., 0, 1] * H[..., 1, 0]
    return c


def _residual_block(kind: ModelKind, params: np.ndarray, data: np.ndarray) -> np.ndarray:
    if kind is ModelKind.LINE2D:
        return np.abs(data @ params[:, :2].T + params[:, 2])
    if kind is ModelKind.CIRCLE2D:
        dx = data[:, None, 0] - params[None, :, 0]
        dy = data[:, None, 1] - params[None, :, 1]
        return np.abs(np.hypot(dx, dy) - params[None, :, 2])
    src, dst = data[:, :2], data[:, 2:]
    src_h, dst_h = _homogeneous(src), _homogeneous(dst)
    M3 = params.reshape(-1, 3, 3)
    if kind is ModelKind.HOMOGRAPHY:
        fwd = _transfer(M3, src_h, dst)
        bwd = _transfer(_adjugate(M3), dst_h, src)
        return np.sqrt(fwd + bwd)
    # Sampson distance
    Fx = np.einsum("mij,nj->nmi", M3, src_h)
    Ftx = np.einsum("mji,nj->nmi", M3, dst_h)
    num = np.einsum("nmi,ni->nm", Fx, dst_h) ** 2
    den = Fx[..., 0] ** 2 + Fx[..., 1] ** 2 + Ftx[..., 0] ** 2 + Ftx[..., 1] ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        d2 = np.where(den > 0, num / den, np.where(num > 0, np.inf, 0.0))
    return np.sqrt(d2)


def residual_matrix(kind: ModelKind, params, data, chunk: int = 2048) -> np.ndarray:
    """Residuals of every observation against every hypothesis, shape (N, M)."""
    kind = ModelKind.parse(kind)
    params = np.atleast_2d(np.asarray(params, dtype=float))
    data = check_observations(kind, data)
    if params.shape[0] <= chunk:
        return _residual_block(kind, params, data)
    out = np.empty((data.shape[0], params.shape[0]))
    for start in range(0, params.shape[0], chunk):
        out[:, start:start + chunk] = _residual_block(kind, params[start:start + chunk], data)
    return out


def residuals(kind: ModelKind, params, data) -> np.ndarray:
    """Residuals of the observations against one hypothesis, shape (N,)."""
    return residual_matrix(kind, np.asarray(params, dtype=float)[None], data)[:, 0]


def residual(kind: ModelKind, params, x) -> float:
    return float(residuals(kind, params, np.atleast_2d(x))[0])


# ---------------------------------------------------------------------------
# refitting


def _fit_circle(pts: np.ndarray) -> np.ndarray:
    # algebraic (Kasa) start, then geometric refinement of the radial deviations
    A = np.column_stack([pts, np.ones(len(pts))])
    b = (pts**2).sum(axis=1)
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    cx, cy = sol[0] / 2, sol[1] / 2
    r0 = np.sqrt(max(sol[2] + cx**2 + cy**2, 0.0))
    x0 = np.array([cx, cy, r0])

    def fun(p):
        return np.hypot(pts[:, 0] - p[0], pts[:, 1] - p[1]) - p[2]

    if np.max(np.abs(fun(x0))) == 0.0:
        return x0
    res = least_squares(fun, x0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15)
    p = res.x
    p[2] = abs(p[2])
    return p


def refit(kind: ModelKind, inliers) -> np.ndarray:
    """Least-squares parameters over all members of a cluster."""
    kind = ModelKind.parse(kind)
    pts = check_observations(kind, inliers)
    if pts.shape[0] < kind.minimal_size:
        raise DegenerateSubset(f"{kind.value} refit needs at least {kind.minimal_size} observations")
    if kind is ModelKind.LINE2D:
        centroid = pts.mean(axis=0)
        centered = pts - centroid
        _, S, Vt = np.linalg.svd(centered, full_matrices=False)
        if S[0] == 0.0:
            raise DegenerateSubset("line refit on coincident points")
        n = Vt[-1]
        return _normalize_line(np.append(n, -n @ centroid))
    if kind is ModelKind.CIRCLE2D:
        design = np.column_stack([pts, np.ones(len(pts))])
        if _rank_deficient(design, 3):
            raise DegenerateSubset("circle refit on collinear points")
        return _fit_circle(pts)
    params, ok = solve_batch(kind, pts[None])
    if not ok[0]:
        raise DegenerateSubset(f"degenerate {kind.value} refit")
    return params[0]


def is_normalized(kind: ModelKind, params, tol: float = 1e-9) -> bool:
    kind = ModelKind.parse(kind)
    p = np.asarray(params, dtype=float)
    if kind is ModelKind.LINE2D:
        return abs(p[0] ** 2 + p[1] ** 2 - 1) <= tol
    if kind is ModelKind.CIRCLE2D:
        return p[2] > 0
    if abs(np.linalg.norm(p) - 1) > tol:
        return False
    if kind is ModelKind.FUNDAMENTAL:
        return np.linalg.svd(p.reshape(3, 3), compute_uv=False)[-1] <= tol
    return True
