"""Synthetic multi-structure datasets with ground-truth labels."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import ModelKind, PointSet


@dataclass
class Structure:
    """One ground-truth model instance.

    ``support`` restricts where inliers are drawn: two endpoints for a line
    segment, an (xmin, ymin, xmax, ymax) source box for homographies and
    fundamental matrices, ignored for circles (full circumference).
    """

    params: np.ndarray
    inliers: int
    noise: float = 0.0
    support: tuple | None = None

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=float)


@dataclass
class SyntheticSpec:
    kind: ModelKind
    structures: list
    gross_outliers: int = 0
    region: tuple = (0.0, 0.0, 1.0, 1.0)
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        self.kind = ModelKind.parse(self.kind)
        self.structures = [s if isinstance(s, Structure) else Structure(**s) for s in self.structures]
        for s in self.structures:
            if s.inliers < self.kind.minimal_size:
                raise ValueError("every structure needs at least a minimal subset of inliers")
            if s.noise < 0:
                raise ValueError("noise std must be non-negative")
        if self.gross_outliers < 0:
            raise ValueError("gross_outliers must be non-negative")

    @property
    def total(self) -> int:
        return self.gross_outliers + sum(s.inliers for s in self.structures)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "structures": [
                {
                    "params": s.params.tolist(),
                    "inliers": s.inliers,
                    "noise": s.noise,
                    "support": None if s.support is None else np.asarray(s.support, dtype=float).tolist(),
                }
                for s in self.structures
            ],
            "gross_outliers": self.gross_outliers,
            "region": list(self.region),
            "seed": self.seed,
            "name": self.name,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        structures = []
        for s in d["structures"]:
            sup = s.get("support")
            if sup is not None:
                sup = np.asarray(sup, dtype=float)
                sup = tuple(map(tuple, sup)) if sup.ndim == 2 else tuple(sup)
            structures.append(Structure(s["params"], int(s["inliers"]), float(s.get("noise", 0.0)), sup))
        return cls(
            d["kind"],
            structures,
            int(d.get("gross_outliers", 0)),
            tuple(d.get("region", (0.0, 0.0, 1.0, 1.0))),
            int(d.get("seed", 0)),
            d.get("name", ""),
        )


def outlier_rates(labels: np.ndarray) -> tuple[float, float]:
    """(outlier rate, gross outlier rate) in percent.

    The outlier rate is taken with respect to the smallest structure: every
    point outside it counts as an outlier for it.
    """
    n = labels.size
    sizes = np.bincount(labels)[1:]
    sizes = sizes[sizes > 0]
    smallest = sizes.min() if sizes.size else 0
    return float(100.0 * (n - smallest) / n), float(100.0 * np.sum(labels == 0) / n)


def _line_points(rng, s: Structure, region, n):
    a, b, c = s.params / np.hypot(*s.params[:2])
    normal = np.array([a, b])
    direction = np.array([-b, a])
    if s.support is not None:
        p0, p1 = np.asarray(s.support, dtype=float)
    else:
        foot = -c * normal
        p0, p1 = _clip_line(foot, direction, region)
    t = rng.uniform(0.0, 1.0, n)
    base = p0 + t[:, None] * (p1 - p0)
    # project onto the exact line so the noise is purely perpendicular
    base = base - (base @ normal + c)[:, None] * normal
    return base + rng.normal(0.0, s.noise, n)[:, None] * normal if s.noise > 0 else base


def _clip_line(point, direction, region):
    xmin, ymin, xmax, ymax = region
    ts = []
    for axis, lo, hi in ((0, xmin, xmax), (1, ymin, ymax)):
        if abs(direction[axis]) > 1e-15:
            ts += [(lo - point[axis]) / direction[axis], (hi - point[axis]) / direction[axis]]
    ts = sorted(ts)
    t0, t1 = ts[1], ts[2]
    return point + t0 * direction, point + t1 * direction


def _circle_points(rng, s: Structure, n):
    cx, cy, r = s.params
    theta = rng.uniform(0.0, 2 * np.pi, n)
    rad = r + (rng.normal(0.0, s.noise, n) if s.noise > 0 else 0.0)
    return np.column_stack([cx + rad * np.cos(theta), cy + rad * np.sin(theta)])


def _box(rng, box, n):
    xmin, ymin, xmax, ymax = box
    return np.column_stack([rng.uniform(xmin, xmax, n), rng.uniform(ymin, ymax, n)])


def _homography_points(rng, s: Structure, region, n):
    H = s.params.reshape(3, 3)
    src = _box(rng, s.support if s.support is not None else region, n)
    proj = np.column_stack([src, np.ones(n)]) @ H.T
    dst = proj[:, :2] / proj[:, 2:]
    if s.noise > 0:
        dst = dst + rng.normal(0.0, s.noise, (n, 2))
    return np.column_stack([src, dst])


def _fundamental_points(rng, s: Structure, region, n):
    F = s.params.reshape(3, 3)
    src = _box(rng, s.support if s.support is not None else region, n)
    lines = np.column_stack([src, np.ones(n)]) @ F.T
    lines /= np.hypot(lines[:, 0], lines[:, 1])[:, None]
    guess = _box(rng, region, n)
    off = (guess * lines[:, :2]).sum(axis=1) + lines[:, 2]
    dst = guess - off[:, None] * lines[:, :2]
    if s.noise > 0:
        dst = dst + rng.normal(0.0, s.noise, n)[:, None] * lines[:, :2]
    return np.column_stack([src, dst])


def generate_synthetic(spec: SyntheticSpec) -> PointSet:
    rng = np.random.default_rng(spec.seed)
    kind = spec.kind
    chunks, labels = [], []
    for k, s in enumerate(spec.structures, start=1):
        if kind is ModelKind.LINE2D:
            pts = _line_points(rng, s, spec.region, s.inliers)
        elif kind is ModelKind.CIRCLE2D:
            pts = _circle_points(rng, s, s.inliers)
        elif kind is ModelKind.HOMOGRAPHY:
            pts = _homography_points(rng, s, spec.region, s.inliers)
        else:
            pts = _fundamental_points(rng, s, spec.region, s.inliers)
        chunks.append(pts)
        labels.append(np.full(s.inliers, k))
    g = spec.gross_outliers
    if kind.observation_dim == 2:
        chunks.append(_box(rng, spec.region, g))
    else:
        chunks.append(np.column_stack([_box(rng, spec.region, g), _box(rng, spec.region, g)]))
    labels.append(np.zeros(g, dtype=int))
    data = np.vstack(chunks)
    lab = np.concatenate(labels).astype(int)
    rate, gross = outlier_rates(lab)
    meta = {"name": spec.name, "seed": spec.seed, "outlier_rate": rate, "gross_outlier_rate": gross}
    return PointSet(kind.observation_kind, data, lab, meta)


# ---------------------------------------------------------------------------
# presets mirroring the synthetic line/circle/homography experiments


def _line_through(p, q):
    p, q = np.asarray(p, float), np.asarray(q, float)
    d = q - p
    n = np.array([-d[1], d[0]]) / np.hypot(*d)
    return np.append(n, -n @ p)


def three_lines(seed: int = 0, noise: float = 0.002) -> SyntheticSpec:
    """3 equal-length segments, 75 inliers each, 250 gross outliers: 84.21% / 52.63%."""
    segs = [((0.1, 0.15), (0.9, 0.25)), ((0.15, 0.9), (0.55, 0.2)), ((0.2, 0.55), (0.95, 0.85))]
    structures = [Structure(_line_through(p, q), 75, noise, (p, q)) for p, q in segs]
    return SyntheticSpec(ModelKind.LINE2D, structures, 250, (0.0, 0.0, 1.0, 1.0), seed, "3 lines")


def four_circles(seed: int = 0, noise: float = 0.002) -> SyntheticSpec:
    """4 equal circles with 77/80/80/80 inliers and 183 gross outliers: 84.60% / 36.60%."""
    circles = [(0.27, 0.27, 0.17), (0.73, 0.27, 0.17), (0.27, 0.73, 0.17), (0.73, 0.73, 0.17)]
    counts = [77, 80, 80, 80]
    structures = [Structure(c, n, noise) for c, n in zip(circles, counts)]
    return SyntheticSpec(ModelKind.CIRCLE2D, structures, 183, (0.0, 0.0, 1.0, 1.0), seed, "4 circles")


def _homography_from_corners(src, dst) -> np.ndarray:
    from ..geometry import minimal_solve

    return minimal_solve(ModelKind.HOMOGRAPHY, np.column_stack([src, dst]))


def two_planes(seed: int = 0, noise: float = 0.5, inliers: int = 140, gross: int = 120) -> SyntheticSpec:
    """Two planar regions each mapped by a homography given by 4 corner correspondences.

    Pixel units in a 640 x 480 frame; default counts give 30% gross outliers.
    """
    w, h = 640.0, 480.0
    left = (40.0, 60.0, 300.0, 420.0)
    right = (340.0, 60.0, 600.0, 420.0)

    def corners(box):
        x0, y0, x1, y1 = box
        return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])

    H1 = _homography_from_corners(corners(left), corners(left) + [[20, 10], [35, 5], [30, 25], [15, 30]])
    H2 = _homography_from_corners(corners(right), corners(right) + [[-30, 20], [-10, -15], [-25, 10], [-45, 25]])
    structures = [Structure(H1, inliers, noise, left), Structure(H2, inliers, noise, right)]
    return SyntheticSpec(ModelKind.HOMOGRAPHY, structures, gross, (0.0, 0.0, w, h), seed, "2 planes")


PRESETS = {"three_lines": three_lines, "four_circles": four_circles, "two_planes": two_planes}
