"""Shared data builders for the tests."""
import numpy as np
from hrmp.geometry import ModelKind, PointSet


def two_view(rng, n, noise=0.0):
    """Correspondences of random 3D points seen by two cameras, plus the true F."""
    X = np.column_stack([rng.uniform(-1, 1, n), rng.uniform(-1, 1, n), rng.uniform(4, 8, n)])
    K = np.array([[500.0, 0, 320], [0, 500.0, 240], [0, 0, 1]])
    a = 0.2
    R = np.array([[np.cos(a), 0, np.sin(a)], [0, 1, 0], [-np.sin(a), 0, np.cos(a)]])
    t = np.array([1.0, 0.2, 0.1])
    x1 = (K @ X.T).T
    x2 = (K @ (R @ X.T + t[:, None])).T
    x1 = x1[:, :2] / x1[:, 2:]
    x2 = x2[:, :2] / x2[:, 2:]
    if noise:
        x2 = x2 + rng.normal(0, noise, x2.shape)
    tx = np.array([[0, -t[2], t[1]], [t[2], 0, -t[0]], [-t[1], t[0], 0]])
    Kinv = np.linalg.inv(K)
    F = Kinv.T @ tx @ R @ Kinv
    return np.column_stack([x1, x2]), F / np.linalg.norm(F)


def line_points(n, params=(0.6, -0.8, 0.1), span=(-1, 1), rng=None, noise=0.0):
    a, b, c = params
    t = np.linspace(*span, n)
    base = np.column_stack([-c * a - b * t, -c * b + a * t])
    if noise and rng is not None:
        base = base + rng.normal(0, noise, n)[:, None] * np.array([a, b])
    return base


def planar(data, labels=None):
    return PointSet("planar-point", data, labels)


LINE = ModelKind.LINE2D
CIRCLE = ModelKind.CIRCLE2D
HOMOGRAPHY = ModelKind.HOMOGRAPHY
FUNDAMENTAL = ModelKind.FUNDAMENTAL
