"""Misclassification error under the best structure-label matching."""
from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..errors import LengthMismatch


def confusion(pred, gt) -> np.ndarray:
    """Counts C[p, g] of points with predicted label p and true label g."""
    pred = np.asarray(pred, dtype=int).ravel()
    gt = np.asarray(gt, dtype=int).ravel()
    if pred.shape != gt.shape:
        raise LengthMismatch(f"{pred.size} predicted labels for {gt.size} points")
    if pred.size and (pred.min() < 0 or gt.min() < 0):
        raise ValueError("labels must be non-negative")
    C = np.zeros((pred.max(initial=0) + 1, gt.max(initial=0) + 1), dtype=np.int64)
    np.add.at(C, (pred, gt), 1)
    return C


def misclassification_error(pred, gt) -> float:
    """Percentage of points misassigned under the optimal one-to-one label matching.

    The outlier label 0 is matched only to 0; structure labels are matched by
    the assignment solver on the remaining block of the confusion matrix.
    """
    C = confusion(pred, gt)
    n = C.sum()
    if n == 0:
        return 0.0
    correct = C[0, 0]
    block = C[1:, 1:]
    if block.size:
        r, c = linear_sum_assignment(block, maximize=True)
        correct += block[r, c].sum()
    return 100.0 * (1.0 - correct / n)
