"""Reproduction metrics: velocity error, direction error, time-warped distance."""

from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist

from .errors import UsageError
from .lpvds import LpvDsModel, evaluate
from .mixture import Demonstration


def rmse(model: LpvDsModel, demo: Demonstration) -> float:
    """Mean norm of the velocity prediction error over all reference samples.

    Kept as a mean of norms (no squaring) to match the benchmark convention
    this metric is usually reported with, despite the name.
    """
    pred = evaluate(model, demo.positions)
    return float(np.mean(np.linalg.norm(demo.velocities - pred, axis=1)))


def edot(model: LpvDsModel, demo: Demonstration) -> float:
    """Mean |1 - cos angle| between predicted and reference velocities, in [0, 2].

    Zero-velocity reference samples are skipped; zero-norm predictions count
    the angle-free expected value 1.
    """
    ref = demo.velocities
    ref_norm = np.linalg.norm(ref, axis=1)
    mask = ref_norm > 0
    if not np.any(mask):
        raise UsageError("all reference velocities are zero")
    pred = evaluate(model, demo.positions[mask])
    pred_norm = np.linalg.norm(pred, axis=1)
    dots = np.sum(pred * ref[mask], axis=1)
    ok = pred_norm > 0
    vals = np.ones(int(mask.sum()))
    vals[ok] = np.abs(1.0 - dots[ok] / (pred_norm[ok] * ref_norm[mask][ok]))
    return float(np.mean(vals))


def dtwd(series_a, series_b) -> float:
    """Dynamic-time-warping distance with Euclidean point costs.

    Classic boundary-anchored alignment over steps (1,0), (0,1), (1,1) with
    no window. The inner minimum over same-row predecessors is folded into a
    running-minimum scan, so each row is a vectorized pass.
    """
    a = np.atleast_2d(np.asarray(series_a, dtype=float))
    b = np.atleast_2d(np.asarray(series_b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise UsageError("series must be nonempty")
    if a.shape[1] != b.shape[1]:
        raise UsageError(f"series dimensions differ: {a.shape[1]} vs {b.shape[1]}")
    cost = cdist(a, b)
    prev = np.cumsum(cost[0])
    for i in range(1, a.shape[0]):
        c = cost[i]
        m = np.minimum(prev, np.concatenate(([prev[0]], prev[:-1])))
        # row[j] = min_{p <= j} (m[p] + c[p] + ... + c[j]) via a cumulative min
        csum = np.cumsum(c)
        shifted = np.concatenate(([0.0], csum[:-1]))
        prev = csum + np.minimum.accumulate(m - shifted)
    return float(prev[-1])
