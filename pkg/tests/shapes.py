"""Synthetic demonstration generators shared across the test suite.

All shapes end at their attractor and approach it monotonically in Euclidean
distance, so a field with a negative-definite symmetric part can reproduce
them closely.
"""

from __future__ import annotations

import numpy as np

from dsmix.mixture import Demonstration, ObservationSet


def _demo_from_path(pos: np.ndarray, dt: float, attractor, noise=0.0, seed=0, boundaries=(0,)) -> Demonstration:
    vel = np.gradient(pos, dt, axis=0)
    if noise:
        rng = np.random.default_rng(seed)
        pos = pos + rng.normal(0.0, noise, pos.shape)
    return Demonstration(pos, vel, boundaries, attractor=np.asarray(attractor, float), dt=dt)


def line_demo(n=200, seed=0, noise=0.002) -> Demonstration:
    t = np.linspace(0.0, 1.0, n)
    pos = np.stack([2.0 * (1.0 - t), 1.0 * (1.0 - t)], axis=1)
    return _demo_from_path(pos, 1.0 / n, [0.0, 0.0], noise=noise, seed=seed)


def s_curve_demo(n=300, seed=0, noise=0.004, amp=0.25, freq=2.5) -> Demonstration:
    t = np.linspace(0.0, 1.0, n)
    x = 2.0 * (1.0 - t)
    y = amp * x * np.sin(freq * x)
    pos = np.stack([x, y], axis=1)
    return _demo_from_path(pos, 1.0 / n, [0.0, 0.0], noise=noise, seed=seed)


def multi_behavior_demo(n=200, seed=0, noise=0.003, turns=1.6) -> Demonstration:
    """Two sweeping approaches into the same target from opposite sides.

    Each behavior covers the full heading range, so position clustering sees
    a rotationally smeared annulus with no blob structure, while the motion
    directions segment it into clean arcs."""
    t = np.linspace(0.0, 1.0, n)
    dt = 1.0 / n
    arms, vels = [], []
    for phase in (0.0, np.pi):
        r = 2.0 * (1.0 - t) + 0.001
        th = phase + 2.0 * np.pi * turns * t
        arm = np.stack([r * np.cos(th), r * np.sin(th)], axis=1)
        arms.append(arm)
        vels.append(np.gradient(arm, dt, axis=0))
    rng = np.random.default_rng(seed)
    pos = np.vstack(arms) + rng.normal(0.0, noise, (2 * n, 2))
    return Demonstration(pos, np.vstack(vels), (0, n), attractor=np.zeros(2), dt=dt)


def three_cluster_obs(seed=0, n_per=60):
    """Well-separated position clusters, each with its own motion direction."""
    rng = np.random.default_rng(seed)
    centers = np.array([[0.0, 0.0], [8.0, 0.0], [4.0, 7.0]])
    headings = np.array([0.0, 0.5 * np.pi, np.pi])
    pos, dirs, labels = [], [], []
    for k in range(3):
        pos.append(centers[k] + rng.normal(0.0, 0.5, (n_per, 2)))
        ang = headings[k] + rng.normal(0.0, 0.08, n_per)
        dirs.append(np.stack([np.cos(ang), np.sin(ang)], axis=1))
        labels.extend([k] * n_per)
    return ObservationSet(np.vstack(pos), np.vstack(dirs)), np.array(labels)


def one_blob_obs(seed=0, n=150):
    rng = np.random.default_rng(seed)
    pos = rng.normal(0.0, 1.0, (n, 2))
    ang = 0.5 + rng.normal(0.0, 0.1, n)
    dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    return ObservationSet(pos, dirs)


def reversing_corridor_obs(seed=0, n_per=100):
    """Overlapping positions traversed in opposite directions.

    Position-only clustering sees one elongated blob; the direction-aware
    model has to separate the two passes."""
    rng = np.random.default_rng(seed)
    x1 = np.linspace(-1.0, 1.0, n_per) + rng.normal(0.0, 0.01, n_per)
    x2 = np.linspace(1.0, -1.0, n_per) + rng.normal(0.0, 0.01, n_per)
    y1 = rng.normal(0.0, 0.04, n_per)
    y2 = rng.normal(0.0, 0.04, n_per)
    pos = np.vstack([np.stack([x1, y1], axis=1), np.stack([x2, y2], axis=1)])
    dirs = np.vstack(
        [np.tile([1.0, 0.0], (n_per, 1)), np.tile([-1.0, 0.0], (n_per, 1))]
    )
    ang_noise = rng.normal(0.0, 0.03, 2 * n_per)
    cos, sin = np.cos(ang_noise), np.sin(ang_noise)
    dirs = np.stack(
        [dirs[:, 0] * cos - dirs[:, 1] * sin, dirs[:, 0] * sin + dirs[:, 1] * cos], axis=1
    )
    labels = np.array([0] * n_per + [1] * n_per)
    return ObservationSet(pos, dirs), labels
