"""Trajectory file ingestion and export.

CSV: header ``x1,...,xd[,v1,...,vd]``, one row per sample, trajectories
separated by a blank line or a row starting with ``---``. JSON: an object
with ``positions`` (one trajectory or a list of them), optional
``velocities``, ``dt`` and ``attractor``. When velocities are absent they
are reconstructed by central finite differences with the supplied dt
(one-sided at trajectory endpoints).
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from typing import Optional

import numpy as np

from .errors import ParseError, UsageError
from .mixture import Demonstration


def atomic_write_text(path: str, text: str) -> None:
    """Write via a temp file and rename, so failures never leave partial output."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _finite_difference_velocities(pos: np.ndarray, dt: float) -> np.ndarray:
    n = pos.shape[0]
    if n < 2:
        raise UsageError("need at least two samples per trajectory to differentiate positions")
    vel = np.empty_like(pos)
    vel[0] = (pos[1] - pos[0]) / dt
    vel[-1] = (pos[-1] - pos[-2]) / dt
    if n > 2:
        vel[1:-1] = (pos[2:] - pos[:-2]) / (2.0 * dt)
    return vel


def _assemble(trajs_pos, trajs_vel, dt, attractor) -> Demonstration:
    if not trajs_pos or all(len(t) == 0 for t in trajs_pos):
        raise UsageError("file contains no samples")
    trajs_pos = [np.asarray(t, dtype=float) for t in trajs_pos if len(t)]
    if trajs_vel is None:
        if dt is None:
            raise UsageError("velocities are absent: a sampling interval dt is required")
        trajs_vel = [_finite_difference_velocities(t, dt) for t in trajs_pos]
    else:
        trajs_vel = [np.asarray(t, dtype=float) for t in trajs_vel if len(t)]
        if len(trajs_vel) != len(trajs_pos) or any(
            v.shape != p.shape for v, p in zip(trajs_vel, trajs_pos)
        ):
            raise UsageError("velocities do not match positions trajectory by trajectory")
    boundaries = [0]
    for t in trajs_pos[:-1]:
        boundaries.append(boundaries[-1] + t.shape[0])
    return Demonstration(
        np.vstack(trajs_pos),
        np.vstack(trajs_vel),
        tuple(boundaries),
        attractor=None if attractor is None else np.asarray(attractor, dtype=float),
        dt=dt,
    )


def _parse_csv(path: str, dt: Optional[float], attractor) -> Demonstration:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError("empty file", line=1)
    header = [h.strip() for h in rows[0]]
    d = sum(1 for h in header if h.startswith("x"))
    has_vel = any(h.startswith("v") for h in header)
    expected = [f"x{i + 1}" for i in range(d)] + ([f"v{i + 1}" for i in range(d)] if has_vel else [])
    if d < 1 or header != expected:
        raise ParseError(f"header must be x1..xd[,v1..vd], got {','.join(header)}", line=1)

    trajs_pos, trajs_vel = [[]], [[]] if has_vel else None
    for lineno, row in enumerate(rows[1:], start=2):
        stripped = [c.strip() for c in row]
        if not any(stripped) or stripped[0].startswith("---"):
            if trajs_pos[-1]:
                trajs_pos.append([])
                if has_vel:
                    trajs_vel.append([])
            continue
        if len(stripped) != len(expected):
            raise ParseError(f"expected {len(expected)} columns, got {len(stripped)}", line=lineno)
        try:
            vals = [float(c) for c in stripped]
        except ValueError as exc:
            raise ParseError(f"non-numeric value: {exc}", line=lineno) from None
        trajs_pos[-1].append(vals[:d])
        if has_vel:
            trajs_vel[-1].append(vals[d:])
    return _assemble(trajs_pos, trajs_vel, dt, attractor)


def _nesting_depth(x) -> int:
    depth = 0
    while isinstance(x, (list, tuple)) and len(x):
        depth += 1
        x = x[0]
    return depth


def _parse_json(path: str, dt: Optional[float], attractor) -> Demonstration:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    if not isinstance(doc, dict) or "positions" not in doc:
        raise ParseError("JSON document must be an object with a 'positions' field")
    pos = doc["positions"]
    depth = _nesting_depth(pos)
    if depth == 2:
        trajs_pos = [pos]
    elif depth == 3:
        trajs_pos = list(pos)
    else:
        raise ParseError("'positions' must be a trajectory or a list of trajectories")
    vel = doc.get("velocities")
    trajs_vel = None
    if vel is not None:
        trajs_vel = [vel] if _nesting_depth(vel) == 2 else list(vel)
    dt = dt if dt is not None else doc.get("dt")
    attractor = attractor if attractor is not None else doc.get("attractor")
    return _assemble(trajs_pos, trajs_vel, dt, attractor)


def load_trajectories(
    path: str,
    format: Optional[str] = None,
    dt: Optional[float] = None,
    attractor=None,
) -> Demonstration:
    """Read a demonstration from CSV or JSON (chosen by extension by default).

    The attractor defaults to the mean of the trajectories' final positions.
    """
    if not os.path.exists(path):
        raise UsageError(f"no such file: {path}")
    fmt = format or ("json" if path.lower().endswith(".json") else "csv")
    if fmt == "csv":
        return _parse_csv(path, dt, attractor)
    if fmt == "json":
        return _parse_json(path, dt, attractor)
    raise UsageError(f"unknown format {fmt!r}")


def save_series(path: str, segments) -> None:
    """Write (positions, velocities) array pairs in the CSV trajectory format."""
    segments = [(np.atleast_2d(p), np.atleast_2d(v)) for p, v in segments]
    if not segments:
        raise UsageError("nothing to write")
    d = segments[0][0].shape[1]
    header = [f"x{i + 1}" for i in range(d)] + [f"v{i + 1}" for i in range(d)]
    lines = [",".join(header)]
    for t, (pos, vel) in enumerate(segments):
        if pos.shape != vel.shape or pos.shape[1] != d:
            raise UsageError("segment shapes are inconsistent")
        if t:
            lines.append("")
        for i in range(pos.shape[0]):
            vals = list(pos[i]) + list(vel[i])
            lines.append(",".join(repr(float(v)) for v in vals))
    atomic_write_text(path, "\n".join(lines) + "\n")


def save_trajectories(path: str, demo: Demonstration) -> None:
    """Write a demonstration in the CSV trajectory format (round-trip exact)."""
    save_series(
        path,
        [(demo.positions[sl], demo.velocities[sl]) for sl in demo.trajectory_slices()],
    )
