"""Exact geometry on the unit sphere S^{d-1}.

Geodesic distances, logarithmic/exponential maps between the sphere and its
tangent spaces, iterative Fréchet means, and tangent-space dispersion
statistics. All functions are pure and operate on plain float arrays; the
``UnitVector`` / ``TangentVector`` wrappers add invariant checks for callers
that want them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, UsageError

# Inner products are clamped before arccos: float noise routinely pushes
# dot products of unit vectors past +-1.
_DOT_EPS = 1e-12
_UNIT_TOL = 1e-9
_ORTHO_TOL = 1e-8
_ANTIPODAL_TOL = 1e-9
_ZERO_TANGENT = 1e-12


def _coords(x) -> np.ndarray:
    """Accept a UnitVector/TangentVector or a bare array."""
    return np.asarray(getattr(x, "coords", x), dtype=float)


@dataclass(frozen=True, eq=False)
class UnitVector:
    """A point on S^{d-1}: a d-vector (d >= 2) with unit Euclidean norm."""

    coords: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float)
        if c.ndim != 1 or c.shape[0] < 2:
            raise UsageError(f"unit vector must be a 1-d array with d >= 2, got shape {c.shape}")
        n = np.linalg.norm(c)
        if abs(n - 1.0) > _UNIT_TOL:
            raise UsageError(f"norm deviates from 1 by {abs(n - 1.0):.3e} (> {_UNIT_TOL})")
        object.__setattr__(self, "coords", c)

    @property
    def dim(self) -> int:
        return self.coords.shape[0]

    @classmethod
    def normalized(cls, v) -> "UnitVector":
        v = np.asarray(v, dtype=float)
        n = np.linalg.norm(v)
        if n < 1e-12:
            raise UsageError("cannot normalize a (near-)zero vector onto the sphere")
        return cls(v / n)


@dataclass(frozen=True, eq=False)
class TangentVector:
    """A vector in the tangent space of the sphere at ``base``."""

    coords: np.ndarray
    base: UnitVector = field(repr=False)

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float)
        if c.shape != self.base.coords.shape:
            raise UsageError("tangent coords and base point have mismatched dimensions")
        if abs(float(c @ self.base.coords)) > _ORTHO_TOL:
            raise UsageError("tangent vector is not orthogonal to its base point")
        object.__setattr__(self, "coords", c)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.coords))


def geodesic_distance(p, q) -> float | np.ndarray:
    """Arc length arccos(p.q) between unit vectors; batched over leading axes."""
    p, q = _coords(p), _coords(q)
    if p.shape[-1] != q.shape[-1]:
        raise UsageError(f"dimension mismatch: {p.shape[-1]} vs {q.shape[-1]}")
    dot = np.clip(np.sum(p * q, axis=-1), -1.0 + _DOT_EPS, 1.0 - _DOT_EPS)
    # exact endpoints are restored so identical/antipodal inputs give 0 / pi
    raw = np.sum(p * q, axis=-1)
    dot = np.where(raw >= 1.0, 1.0, np.where(raw <= -1.0, -1.0, dot))
    out = np.arccos(dot)
    return float(out) if out.ndim == 0 else out


def log_map(p, q) -> np.ndarray:
    """Map q into the tangent space at p.

    The result has norm equal to the geodesic distance d(p, q). Raises
    ``DegenerateInputError`` for (near-)antipodal inputs, where the tangent
    direction is not unique.
    """
    p, q = _coords(p), _coords(q)
    single = q.ndim == 1
    Q = np.atleast_2d(q)
    if p.shape[-1] != Q.shape[-1]:
        raise UsageError(f"dimension mismatch: {p.shape[-1]} vs {Q.shape[-1]}")
    dot = Q @ p
    if np.any(dot <= -1.0 + _ANTIPODAL_TOL):
        raise DegenerateInputError("log map is undefined for antipodal points")
    dist = np.arccos(np.clip(dot, -1.0 + _DOT_EPS, 1.0 - _DOT_EPS))
    dist = np.where(dot >= 1.0, 0.0, dist)
    resid = Q - dot[:, None] * p
    rnorm = np.linalg.norm(resid, axis=-1)
    safe = np.where(rnorm > 0.0, rnorm, 1.0)
    out = resid * (dist / safe)[:, None]
    out[rnorm == 0.0] = 0.0
    return out[0] if single else out


def exp_map(p, v) -> np.ndarray:
    """Map tangent vector v at p back onto the sphere along the geodesic."""
    p, v = _coords(p), _coords(v)
    n = np.linalg.norm(v)
    if n < _ZERO_TANGENT:
        return p.copy()
    out = p * np.cos(n) + (v / n) * np.sin(n)
    return out / np.linalg.norm(out)


def frechet_mean(points, weights=None, *, tol=1e-9, max_iter=100, return_info=False):
    """Weighted Fréchet mean: local minimizer of sum w_i * d(mu, q_i)^2.

    Computed by the fixed-point iteration mu <- exp_mu(mean of log_mu(q_i)),
    started at the normalized Euclidean mean. Converged when the tangent
    update step has norm <= tol. With ``return_info`` the result is
    ``(mean, info)`` where info carries ``converged`` and ``iterations``;
    otherwise just the mean (non-convergence returns the last iterate).
    """
    P = _stack_points(points)
    n, d = P.shape
    if weights is None:
        w = np.full(n, 1.0 / n)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (n,) or np.any(w < 0):
            raise UsageError("weights must be nonnegative, one per point")
        s = w.sum()
        if s <= 0:
            raise UsageError("weights sum to zero")
        w = w / s

    mu = P.T @ w
    nrm = np.linalg.norm(mu)
    mu = P[0].copy() if nrm < 1e-6 else mu / nrm

    # A base point antipodal to a sample has no unique log map; nudge it along
    # the most orthogonal coordinate axis and retry. The nudge must exceed
    # sqrt(2 * antipodal_tol) ~ 4.5e-5 in angle to actually clear the
    # tolerance, and escalates on the (rare) repeat hits.
    perturb = 1e-3
    retries = 4
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        try:
            step = (log_map(mu, P) * w[:, None]).sum(axis=0)
        except DegenerateInputError:
            if retries == 0:
                raise
            retries -= 1
            axis = int(np.argmin(np.abs(mu)))
            mu[axis] += perturb
            mu /= np.linalg.norm(mu)
            perturb *= 10.0
            continue
        mu = exp_map(mu, step)
        if np.linalg.norm(step) <= tol:
            converged = True
            break
    if return_info:
        return mu, {"converged": converged, "iterations": it}
    return mu


def directional_variance(points, mean) -> float:
    """Scalar dispersion (1/(N-1)) * sum of squared geodesic distances to the mean."""
    P = _stack_points(points, minimum=2)
    d = geodesic_distance(P, _coords(mean))
    return float(np.sum(d * d) / (P.shape[0] - 1))


def riemannian_covariance(points, mean) -> np.ndarray:
    """Tangent-space covariance (1/(N-1)) * sum log_mu(q_i) log_mu(q_i)^T.

    Full dispersion matrix in ambient coordinates; its trace equals
    ``directional_variance`` with the same mean. Utility only, the mixture
    model uses the scalar variance.
    """
    P = _stack_points(points, minimum=2)
    L = log_map(_coords(mean), P)
    return (L.T @ L) / (P.shape[0] - 1)


def _stack_points(points, minimum=1) -> np.ndarray:
    if isinstance(points, np.ndarray) and points.ndim == 2:
        P = np.asarray(points, dtype=float)
    else:
        seq = list(points)
        if not seq:
            raise UsageError("need at least one point")
        P = np.stack([_coords(p) for p in seq])
    if P.shape[0] < minimum:
        raise UsageError(f"need at least {minimum} points, got {P.shape[0]}")
    if P.shape[1] < 2:
        raise UsageError("sphere points must have dimension >= 2")
    return P


def random_unit(rng, n, d) -> np.ndarray:
    """n points drawn uniformly on S^{d-1} (Gaussian projection)."""
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)
