"""Stable linear-parameter-varying dynamics on top of a mixture partition.

The velocity field is a state-dependent convex blend of linear systems,
f(x) = sum_k gamma_k(x) A_k (x - x*), with every A_k constrained to have a
negative-definite symmetric part so ||x - x*||^2 decreases along all
trajectories. The constraint is enforced exactly by the parameterization
A = S - (L L^T + eps I) with L lower-triangular and S skew-symmetric, which
turns the mean-squared-error fit into an unconstrained smooth problem.
Mixing weights are computed once from the partition and held fixed during
the fit (two-step estimation).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import IntegrationError, UsageError
from .mixture import Demonstration, MixtureComponent, _gauss_logpdf, component_loglik

logger = logging.getLogger(__name__)

_LOG_2PI = math.log(2.0 * math.pi)
EPS_STAB = 1e-6


@dataclass(frozen=True)
class OptConfig:
    eps_stab: float = EPS_STAB
    grad_tol: float = 1e-6
    max_iter: int = 5000

    def __post_init__(self):
        if self.eps_stab <= 0 or self.grad_tol <= 0 or self.max_iter < 1:
            raise UsageError("eps_stab and grad_tol must be positive, max_iter >= 1")


@dataclass(frozen=True, eq=False)
class LpvDsModel:
    """K linear systems blended by mixture responsibilities around an attractor.

    Offsets are never stored: b_k = -A_k attractor by construction, which
    makes the field vanish exactly at the attractor.
    """

    A: np.ndarray
    components: tuple[MixtureComponent, ...]
    attractor: np.ndarray
    eps_stab: float = EPS_STAB

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        att = np.asarray(self.attractor, dtype=float)
        comps = tuple(self.components)
        if A.ndim != 3 or A.shape[0] != len(comps) or A.shape[1] != A.shape[2]:
            raise UsageError(f"A must be a K x d x d array matching {len(comps)} components, got {A.shape}")
        d = A.shape[1]
        if att.shape != (d,):
            raise UsageError("attractor dimension does not match the linear systems")
        for k, Ak in enumerate(A):
            lam = float(np.linalg.eigvalsh(0.5 * (Ak + Ak.T)).max())
            if lam > -self.eps_stab + 1e-12:
                raise UsageError(f"system {k} violates stability: max symmetric eigenvalue {lam:.3e}")
        for c in comps:
            if c.dim != d:
                raise UsageError("component dimension does not match the linear systems")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "attractor", att)
        object.__setattr__(self, "components", comps)

    @property
    def K(self) -> int:
        return self.A.shape[0]

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    @property
    def b(self) -> np.ndarray:
        return -np.einsum("kij,j->ki", self.A, self.attractor)

    @cached_property
    def _log_weights(self) -> np.ndarray:
        return np.log(np.array([c.weight for c in self.components]))


@dataclass(frozen=True, eq=False)
class RolloutTrace:
    states: np.ndarray
    velocities: np.ndarray
    dt: float
    converged: bool

    def __post_init__(self):
        s = np.asarray(self.states, dtype=float)
        v = np.asarray(self.velocities, dtype=float)
        if s.shape != v.shape:
            raise UsageError("states and velocities must have identical shapes")
        if not self.dt > 0:
            raise UsageError("dt must be positive")
        object.__setattr__(self, "states", s)
        object.__setattr__(self, "velocities", v)


# ---------------------------------------------------------------------------
# mixing function


def _mixing_log_matrix(model: LpvDsModel, X: np.ndarray, mode: str, V: Optional[np.ndarray]) -> np.ndarray:
    n = X.shape[0]
    k = model.K
    logm = np.empty((n, k))
    if mode == "position":
        for j, comp in enumerate(model.components):
            logm[:, j] = model._log_weights[j] + _gauss_logpdf(X, comp.mean_pos, comp._chol, comp._logdet)
    elif mode == "augmented":
        if V is None:
            raise UsageError("augmented mixing requires velocities")
        norms = np.linalg.norm(V, axis=1)
        if np.any(norms <= 0):
            raise UsageError("augmented mixing requires nonzero velocities")
        dirs = V / norms[:, None]
        from .mixture import ObservationSet

        oset = ObservationSet(X, dirs)
        for j, comp in enumerate(model.components):
            if comp.dir_mean is None:
                raise UsageError("augmented mixing requires directional components")
            logm[:, j] = model._log_weights[j] + component_loglik(oset, comp)
    else:
        raise UsageError(f"unknown mixing mode {mode!r}")
    return logm


def _normalize_rows(model: LpvDsModel, X: np.ndarray, logm: np.ndarray) -> np.ndarray:
    m = logm.max(axis=1, keepdims=True)
    bad = ~np.isfinite(m[:, 0])
    if np.any(bad):
        # all densities vanished: fall back to a one-hot on the nearest mean
        logger.warning("mixing underflow at %d states; using nearest-component fallback", int(bad.sum()))
        means = np.stack([c.mean_pos for c in model.components])
        d2 = ((X[bad, None, :] - means[None, :, :]) ** 2).sum(axis=2)
        onehot = np.zeros((int(bad.sum()), logm.shape[1]))
        onehot[np.arange(onehot.shape[0]), np.argmin(d2, axis=1)] = 1.0
        gamma = np.empty_like(logm)
        good = ~bad
        g = np.exp(logm[good] - m[good])
        gamma[good] = g / g.sum(axis=1, keepdims=True)
        gamma[bad] = onehot
        return gamma
    g = np.exp(logm - m)
    return g / g.sum(axis=1, keepdims=True)


def mixing_weights(model: LpvDsModel, xi, mode: str = "position", xi_dot=None) -> np.ndarray:
    """Responsibilities gamma_k at one state (or a batch of states).

    Position mode scores each component's position Gaussian; augmented mode
    additionally scores the direction of ``xi_dot`` against each component's
    directional statistics. Rows are positive and sum to one.
    """
    xi = np.asarray(xi, dtype=float)
    single = xi.ndim == 1
    X = np.atleast_2d(xi)
    V = None
    if xi_dot is not None:
        V = np.atleast_2d(np.asarray(xi_dot, dtype=float))
    gamma = _normalize_rows(model, X, _mixing_log_matrix(model, X, mode, V))
    return gamma[0] if single else gamma


def evaluate(model: LpvDsModel, xi, mode: str = "position", xi_dot=None) -> np.ndarray:
    """Velocity of the learned field at ``xi``: sum_k gamma_k A_k (xi - x*)."""
    xi = np.asarray(xi, dtype=float)
    single = xi.ndim == 1
    X = np.atleast_2d(xi)
    gamma = mixing_weights(model, X, mode, xi_dot)
    out = np.einsum("nk,kij,nj->ni", gamma, model.A, X - model.attractor)
    return out[0] if single else out


# ---------------------------------------------------------------------------
# stability-parameterized fit


def _param_indices(d: int):
    tril = np.tril_indices(d)
    strict = np.tril_indices(d, -1)
    return tril, strict


def pack_initial(k: int, d: int) -> np.ndarray:
    """Starting point: L_k = I, S_k = 0, i.e. A_k = -(1 + eps) I."""
    tril, strict = _param_indices(d)
    per = len(tril[0]) + len(strict[0])
    theta = np.zeros(k * per)
    eye = np.eye(d)[tril]
    for j in range(k):
        theta[j * per : j * per + len(tril[0])] = eye
    return theta


def unpack_systems(theta: np.ndarray, k: int, d: int, eps_stab: float) -> np.ndarray:
    """Decode A_k = S_k - (L_k L_k^T + eps I) from the packed parameter vector."""
    tril, strict = _param_indices(d)
    n_l, n_s = len(tril[0]), len(strict[0])
    per = n_l + n_s
    if theta.shape != (k * per,):
        raise UsageError(f"parameter vector has wrong length {theta.shape}, expected {k * per}")
    A = np.empty((k, d, d))
    for j in range(k):
        seg = theta[j * per : (j + 1) * per]
        L = np.zeros((d, d))
        L[tril] = seg[:n_l]
        W = np.zeros((d, d))
        W[strict] = seg[n_l:]
        A[j] = (W - W.T) - (L @ L.T + eps_stab * np.eye(d))
    return A


def objective_and_grad(
    theta: np.ndarray,
    X: np.ndarray,
    V: np.ndarray,
    gamma: np.ndarray,
    eps_stab: float,
) -> tuple[float, np.ndarray]:
    """Mean-squared reproduction error and its exact gradient.

    X holds attractor-centered positions, V reference velocities, gamma the
    fixed responsibilities. Returns (J, dJ/dtheta) with
    J = sum_i || V_i - sum_k gamma_ik A_k X_i ||^2.
    """
    k = gamma.shape[1]
    d = X.shape[1]
    tril, strict = _param_indices(d)
    n_l, n_s = len(tril[0]), len(strict[0])
    per = n_l + n_s

    Ls = np.zeros((k, d, d))
    Ws = np.zeros((k, d, d))
    for j in range(k):
        seg = theta[j * per : (j + 1) * per]
        Ls[j][tril] = seg[:n_l]
        Ws[j][strict] = seg[n_l:]
    A = (Ws - np.transpose(Ws, (0, 2, 1))) - (
        np.einsum("kij,klj->kil", Ls, Ls) + eps_stab * np.eye(d)[None]
    )

    pred = np.einsum("nk,kij,nj->ni", gamma, A, X)
    R = V - pred
    J = float(np.sum(R * R))

    G = -2.0 * np.einsum("nk,ni,nj->kij", gamma, R, X)
    grad = np.empty_like(theta)
    for j in range(k):
        GL = -(G[j] + G[j].T) @ Ls[j]
        GW = G[j] - G[j].T
        grad[j * per : j * per + n_l] = GL[tril]
        grad[j * per + n_l : (j + 1) * per] = GW[strict]
    return J, grad


def fit(partition, demo: Demonstration, opt: Optional[OptConfig] = None) -> LpvDsModel:
    """Fit the blended linear systems to a demonstration under the partition.

    ``partition`` is a sampled mixture state (or a plain sequence of
    components); its responsibilities over the demonstration positions are
    computed once and held fixed while the systems are optimized under the
    stability parameterization.
    """
    opt = opt or OptConfig()
    comps = tuple(partition.components) if hasattr(partition, "components") else tuple(partition)
    if not comps:
        raise UsageError("partition has no components")
    d = demo.dim
    if comps[0].dim != d:
        raise UsageError("partition dimension does not match the demonstration")
    att = demo.attractor
    probe = LpvDsModel(
        A=np.repeat(-np.eye(d)[None] * (1.0 + opt.eps_stab), len(comps), axis=0),
        components=comps,
        attractor=att,
        eps_stab=opt.eps_stab,
    )
    gamma = mixing_weights(probe, demo.positions)
    X = demo.positions - att
    V = demo.velocities
    if not (np.all(np.isfinite(gamma)) and np.all(np.isfinite(X)) and np.all(np.isfinite(V))):
        raise UsageError("degenerate data: non-finite values entered the fit")

    k = len(comps)
    theta0 = pack_initial(k, d)
    res = minimize(
        objective_and_grad,
        theta0,
        args=(X, V, gamma, opt.eps_stab),
        method="L-BFGS-B",
        jac=True,
        options={"maxiter": opt.max_iter, "maxfun": 10 * opt.max_iter, "gtol": opt.grad_tol, "ftol": 1e-14},
    )
    A = unpack_systems(res.x, k, d, opt.eps_stab)
    return LpvDsModel(A=A, components=comps, attractor=att, eps_stab=opt.eps_stab)


def mse_objective(model: LpvDsModel, demo: Demonstration) -> float:
    """Total squared reproduction error of the model on the demonstration."""
    R = demo.velocities - evaluate(model, demo.positions)
    return float(np.sum(R * R))


# ---------------------------------------------------------------------------
# rollout


def rollout(
    model: LpvDsModel,
    xi0,
    dt: float,
    max_steps: int = 10000,
    conv_tol: float = 1e-3,
    integrator: str = "rk4",
) -> RolloutTrace:
    """Integrate the learned field from ``xi0`` until it reaches the attractor.

    Stops early once ||x - x*|| <= conv_tol and sets ``converged``
    accordingly. Raises ``IntegrationError`` (with the partial trace) if the
    state leaves the finite range.
    """
    if dt <= 0:
        raise UsageError("dt must be positive")
    if integrator not in ("rk4", "euler"):
        raise UsageError(f"unknown integrator {integrator!r}")
    x = np.asarray(xi0, dtype=float).copy()
    if x.shape != (model.dim,):
        raise UsageError("start state has the wrong dimension")

    f = lambda s: evaluate(model, s)
    states = [x.copy()]
    vels = [f(x)]
    converged = bool(np.linalg.norm(x - model.attractor) <= conv_tol)
    steps = 0
    while not converged and steps < max_steps:
        if integrator == "rk4":
            k1 = f(x)
            k2 = f(x + 0.5 * dt * k1)
            k3 = f(x + 0.5 * dt * k2)
            k4 = f(x + dt * k3)
            x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        else:
            x = x + dt * f(x)
        if not np.all(np.isfinite(x)):
            partial = RolloutTrace(np.stack(states), np.stack(vels), dt, False)
            raise IntegrationError("state became non-finite during integration", partial_trace=partial)
        states.append(x.copy())
        vels.append(f(x))
        steps += 1
        converged = bool(np.linalg.norm(x - model.attractor) <= conv_tol)
    return RolloutTrace(np.stack(states), np.stack(vels), dt, converged)
