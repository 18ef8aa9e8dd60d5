"""Direction-augmented Gaussian mixture components and conjugate bookkeeping.

Observations carry a position and a unit motion direction. Each mixture
component is a Gaussian over positions plus a scalar variance for the
geodesic deviation of directions from the component's directional mean; the
two blocks are independent by construction, so the implied (d+1)-dim
Gaussian has a block-diagonal covariance with the scalar variance in the
last slot.

Conjugate updates are block-wise: Normal-Inverse-Wishart for the position
block and an Inverse-Gamma for the directional variance (the deviation
coordinate is modeled as a zero-mean Gaussian).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterator, Optional, Sequence

import numpy as np
from scipy.special import gammaln, multigammaln

from . import sphere
from .errors import NumericalError, UsageError
from .sphere import UnitVector

_LOG_2PI = math.log(2.0 * math.pi)
_COV_JITTER = 1e-10


# ---------------------------------------------------------------------------
# data containers


@dataclass(frozen=True, eq=False)
class Demonstration:
    """Reference trajectories: positions, velocities, per-trajectory boundaries, attractor.

    ``boundaries`` marks the starting row of each trajectory (first entry 0,
    strictly increasing). ``dt`` is the sampling interval when known.
    """

    positions: np.ndarray
    velocities: np.ndarray
    boundaries: tuple[int, ...] = (0,)
    attractor: Optional[np.ndarray] = None
    dt: Optional[float] = None

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        vel = np.asarray(self.velocities, dtype=float)
        if pos.ndim != 2 or pos.shape != vel.shape:
            raise UsageError(f"positions {pos.shape} and velocities {vel.shape} must be equal N x d arrays")
        n, d = pos.shape
        if n < 2 or d < 2:
            raise UsageError(f"need N >= 2 samples of dimension d >= 2, got {pos.shape}")
        b = tuple(int(x) for x in self.boundaries)
        if not b or b[0] != 0 or any(b[i] >= b[i + 1] for i in range(len(b) - 1)) or b[-1] >= n:
            raise UsageError(f"boundaries must start at 0, be strictly increasing and stay below N={n}: {b}")
        if self.attractor is None:
            att = self._default_attractor(pos, b)
        else:
            att = np.asarray(self.attractor, dtype=float)
            if att.shape != (d,):
                raise UsageError(f"attractor must be a {d}-vector")
        if self.dt is not None and not self.dt > 0:
            raise UsageError("dt must be positive")
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(vel))):
            raise UsageError("positions/velocities contain non-finite values")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "velocities", vel)
        object.__setattr__(self, "boundaries", b)
        object.__setattr__(self, "attractor", att)

    @staticmethod
    def _default_attractor(pos, boundaries):
        ends = list(boundaries[1:]) + [pos.shape[0]]
        return np.mean([pos[e - 1] for e in ends], axis=0)

    @property
    def n_samples(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    @property
    def n_trajectories(self) -> int:
        return len(self.boundaries)

    def trajectory_slices(self) -> list[slice]:
        ends = list(self.boundaries[1:]) + [self.n_samples]
        return [slice(s, e) for s, e in zip(self.boundaries, ends)]

    def estimate_dt(self) -> float:
        """Sampling interval: stored value, else median ||dx|| / ||v||."""
        if self.dt is not None:
            return self.dt
        ratios = []
        for sl in self.trajectory_slices():
            p, v = self.positions[sl], self.velocities[sl]
            if p.shape[0] < 2:
                continue
            step = np.linalg.norm(np.diff(p, axis=0), axis=1)
            speed = np.linalg.norm(v[:-1], axis=1)
            ok = speed > 0
            if np.any(ok):
                ratios.append(step[ok] / speed[ok])
        if not ratios:
            raise UsageError("cannot estimate dt: all reference velocities are zero")
        return float(np.median(np.concatenate(ratios)))


@dataclass(frozen=True, eq=False)
class AugmentedObservation:
    """One sample: position, unit motion direction, and a validity flag.

    ``valid`` is False when the sample's speed fell below the velocity floor
    with no earlier direction in its trajectory to inherit; such samples are
    excluded from clustering but kept for dynamics fitting.
    """

    position: np.ndarray
    direction: UnitVector
    valid: bool = True

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float)
        if pos.ndim != 1 or pos.shape[0] != self.direction.dim:
            raise UsageError("position and direction dimensions differ")
        object.__setattr__(self, "position", pos)


class ObservationSet:
    """Column-oriented batch of augmented observations.

    Iterating or indexing yields ``AugmentedObservation`` views; the array
    attributes are what the samplers and likelihood models operate on.
    """

    def __init__(self, positions, directions=None, valid=None, velocities=None):
        pos = np.asarray(positions, dtype=float)
        if pos.ndim != 2:
            raise UsageError("positions must be an N x d array")
        n = pos.shape[0]
        if directions is not None:
            directions = np.asarray(directions, dtype=float)
            if directions.shape != pos.shape:
                raise UsageError("directions must match positions in shape")
            norms = np.linalg.norm(directions, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-6):
                raise UsageError("directions must have unit norm")
        if velocities is not None:
            velocities = np.asarray(velocities, dtype=float)
            if velocities.shape != pos.shape:
                raise UsageError("velocities must match positions in shape")
        self.positions = pos
        self.directions = directions
        self.velocities = velocities
        self.valid = np.ones(n, dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
        if self.valid.shape != (n,):
            raise UsageError("valid mask must have one entry per sample")

    @classmethod
    def from_observations(cls, observations: Sequence[AugmentedObservation]) -> "ObservationSet":
        obs = list(observations)
        if not obs:
            raise UsageError("need at least one observation")
        return cls(
            np.stack([o.position for o in obs]),
            np.stack([o.direction.coords for o in obs]),
            np.array([o.valid for o in obs], dtype=bool),
        )

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def __getitem__(self, i: int) -> AugmentedObservation:
        if self.directions is None:
            raise UsageError("observation set has no directions")
        return AugmentedObservation(self.positions[i], UnitVector(self.directions[i]), bool(self.valid[i]))

    def __iter__(self) -> Iterator[AugmentedObservation]:
        return (self[i] for i in range(len(self)))

    def subset(self, idx) -> "ObservationSet":
        idx = np.asarray(idx)
        return ObservationSet(
            self.positions[idx],
            None if self.directions is None else self.directions[idx],
            self.valid[idx],
            None if self.velocities is None else self.velocities[idx],
        )

    def valid_subset(self) -> tuple["ObservationSet", np.ndarray]:
        """The clustering view (valid samples only) plus their original row indices."""
        idx = np.flatnonzero(self.valid)
        return self.subset(idx), idx


def concat_demonstrations(first: Demonstration, second: Demonstration, attractor=None) -> Demonstration:
    """Stack two demonstrations, keeping their trajectory boundaries."""
    if first.dim != second.dim:
        raise UsageError("demonstrations have different dimensions")
    offset = first.n_samples
    boundaries = first.boundaries + tuple(b + offset for b in second.boundaries)
    return Demonstration(
        np.vstack([first.positions, second.positions]),
        np.vstack([first.velocities, second.velocities]),
        boundaries,
        attractor=first.attractor if attractor is None else attractor,
        dt=first.dt,
    )


def as_observation_set(obs) -> ObservationSet:
    if isinstance(obs, ObservationSet):
        return obs
    if isinstance(obs, AugmentedObservation):
        return ObservationSet.from_observations([obs])
    return ObservationSet.from_observations(obs)


# ---------------------------------------------------------------------------
# mixture component and prior


@dataclass(frozen=True, eq=False)
class MixtureComponent:
    """One mixture component: position Gaussian plus directional statistics.

    ``cov_pos`` is symmetrized and given a trace-scaled diagonal jitter at
    construction so a Cholesky factorization always exists. ``dir_mean`` and
    ``dir_var`` are absent for plain (direction-free) components.
    """

    mean_pos: np.ndarray
    cov_pos: np.ndarray
    weight: float = 1.0
    count: int = 1
    dir_mean: Optional[np.ndarray] = None
    dir_var: Optional[float] = None

    def __post_init__(self):
        mu = np.asarray(self.mean_pos, dtype=float)
        cov = np.asarray(self.cov_pos, dtype=float)
        d = mu.shape[0]
        if mu.ndim != 1 or cov.shape != (d, d):
            raise UsageError(f"mean {mu.shape} / covariance {cov.shape} shapes are inconsistent")
        cov = 0.5 * (cov + cov.T)
        cov = cov + (_COV_JITTER * np.trace(cov) / d) * np.eye(d)
        if not (0.0 < self.weight <= 1.0 + 1e-9):
            raise UsageError(f"weight must lie in (0, 1], got {self.weight}")
        if self.count < 1:
            raise UsageError("count must be >= 1")
        if (self.dir_mean is None) != (self.dir_var is None):
            raise UsageError("dir_mean and dir_var must be given together")
        if self.dir_mean is not None:
            dm = np.asarray(self.dir_mean, dtype=float)
            if dm.shape != (d,) or abs(np.linalg.norm(dm) - 1.0) > 1e-6:
                raise UsageError("dir_mean must be a unit d-vector")
            if not self.dir_var > 0:
                raise UsageError("dir_var must be positive")
            object.__setattr__(self, "dir_mean", dm)
            object.__setattr__(self, "dir_var", float(self.dir_var))
        object.__setattr__(self, "mean_pos", mu)
        object.__setattr__(self, "cov_pos", cov)
        object.__setattr__(self, "weight", float(self.weight))
        object.__setattr__(self, "count", int(self.count))

    @property
    def dim(self) -> int:
        return self.mean_pos.shape[0]

    @cached_property
    def _chol(self) -> np.ndarray:
        try:
            return np.linalg.cholesky(self.cov_pos)
        except np.linalg.LinAlgError as exc:  # jitter above should prevent this
            raise NumericalError("component covariance is singular") from exc

    @cached_property
    def _logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self._chol))))

    def with_weight_count(self, weight: float, count: int) -> "MixtureComponent":
        return replace(self, weight=weight, count=count)


@dataclass(frozen=True, eq=False)
class NiwPrior:
    """Conjugate hyperparameters: NIW position block, Inverse-Gamma directional
    variance, and the mixing concentration.

    ``nu`` must exceed d+1 so the prior covariance expectation exists;
    ``dir_var_shape`` must exceed 1 for the same reason on the directional
    variance.
    """

    mu0_pos: np.ndarray
    kappa: float
    nu: float
    psi_pos: np.ndarray
    dir_var_shape: float = 2.0
    dir_var_scale: float = 0.1
    alpha: float = 1.0

    def __post_init__(self):
        mu0 = np.asarray(self.mu0_pos, dtype=float)
        psi = np.asarray(self.psi_pos, dtype=float)
        d = mu0.shape[0]
        if mu0.ndim != 1 or psi.shape != (d, d):
            raise UsageError("mu0_pos and psi_pos shapes are inconsistent")
        psi = 0.5 * (psi + psi.T)
        if self.kappa <= 0 or self.alpha <= 0:
            raise UsageError("kappa and alpha must be positive")
        if not self.nu > d + 1:
            raise UsageError(f"nu must exceed d+1 = {d + 1}")
        if not self.dir_var_shape > 1:
            raise UsageError("dir_var_shape must exceed 1")
        if not self.dir_var_scale > 0:
            raise UsageError("dir_var_scale must be positive")
        try:
            np.linalg.cholesky(psi)
        except np.linalg.LinAlgError as exc:
            raise UsageError("psi_pos must be symmetric positive definite") from exc
        object.__setattr__(self, "mu0_pos", mu0)
        object.__setattr__(self, "psi_pos", psi)

    @property
    def dim(self) -> int:
        return self.mu0_pos.shape[0]

    @classmethod
    def from_data(
        cls,
        positions,
        *,
        kappa: float = 1.0,
        nu: Optional[float] = None,
        psi_scale: float = 0.2,
        dir_var_mean: float = 0.1,
        dir_var_shape: float = 2.0,
        alpha: float = 1.0,
    ) -> "NiwPrior":
        """Data-driven defaults: mu0 = sample mean, psi = psi_scale * diag of the
        empirical covariance, directional prior mean ``dir_var_mean`` rad^2."""
        X = np.asarray(positions, dtype=float)
        if X.ndim != 2 or X.shape[0] < 2:
            raise UsageError("need an N x d position array with N >= 2")
        d = X.shape[1]
        var = np.var(X, axis=0, ddof=1)
        var = np.where(var > 1e-12, var, np.maximum(var.mean(), 1e-6))
        return cls(
            mu0_pos=X.mean(axis=0),
            kappa=kappa,
            nu=float(nu) if nu is not None else d + 3.0,
            psi_pos=np.diag(var * psi_scale),
            dir_var_shape=dir_var_shape,
            dir_var_scale=dir_var_mean * (dir_var_shape - 1.0),
            alpha=alpha,
        )


# ---------------------------------------------------------------------------
# observation construction


def build_observations(demo: Demonstration, velocity_floor: Optional[float] = None) -> ObservationSet:
    """Normalize velocities into unit directions, one observation per sample.

    Samples slower than ``velocity_floor`` inherit the previous valid
    direction within their trajectory; leading slow samples are marked
    invalid (direction backfilled for completeness). The default floor is
    1e-6 times the median speed.
    """
    speeds = np.linalg.norm(demo.velocities, axis=1)
    if velocity_floor is None:
        velocity_floor = 1e-6 * float(np.median(speeds))
    directions = np.zeros_like(demo.positions)
    valid = np.zeros(demo.n_samples, dtype=bool)
    any_valid = False
    for sl in demo.trajectory_slices():
        last = None
        for i in range(sl.start, sl.stop):
            if speeds[i] >= velocity_floor and speeds[i] > 0.0:
                last = demo.velocities[i] / speeds[i]
            if last is not None:
                directions[i] = last
                valid[i] = True
                any_valid = True
        # leading slow samples: backfill so every row holds a unit vector
        fill = None
        for i in range(sl.stop - 1, sl.start - 1, -1):
            if valid[i]:
                fill = directions[i]
            elif fill is not None:
                directions[i] = fill
            else:
                directions[i, 0] = 1.0
    if not any_valid:
        raise UsageError("no sample exceeds the velocity floor: demonstration carries no directional signal")
    return ObservationSet(demo.positions.copy(), directions, valid, demo.velocities.copy())


# ---------------------------------------------------------------------------
# densities


def _gauss_logpdf(X: np.ndarray, mean: np.ndarray, chol: np.ndarray, logdet: float) -> np.ndarray:
    diff = np.atleast_2d(X) - mean
    sol = np.linalg.solve(chol, diff.T)
    maha = np.sum(sol * sol, axis=0)
    return -0.5 * (mean.shape[0] * _LOG_2PI + logdet + maha)


def _mvt_logpdf(X: np.ndarray, df: float, loc: np.ndarray, shape: np.ndarray) -> np.ndarray:
    d = loc.shape[0]
    chol = np.linalg.cholesky(shape)
    diff = np.atleast_2d(X) - loc
    sol = np.linalg.solve(chol, diff.T)
    maha = np.sum(sol * sol, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return (
        gammaln(0.5 * (df + d))
        - gammaln(0.5 * df)
        - 0.5 * d * math.log(df * math.pi)
        - 0.5 * logdet
        - 0.5 * (df + d) * np.log1p(maha / df)
    )


def _t_logpdf_scalar(y, df: float, scale_sq: float):
    y = np.asarray(y, dtype=float)
    return (
        gammaln(0.5 * (df + 1))
        - gammaln(0.5 * df)
        - 0.5 * math.log(df * math.pi * scale_sq)
        - 0.5 * (df + 1) * np.log1p(y * y / (df * scale_sq))
    )


def augmented_coordinate(obs, comp: MixtureComponent):
    """Component-relative deviation coordinate: geodesic distance from the
    observation's direction to the component's directional mean."""
    if comp.dir_mean is None:
        raise UsageError("component has no directional mean")
    oset = as_observation_set(obs)
    if oset.directions is None:
        raise UsageError("observations carry no directions")
    out = sphere.geodesic_distance(oset.directions, comp.dir_mean)
    return float(out[0]) if np.ndim(out) and isinstance(obs, AugmentedObservation) else out


def component_loglik(obs, comp: MixtureComponent):
    """Log density of the augmented state under the component.

    Block structure makes this the position Gaussian log density plus a 1-d
    zero-mean Gaussian log density of the deviation coordinate.
    """
    oset = as_observation_set(obs)
    out = _gauss_logpdf(oset.positions, comp.mean_pos, comp._chol, comp._logdet)
    if comp.dir_mean is not None:
        if oset.directions is None:
            raise UsageError("observations carry no directions")
        y = sphere.geodesic_distance(oset.directions, comp.dir_mean)
        out = out - 0.5 * (_LOG_2PI + math.log(comp.dir_var) + y * y / comp.dir_var)
    return float(out[0]) if isinstance(obs, AugmentedObservation) else out


# ---------------------------------------------------------------------------
# conjugate updates


def _niw_posterior(prior: NiwPrior, X: np.ndarray, psi: np.ndarray, mu0: np.ndarray):
    n = X.shape[0]
    xbar = X.mean(axis=0)
    kappa_n = prior.kappa + n
    mu_n = (prior.kappa * mu0 + n * xbar) / kappa_n
    centered = X - xbar
    scatter = centered.T @ centered
    dev = (xbar - mu0)[:, None]
    psi_n = psi + scatter + (prior.kappa * n / kappa_n) * (dev @ dev.T)
    return mu_n, kappa_n, prior.nu + n, psi_n


def _niw_log_marginal(prior: NiwPrior, X: np.ndarray, psi: np.ndarray, mu0: np.ndarray) -> float:
    n, d = X.shape
    _, kappa_n, nu_n, psi_n = _niw_posterior(prior, X, psi, mu0)
    s0, ld0 = np.linalg.slogdet(psi)
    s1, ld1 = np.linalg.slogdet(psi_n)
    if s0 <= 0 or s1 <= 0:
        raise NumericalError("scale matrix lost positive definiteness")
    return float(
        -0.5 * n * d * math.log(math.pi)
        + multigammaln(0.5 * nu_n, d)
        - multigammaln(0.5 * prior.nu, d)
        + 0.5 * prior.nu * ld0
        - 0.5 * nu_n * ld1
        + 0.5 * d * (math.log(prior.kappa) - math.log(kappa_n))
    )


def _dir_posterior(prior: NiwPrior, sq_sum: float, n: int) -> tuple[float, float]:
    return prior.dir_var_shape + 0.5 * n, prior.dir_var_scale + 0.5 * sq_sum


def _dir_log_marginal(prior: NiwPrior, y: np.ndarray) -> float:
    n = y.shape[0]
    a_n, b_n = _dir_posterior(prior, float(np.sum(y * y)), n)
    return float(
        gammaln(a_n)
        - gammaln(prior.dir_var_shape)
        + prior.dir_var_shape * math.log(prior.dir_var_scale)
        - a_n * math.log(b_n)
        - 0.5 * n * _LOG_2PI
    )


def _sample_invwishart(rng: np.random.Generator, df: float, scale: np.ndarray) -> np.ndarray:
    """Draw from the inverse-Wishart via a Bartlett factor of Wishart(df, scale^-1)."""
    d = scale.shape[0]
    chol_inv = np.linalg.cholesky(np.linalg.inv(scale))
    A = np.zeros((d, d))
    for i in range(d):
        A[i, i] = math.sqrt(rng.chisquare(df - i))
    rows, cols = np.tril_indices(d, -1)
    A[rows, cols] = rng.standard_normal(rows.shape[0])
    factor = chol_inv @ A
    W = factor @ factor.T
    return np.linalg.inv(W)


def posterior_sample_component(members, prior: NiwPrior, rng: np.random.Generator, weight: float = 1.0) -> MixtureComponent:
    """Draw component parameters from the conjugate posterior given members.

    The directional mean is the Fréchet mean of member directions; the
    position mean/covariance come from the NIW posterior and the directional
    variance from its Inverse-Gamma posterior.
    """
    oset = as_observation_set(members)
    if len(oset) == 0:
        raise UsageError("members must be nonempty")
    if oset.directions is None:
        raise UsageError("members carry no directions")
    n = len(oset)
    dir_mean = sphere.frechet_mean(oset.directions) if n > 1 else oset.directions[0].copy()
    y = sphere.geodesic_distance(oset.directions, dir_mean)
    a_n, b_n = _dir_posterior(prior, float(np.sum(y * y)), n)
    dir_var = b_n / rng.gamma(a_n)
    mu_n, kappa_n, nu_n, psi_n = _niw_posterior(prior, oset.positions, prior.psi_pos, prior.mu0_pos)
    cov = _sample_invwishart(rng, nu_n, psi_n)
    mean = mu_n + np.linalg.cholesky(cov / kappa_n) @ rng.standard_normal(prior.dim)
    return MixtureComponent(mean, cov, weight=weight, count=n, dir_mean=dir_mean, dir_var=float(dir_var))


def posterior_predictive_loglik(obs: AugmentedObservation, members, prior: NiwPrior) -> float:
    """Log marginal density of one observation under the component posterior.

    Position block: multivariate Student-t from the NIW posterior.
    Deviation coordinate: scaled Student-t from the Inverse-Gamma posterior,
    measured against the Fréchet mean of the member directions (the
    observation's own direction when there are no members).
    """
    x = obs.position[None, :]
    if members is None:
        mset, n = None, 0
    elif isinstance(members, ObservationSet):
        mset, n = members, len(members)
    else:
        members = list(members)
        n = len(members)
        mset = ObservationSet.from_observations(members) if n else None
    if n == 0:
        mu_n, kappa_n, nu_n, psi_n = prior.mu0_pos, prior.kappa, prior.nu, prior.psi_pos
        dir_mean = obs.direction.coords
        a_n, b_n = prior.dir_var_shape, prior.dir_var_scale
    else:
        mu_n, kappa_n, nu_n, psi_n = _niw_posterior(prior, mset.positions, prior.psi_pos, prior.mu0_pos)
        dir_mean = sphere.frechet_mean(mset.directions) if n > 1 else mset.directions[0]
        ym = sphere.geodesic_distance(mset.directions, dir_mean)
        a_n, b_n = _dir_posterior(prior, float(np.sum(ym * ym)), n)
    d = prior.dim
    df = nu_n - d + 1.0
    shape = psi_n * (kappa_n + 1.0) / (kappa_n * df)
    pos_part = float(_mvt_logpdf(x, df, mu_n, shape)[0])
    y = sphere.geodesic_distance(obs.direction.coords, dir_mean)
    dir_part = float(_t_logpdf_scalar(y, 2.0 * a_n, b_n / a_n))
    return pos_part + dir_part


def cluster_log_marginal(members, prior: NiwPrior) -> float:
    """Closed-form log marginal likelihood of a member set as one component.

    Position block integrates the NIW exactly; the directional block uses the
    plug-in Fréchet mean of the member directions.
    """
    oset = as_observation_set(members)
    if len(oset) == 0:
        raise UsageError("members must be nonempty")
    pos_part = _niw_log_marginal(prior, oset.positions, prior.psi_pos, prior.mu0_pos)
    n = len(oset)
    dir_mean = sphere.frechet_mean(oset.directions) if n > 1 else oset.directions[0]
    y = sphere.geodesic_distance(oset.directions, dir_mean)
    return pos_part + _dir_log_marginal(prior, y)


# ---------------------------------------------------------------------------
# likelihood models shared by the samplers


class DirectionalModel:
    """Position Gaussian plus directional deviation coordinate."""

    def __init__(self, prior: NiwPrior):
        self.prior = prior

    def check(self, obs: ObservationSet):
        if obs.directions is None:
            raise UsageError("directional likelihood requires observations with directions")
        if obs.dim != self.prior.dim:
            raise UsageError(f"prior dimension {self.prior.dim} does not match data dimension {obs.dim}")

    def loglik(self, comp: MixtureComponent, obs: ObservationSet, idx=None) -> np.ndarray:
        o = obs if idx is None else obs.subset(idx)
        return component_loglik(o, comp)

    def sample_component(self, obs: ObservationSet, idx, rng, weight=1.0) -> MixtureComponent:
        return posterior_sample_component(obs.subset(idx), self.prior, rng, weight=weight)

    def sample_prior_component(self, rng, weight=1.0) -> MixtureComponent:
        p = self.prior
        cov = _sample_invwishart(rng, p.nu, p.psi_pos)
        mean = p.mu0_pos + np.linalg.cholesky(cov / p.kappa) @ rng.standard_normal(p.dim)
        dir_var = p.dir_var_scale / rng.gamma(p.dir_var_shape)
        u = rng.standard_normal(p.dim)
        return MixtureComponent(mean, cov, weight=weight, count=1,
                                dir_mean=u / np.linalg.norm(u), dir_var=float(dir_var))

    def log_marginal(self, obs: ObservationSet, idx) -> float:
        return cluster_log_marginal(obs.subset(idx), self.prior)

    def mean_component(self, obs: ObservationSet, idx, weight=1.0) -> MixtureComponent:
        """Posterior-mean parameters (no sampling); used to finalize a state."""
        sub = obs.subset(idx)
        n = len(sub)
        p = self.prior
        mu_n, _, nu_n, psi_n = _niw_posterior(p, sub.positions, p.psi_pos, p.mu0_pos)
        cov = psi_n / (nu_n - p.dim - 1.0)
        dir_mean = sphere.frechet_mean(sub.directions) if n > 1 else sub.directions[0]
        y = sphere.geodesic_distance(sub.directions, dir_mean)
        a_n, b_n = _dir_posterior(p, float(np.sum(y * y)), n)
        return MixtureComponent(mu_n, cov, weight=weight, count=n,
                                dir_mean=dir_mean, dir_var=float(b_n / (a_n - 1.0)))


class EuclideanModel:
    """Plain Gaussian likelihood on a feature vector (baseline modes).

    ``features`` selects raw positions or concatenated position+velocity.
    """

    def __init__(self, prior: NiwPrior, features: str = "position"):
        if features not in ("position", "position+velocity"):
            raise UsageError(f"unknown feature mode {features!r}")
        self.prior = prior
        self.features = features

    def check(self, obs: ObservationSet):
        F = self.feature_matrix(obs)
        if F.shape[1] != self.prior.dim:
            raise UsageError(f"prior dimension {self.prior.dim} does not match feature dimension {F.shape[1]}")

    def feature_matrix(self, obs: ObservationSet) -> np.ndarray:
        if self.features == "position":
            return obs.positions
        if obs.velocities is None:
            raise UsageError("position+velocity features require observations with velocities")
        return np.hstack([obs.positions, obs.velocities])

    def loglik(self, comp: MixtureComponent, obs: ObservationSet, idx=None) -> np.ndarray:
        F = self.feature_matrix(obs)
        if idx is not None:
            F = F[np.asarray(idx)]
        return _gauss_logpdf(F, comp.mean_pos, comp._chol, comp._logdet)

    def sample_component(self, obs: ObservationSet, idx, rng, weight=1.0) -> MixtureComponent:
        F = self.feature_matrix(obs)[np.asarray(idx)]
        p = self.prior
        mu_n, kappa_n, nu_n, psi_n = _niw_posterior(p, F, p.psi_pos, p.mu0_pos)
        cov = _sample_invwishart(rng, nu_n, psi_n)
        mean = mu_n + np.linalg.cholesky(cov / kappa_n) @ rng.standard_normal(p.dim)
        return MixtureComponent(mean, cov, weight=weight, count=F.shape[0])

    def sample_prior_component(self, rng, weight=1.0) -> MixtureComponent:
        p = self.prior
        cov = _sample_invwishart(rng, p.nu, p.psi_pos)
        mean = p.mu0_pos + np.linalg.cholesky(cov / p.kappa) @ rng.standard_normal(p.dim)
        return MixtureComponent(mean, cov, weight=weight, count=1)

    def log_marginal(self, obs: ObservationSet, idx) -> float:
        F = self.feature_matrix(obs)[np.asarray(idx)]
        p = self.prior
        return _niw_log_marginal(p, F, p.psi_pos, p.mu0_pos)

    def mean_component(self, obs: ObservationSet, idx, weight=1.0) -> MixtureComponent:
        F = self.feature_matrix(obs)[np.asarray(idx)]
        p = self.prior
        mu_n, _, nu_n, psi_n = _niw_posterior(p, F, p.psi_pos, p.mu0_pos)
        return MixtureComponent(mu_n, psi_n / (nu_n - p.dim - 1.0), weight=weight, count=F.shape[0])


def make_model(likelihood: str, prior: NiwPrior):
    """Likelihood factory: 'directional' (default mode), 'position', 'position+velocity'."""
    if likelihood == "directional":
        return DirectionalModel(prior)
    if likelihood in ("position", "position+velocity"):
        return EuclideanModel(prior, features=likelihood)
    raise UsageError(f"unknown likelihood {likelihood!r}")
