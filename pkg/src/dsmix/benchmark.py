"""End-to-end learning pipeline, baselines, and the evaluation harness."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import metrics
from .errors import UsageError
from .lpvds import LpvDsModel, OptConfig, fit, rollout
from .mixture import (
    Demonstration,
    MixtureComponent,
    NiwPrior,
    ObservationSet,
    build_observations,
    make_model,
)
from .sampler import MixtureState, SamplerConfig, run

METHODS = ("damm", "gmm-p", "gmm-pv")
_METHOD_LIKELIHOOD = {"damm": "directional", "gmm-p": "position", "gmm-pv": "position+velocity"}


@dataclass(frozen=True)
class EvalReport:
    """Metrics and timings for one learned model against its demonstration."""

    rmse: float
    edot: float
    dtwd: float
    wall_time_cluster_s: float
    wall_time_fit_s: float
    K_final: int
    seed: int

    def __post_init__(self):
        if not (self.rmse >= 0 and self.dtwd >= 0 and 0 <= self.edot <= 2):
            raise UsageError("metrics out of range")
        if self.wall_time_cluster_s < 0 or self.wall_time_fit_s < 0:
            raise UsageError("wall times must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "rmse": self.rmse,
            "edot": self.edot,
            "dtwd": self.dtwd,
            "wall_time_cluster_s": self.wall_time_cluster_s,
            "wall_time_fit_s": self.wall_time_fit_s,
            "K_final": self.K_final,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class BenchmarkConfig:
    """Everything one benchmark trial needs; prior fields mirror the CLI flags."""

    method: str = "damm"
    seed: int = 0
    iterations: int = 100
    launch_scans: int = 5
    workers: int = 1
    state_selection: str = "last"
    alpha: float = 1.0
    kappa: float = 1.0
    nu: Optional[float] = None
    psi_scale: float = 0.2
    dir_var_mean: float = 0.1
    velocity_floor: Optional[float] = None
    opt: OptConfig = field(default_factory=OptConfig)
    rollout_dt: Optional[float] = None
    conv_tol: Optional[float] = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise UsageError(f"unknown method {self.method!r}; valid: {', '.join(METHODS)}")

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(
            total_iterations=self.iterations,
            launch_scans=self.launch_scans,
            seed=self.seed,
            workers=self.workers,
            state_selection=self.state_selection,
        )


def make_prior(cfg: BenchmarkConfig, obs: ObservationSet) -> NiwPrior:
    if cfg.method == "gmm-pv":
        feats = np.hstack([obs.positions, obs.velocities])
    else:
        feats = obs.positions
    return NiwPrior.from_data(
        feats,
        kappa=cfg.kappa,
        nu=cfg.nu,
        psi_scale=cfg.psi_scale,
        dir_var_mean=cfg.dir_var_mean,
        alpha=cfg.alpha,
    )


def position_block(comp: MixtureComponent, d: int) -> MixtureComponent:
    """Project a feature-space component onto its position block for mixing."""
    if comp.dim == d:
        return comp
    return MixtureComponent(
        comp.mean_pos[:d], comp.cov_pos[:d, :d], weight=comp.weight, count=comp.count
    )


def mixing_components(state: MixtureState, obs: ObservationSet, prior: NiwPrior,
                      method: str, d: int) -> tuple[MixtureComponent, ...]:
    """Point-estimate mixing model from the final partition.

    The sampler state carries one posterior draw per component; for the
    mixing function that draw's covariance noise blurs the responsibilities,
    so the blend uses posterior-mean parameters given the final assignments.
    """
    model = make_model(_METHOD_LIKELIHOOD[method], prior)
    z = state.assignments
    n = z.shape[0]
    comps = []
    for j in range(state.n_components):
        idx = np.flatnonzero(z == j)
        comps.append(position_block(model.mean_component(obs, idx, weight=idx.size / n), d))
    return tuple(comps)


def gmm_baseline(obs, prior: NiwPrior, config: SamplerConfig, variant: str = "position") -> MixtureState:
    """Run the same mixed sampler with a plain Gaussian likelihood.

    ``variant`` selects raw positions or concatenated position+velocity
    features; no directional augmentation is applied.
    """
    if variant not in ("position", "position+velocity"):
        raise UsageError(f"unknown baseline variant {variant!r}")
    return run(obs, prior, config, likelihood=variant)


def learn_pipeline(demo: Demonstration, cfg: BenchmarkConfig):
    """Cluster and fit one demonstration.

    Returns (model, state, observations, prior, timings) where timings holds
    the measured clustering and fit wall times in seconds.
    """
    obs = build_observations(demo, cfg.velocity_floor)
    valid, _ = obs.valid_subset()
    prior = make_prior(cfg, valid)
    t0 = time.perf_counter()
    state = run(valid, prior, cfg.sampler_config(), likelihood=_METHOD_LIKELIHOOD[cfg.method])
    wall_cluster = time.perf_counter() - t0
    mixing = mixing_components(state, valid, prior, cfg.method, demo.dim)
    t0 = time.perf_counter()
    model = fit(mixing, demo, cfg.opt)
    wall_fit = time.perf_counter() - t0
    return model, state, obs, prior, {"cluster": wall_cluster, "fit": wall_fit}


def reproduction_dtwd(model: LpvDsModel, demo: Demonstration, dt: Optional[float] = None,
                      conv_tol: Optional[float] = None) -> float:
    """Mean warped distance between each reference trajectory and a rollout
    from its starting point (capped at three times the reference length)."""
    dt = dt if dt is not None else demo.estimate_dt()
    if conv_tol is None:
        spread = np.linalg.norm(demo.positions - demo.attractor, axis=1).max()
        conv_tol = 1e-2 * float(spread)
    vals = []
    for sl in demo.trajectory_slices():
        ref = demo.positions[sl]
        trace = rollout(model, ref[0], dt, max_steps=3 * ref.shape[0], conv_tol=conv_tol)
        vals.append(metrics.dtwd(trace.states, ref))
    return float(np.mean(vals))


def benchmark(demo: Demonstration, cfg: BenchmarkConfig) -> EvalReport:
    """One timed trial: cluster, fit, score against the demonstration."""
    model, state, _, _, timings = learn_pipeline(demo, cfg)
    return EvalReport(
        rmse=metrics.rmse(model, demo),
        edot=metrics.edot(model, demo),
        dtwd=reproduction_dtwd(model, demo, cfg.rollout_dt, cfg.conv_tol),
        wall_time_cluster_s=timings["cluster"],
        wall_time_fit_s=timings["fit"],
        K_final=state.n_components,
        seed=cfg.seed,
    )
