"""Command-line interface: learn, incremental, rollout, benchmark.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure. All
diagnostics go to standard error; results are JSON lines (plus the benchmark
summary table) on standard output. Every command taking --seed is fully
reproducible, including across --workers settings.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .benchmark import (
    METHODS,
    BenchmarkConfig,
    benchmark,
    learn_pipeline,
    position_block,
)
from .dataio import load_trajectories, save_series
from .errors import NumericalError, UsageError
from .lpvds import OptConfig, fit, mse_objective, rollout
from .mixture import build_observations, concat_demonstrations
from .modelio import load_model, save_model
from .sampler import run_incremental

WORKERS_ENV = "DSMIX_WORKERS"


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; the contract reserves 2 for
    # numerical failures, so remap usage problems to 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _parse_attractor(text):
    if text is None:
        return None
    try:
        return np.array([float(p) for p in text.split(",")], dtype=float)
    except ValueError:
        raise UsageError(f"cannot parse attractor {text!r}; expected comma-separated floats") from None


def _add_common_flags(p: _Parser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iters", type=int, default=100, help="sampler iterations")
    p.add_argument("--launch-scans", type=int, default=5)
    p.add_argument("--alpha", type=float, default=1.0, help="mixing concentration")
    p.add_argument("--nu", type=float, default=None, help="covariance degrees of freedom (default d+3)")
    p.add_argument("--kappa", type=float, default=1.0, help="prior mean strength")
    p.add_argument("--psi-scale", type=float, default=0.2, help="prior scale matrix factor")
    p.add_argument("--dir-var-prior", type=float, default=0.1, help="prior mean of the directional variance (rad^2)")
    p.add_argument("--velocity-floor", type=float, default=None)
    p.add_argument("--dt", type=float, default=None, help="sampling interval (required if the file lacks velocities)")
    p.add_argument("--attractor", type=str, default=None, metavar="x,y[,z]")
    p.add_argument("--workers", type=int, default=None, help=f"thread count (default: ${WORKERS_ENV} or CPU count)")
    p.add_argument("--record-timings", action="store_true",
                   help="store wall times in the model file (breaks byte-for-byte reproducibility)")


def _config_from_args(args, method=None) -> BenchmarkConfig:
    return BenchmarkConfig(
        method=method or getattr(args, "method", "damm"),
        seed=args.seed,
        iterations=args.iters,
        launch_scans=args.launch_scans,
        workers=args.workers if args.workers is not None else _default_workers(),
        alpha=args.alpha,
        kappa=args.kappa,
        nu=args.nu,
        psi_scale=args.psi_scale,
        dir_var_mean=args.dir_var_prior,
        velocity_floor=args.velocity_floor,
        opt=OptConfig(),
    )


def _provenance(args, cfg: BenchmarkConfig, demo, timings=None) -> dict:
    prov = {
        "seed": cfg.seed,
        "iterations": cfg.iterations,
        "launch_scans": cfg.launch_scans,
        "method": cfg.method,
        "alpha": cfg.alpha,
        "kappa": cfg.kappa,
        "nu": cfg.nu,
        "psi_scale": cfg.psi_scale,
        "dir_var_prior": cfg.dir_var_mean,
        "velocity_floor": cfg.velocity_floor,
        "dt_hint": demo.estimate_dt(),
        "wall_time_cluster_s": None,
        "wall_time_fit_s": None,
    }
    if timings is not None and args.record_timings:
        prov["wall_time_cluster_s"] = timings["cluster"]
        prov["wall_time_fit_s"] = timings["fit"]
    return prov


def cmd_learn(args) -> int:
    demo = load_trajectories(args.input, dt=args.dt, attractor=_parse_attractor(args.attractor))
    cfg = _config_from_args(args)
    model, state, _, prior, timings = learn_pipeline(demo, cfg)
    save_model(args.output, model, state=state, prior=prior,
               provenance=_provenance(args, cfg, demo, timings))
    print(json.dumps({
        "K": model.K,
        "J": mse_objective(model, demo),
        "wall_time_cluster_s": timings["cluster"],
        "wall_time_fit_s": timings["fit"],
        "seed": cfg.seed,
    }))
    return 0


def cmd_incremental(args) -> int:
    prev_model, bundle = load_model(args.model)
    if bundle["state"] is None or bundle["prior"] is None:
        raise UsageError("model file lacks the clustering state needed for incremental updates")
    prev_state, prior = bundle["state"], bundle["prior"]

    old_demo = load_trajectories(args.old_data, dt=args.dt, attractor=prev_model.attractor)
    new_demo = load_trajectories(args.new_data, dt=args.dt, attractor=prev_model.attractor)
    cfg = _config_from_args(args)
    old_valid, _ = build_observations(old_demo, cfg.velocity_floor).valid_subset()
    new_valid, _ = build_observations(new_demo, cfg.velocity_floor).valid_subset()
    prev_state.validate(len(old_valid))

    import time

    t0 = time.perf_counter()
    state = run_incremental(prev_state, old_valid, new_valid, prior, cfg.sampler_config())
    wall_cluster = time.perf_counter() - t0

    combined = concat_demonstrations(old_demo, new_demo,
                                     attractor=_parse_attractor(args.attractor))
    t0 = time.perf_counter()
    mixing = tuple(position_block(c, combined.dim) for c in state.components)
    model = fit(mixing, combined, cfg.opt)
    wall_fit = time.perf_counter() - t0

    timings = {"cluster": wall_cluster, "fit": wall_fit}
    save_model(args.output, model, state=state, prior=prior,
               provenance=_provenance(args, cfg, combined, timings))
    print(json.dumps({
        "K": model.K,
        "J": mse_objective(model, combined),
        "wall_time_cluster_s": wall_cluster,
        "wall_time_fit_s": wall_fit,
        "seed": cfg.seed,
    }))
    return 0


def cmd_rollout(args) -> int:
    model, bundle = load_model(args.model)
    dt = args.dt
    if dt is None:
        dt = bundle["provenance"].get("dt_hint")
    if dt is None:
        raise UsageError("no --dt given and the model file records no sampling interval")
    starts = []
    if args.start is not None:
        starts.append(_parse_attractor(args.start))
    elif args.data is not None:
        demo = load_trajectories(args.data, dt=args.dt)
        starts.extend(demo.positions[sl.start] for sl in demo.trajectory_slices())
    else:
        raise UsageError("give a start state with --start or demonstration data with --data")
    traces = [rollout(model, s, dt, max_steps=args.steps, conv_tol=args.tol) for s in starts]
    save_series(args.output, [(t.states, t.velocities) for t in traces])
    print(json.dumps({"converged": [t.converged for t in traces]}))
    return 0


def cmd_benchmark(args) -> int:
    import dataclasses

    demo = load_trajectories(args.input, dt=args.dt, attractor=_parse_attractor(args.attractor))
    base_cfg = _config_from_args(args, method=args.method)
    reports = []
    for i in range(args.seeds):
        reports.append(benchmark(demo, dataclasses.replace(base_cfg, seed=args.seed + i)))
    print(json.dumps([r.to_dict() for r in reports]))
    rows = []
    for name in ("rmse", "edot", "dtwd", "wall_time_cluster_s", "wall_time_fit_s", "K_final"):
        vals = np.array([getattr(r, name) for r in reports], dtype=float)
        rows.append(f"{name:>20}  {vals.mean():10.4f} +- {vals.std():8.4f}")
    print("\n".join(rows))
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="dsmix", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("learn", help="learn a stable motion policy from a trajectory file")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    _add_common_flags(p)
    p.add_argument("--method", choices=METHODS, default="damm")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("incremental", help="cluster a new batch against an existing model")
    p.add_argument("model")
    p.add_argument("old_data")
    p.add_argument("new_data")
    p.add_argument("-o", "--output", required=True)
    _add_common_flags(p)
    p.set_defaults(func=cmd_incremental)

    p = sub.add_parser("rollout", help="integrate a learned model and write the trace as CSV")
    p.add_argument("model")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--start", type=str, default=None, metavar="x,y[,z]")
    p.add_argument("--data", type=str, default=None, help="demonstration file supplying start points")
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--steps", type=int, default=10000)
    p.add_argument("--tol", type=float, default=1e-3)
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("benchmark", help="run the evaluation protocol over several seeds")
    p.add_argument("input")
    _add_common_flags(p)
    p.add_argument("--method", choices=METHODS, default="damm")
    p.add_argument("--seeds", type=int, default=5, help="number of consecutive seeds to run")
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"dsmix: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"dsmix: error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"dsmix: numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
