"""Model file serialization: versioned JSON, validated on load, atomic on write.

Floats are emitted with Python's shortest-round-trip repr, so a write/read
cycle reproduces every value exactly and identical models produce identical
bytes.
"""

from __future__ import annotations

import json
from typing import Optional

import numpy as np

from .dataio import atomic_write_text
from .errors import UsageError
from .lpvds import LpvDsModel
from .mixture import MixtureComponent, NiwPrior
from .sampler import MixtureState

SCHEMA_VERSION = 1


def _component_record(comp: MixtureComponent, A: Optional[np.ndarray], b: Optional[np.ndarray]) -> dict:
    rec = {
        "weight": comp.weight,
        "count": comp.count,
        "mean_pos": comp.mean_pos.tolist(),
        "cov_pos": comp.cov_pos.flatten().tolist(),
        "dir_mean": None if comp.dir_mean is None else comp.dir_mean.tolist(),
        "dir_var": comp.dir_var,
    }
    if A is not None:
        rec["A"] = A.flatten().tolist()
        rec["b"] = b.tolist()
    return rec


def _component_from_record(rec: dict, d: int) -> MixtureComponent:
    return MixtureComponent(
        mean_pos=np.array(rec["mean_pos"], dtype=float),
        cov_pos=np.array(rec["cov_pos"], dtype=float).reshape(d, d),
        weight=rec["weight"],
        count=rec["count"],
        dir_mean=None if rec.get("dir_mean") is None else np.array(rec["dir_mean"], dtype=float),
        dir_var=rec.get("dir_var"),
    )


def _prior_record(prior: NiwPrior) -> dict:
    return {
        "mu0_pos": prior.mu0_pos.tolist(),
        "kappa": prior.kappa,
        "nu": prior.nu,
        "psi_pos": prior.psi_pos.flatten().tolist(),
        "dir_var_shape": prior.dir_var_shape,
        "dir_var_scale": prior.dir_var_scale,
        "alpha": prior.alpha,
    }


def _prior_from_record(rec: dict) -> NiwPrior:
    mu0 = np.array(rec["mu0_pos"], dtype=float)
    d = mu0.shape[0]
    return NiwPrior(
        mu0_pos=mu0,
        kappa=rec["kappa"],
        nu=rec["nu"],
        psi_pos=np.array(rec["psi_pos"], dtype=float).reshape(d, d),
        dir_var_shape=rec["dir_var_shape"],
        dir_var_scale=rec["dir_var_scale"],
        alpha=rec["alpha"],
    )


def model_payload(
    model: LpvDsModel,
    *,
    state: Optional[MixtureState] = None,
    prior: Optional[NiwPrior] = None,
    provenance: Optional[dict] = None,
) -> dict:
    b = model.b
    payload = {
        "schema_version": SCHEMA_VERSION,
        "d": model.dim,
        "K": model.K,
        "attractor": model.attractor.tolist(),
        "eps_stab": model.eps_stab,
        "components": [
            _component_record(c, model.A[k], b[k]) for k, c in enumerate(model.components)
        ],
        "provenance": provenance or {},
    }
    if prior is not None:
        payload["prior"] = _prior_record(prior)
    if state is not None:
        payload["mixture_state"] = {
            "assignments": state.assignments.tolist(),
            "iteration": state.iteration,
            "rng_seed": state.rng_seed,
            "components": [_component_record(c, None, None) for c in state.components],
        }
    return payload


def save_model(path: str, model: LpvDsModel, **kwargs) -> None:
    text = json.dumps(model_payload(model, **kwargs), sort_keys=True, separators=(",", ":"))
    atomic_write_text(path, text + "\n")


def load_model(path: str) -> tuple[LpvDsModel, dict]:
    """Read and validate a model file.

    Returns the model plus a bundle dict with ``prior`` (NiwPrior or None),
    ``state`` (MixtureState or None) and ``provenance``.
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise UsageError(f"model file is not valid JSON: {exc.msg}") from None
    version = payload.get("schema_version")
    if version != SCHEMA_VERSION:
        raise UsageError(f"unknown schema_version {version!r} (supported: {SCHEMA_VERSION})")
    d = int(payload["d"])
    k = int(payload["K"])
    recs = payload["components"]
    if len(recs) != k:
        raise UsageError(f"component count {len(recs)} does not match K={k}")
    comps = tuple(_component_from_record(rec, d) for rec in recs)
    A = np.stack([np.array(rec["A"], dtype=float).reshape(d, d) for rec in recs])
    attractor = np.array(payload["attractor"], dtype=float)
    model = LpvDsModel(A=A, components=comps, attractor=attractor, eps_stab=payload.get("eps_stab", 1e-6))
    b = model.b
    for idx, rec in enumerate(recs):
        if not np.allclose(np.array(rec["b"], dtype=float), b[idx], atol=1e-9):
            raise UsageError(f"component {idx}: stored offset is inconsistent with -A @ attractor")

    bundle = {"provenance": payload.get("provenance", {}), "prior": None, "state": None}
    if "prior" in payload:
        bundle["prior"] = _prior_from_record(payload["prior"])
    if "mixture_state" in payload:
        sp = payload["mixture_state"]
        state = MixtureState(
            np.array(sp["assignments"], dtype=np.int64),
            tuple(_component_from_record(rec, d) for rec in sp["components"]),
            iteration=sp.get("iteration", 0),
            rng_seed=sp.get("rng_seed", 0),
        )
        state.validate()
        bundle["state"] = state
    return model, bundle
