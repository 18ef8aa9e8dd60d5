"""Hybrid MCMC inference for the direction-aware mixture.

One iteration runs a split-or-merge Metropolis-Hastings proposal followed by
a full instantiated-weight Gibbs sweep. All randomness is derived from a
master seed keyed by (iteration, purpose, index), so results are bit-identical
across runs and across worker counts: per-observation assignment draws use a
counter-based hash stream, everything else uses generators spawned from
``numpy.random.SeedSequence`` keys.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import UsageError
from .mixture import (
    MixtureComponent,
    NiwPrior,
    ObservationSet,
    as_observation_set,
    make_model,
)

# purpose codes for derived random streams
_P_INIT = 0
_P_WEIGHTS = 1
_P_PARAMS = 2
_P_ASSIGN = 3
_P_MOVE = 4
_P_SELECT = 5
_P_SCAN = 6
_P_MH = 7
_P_ACCEPT = 8


# ---------------------------------------------------------------------------
# deterministic random streams


def generator_for(seed: int, iteration: int, purpose: int, *extra: int) -> np.random.Generator:
    """A fresh generator keyed by (seed, iteration, purpose, *extra)."""
    key = (int(seed), int(iteration), int(purpose)) + tuple(int(e) for e in extra)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))


_GOLD = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def _mix64(h: np.ndarray) -> np.ndarray:
    h = h ^ (h >> np.uint64(30))
    h = h * _MIX1
    h = h ^ (h >> np.uint64(27))
    h = h * _MIX2
    h = h ^ (h >> np.uint64(31))
    return h


def index_uniforms(seed: int, iteration: int, purpose: int, indices, extra: int = 0) -> np.ndarray:
    """One uniform in [0, 1) per index, from a counter-based hash stream.

    The value depends only on (seed, iteration, purpose, extra, index), never
    on evaluation order, which is what makes assignment sampling independent
    of worker count and scheduling.
    """
    idx = np.asarray(indices, dtype=np.uint64)
    with np.errstate(over="ignore"):
        base = np.array([np.uint64(seed)], dtype=np.uint64)
        base = _mix64(base + _GOLD * np.uint64(iteration + 1))
        base = _mix64(base + _GOLD * np.uint64(purpose + 1))
        base = _mix64(base + _GOLD * np.uint64(extra + 1))
        h = _mix64(idx * _GOLD + base[0])
    return (h >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)


def _categorical_rows(logp: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF categorical draw per row of log-probabilities."""
    m = logp.max(axis=1, keepdims=True)
    p = np.exp(logp - m)
    cdf = np.cumsum(p, axis=1)
    t = u * cdf[:, -1]
    return np.sum(cdf < t[:, None], axis=1)


def _map_workers(fn, items, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# state types


@dataclass(frozen=True, eq=False)
class MixtureState:
    """Assignment vector plus the live components; labels are list positions."""

    assignments: np.ndarray
    components: tuple[MixtureComponent, ...]
    iteration: int = 0
    rng_seed: int = 0

    def __post_init__(self):
        z = np.asarray(self.assignments, dtype=np.int64)
        object.__setattr__(self, "assignments", z)
        object.__setattr__(self, "components", tuple(self.components))

    @property
    def n_components(self) -> int:
        return len(self.components)

    def counts(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.n_components)

    def validate(self, n_obs: Optional[int] = None) -> None:
        z = self.assignments
        if n_obs is not None and z.shape[0] != n_obs:
            raise UsageError(f"state covers {z.shape[0]} observations, expected {n_obs}")
        k = self.n_components
        if z.size and (z.min() < 0 or z.max() >= k):
            raise UsageError("assignment refers to a dead component")
        counts = self.counts()
        for label, comp in enumerate(self.components):
            if counts[label] < 1:
                raise UsageError(f"component {label} is empty")
            if comp.count != counts[label]:
                raise UsageError(f"component {label} count {comp.count} != assignment count {counts[label]}")
        total = sum(c.weight for c in self.components)
        if abs(total - 1.0) > 1e-9:
            raise UsageError(f"component weights sum to {total}, not 1")


@dataclass(frozen=True)
class ProposalOutcome:
    """Result of one split/merge attempt; log_acceptance is capped at 0."""

    kind: str
    accepted: bool
    log_acceptance: float
    targets: tuple[int, ...] = ()
    reason: Optional[str] = None


@dataclass(frozen=True)
class SamplerConfig:
    total_iterations: int = 100
    launch_scans: int = 5
    proposal_rate: int = 1
    seed: int = 0
    workers: int = 1
    state_selection: str = "last"

    def __post_init__(self):
        if self.total_iterations < 1:
            raise UsageError("total_iterations must be >= 1")
        if self.launch_scans < 1:
            raise UsageError("launch_scans must be >= 1")
        if self.proposal_rate < 0:
            raise UsageError("proposal_rate must be >= 0")
        if self.state_selection not in ("last", "map"):
            raise UsageError("state_selection must be 'last' or 'map'")
        if self.workers < 1:
            raise UsageError("workers must be >= 1")


# ---------------------------------------------------------------------------
# Gibbs sweep


def _sweep(state: MixtureState, obs: ObservationSet, model, workers: int = 1, n_frozen: int = 0) -> MixtureState:
    seed, it = state.rng_seed, state.iteration
    z = state.assignments
    n = len(obs)
    k = state.n_components
    counts = state.counts().astype(float)

    # phase 1: instantiated mixing weights. Occupied-count parameters (no
    # concentration spread over live components) keep the within-K stationary
    # partition mass proportional to prod Gamma(N_k), matching the
    # split/merge target; concentration enters through the split/merge ratio.
    w = generator_for(seed, it, _P_WEIGHTS).dirichlet(counts)

    # phase 2: component parameters, one independent stream per component
    member_idx = [np.flatnonzero(z == j) for j in range(k)]

    def _draw(j: int) -> MixtureComponent:
        return model.sample_component(obs, member_idx[j], generator_for(seed, it, _P_PARAMS, j), weight=w[j])

    comps = _map_workers(_draw, list(range(k)), workers)

    # phase 3: assignments against the phase-2 snapshot
    logp = np.empty((n, k))
    logw = np.log(w)

    def _col(j: int) -> None:
        logp[:, j] = logw[j] + model.loglik(comps[j], obs)

    _map_workers(_col, list(range(k)), workers)
    u = index_uniforms(seed, it, _P_ASSIGN, np.arange(n))
    z_new = _categorical_rows(logp, u)
    if n_frozen:
        z_new[:n_frozen] = z[:n_frozen]

    # drop emptied components, preserving label order
    new_counts = np.bincount(z_new, minlength=k)
    keep = np.flatnonzero(new_counts > 0)
    lookup = np.full(k, -1, dtype=np.int64)
    lookup[keep] = np.arange(keep.size)
    z_new = lookup[z_new]
    w_kept = np.array([w[j] for j in keep])
    w_kept = w_kept / w_kept.sum()
    comps_new = tuple(
        comps[j].with_weight_count(float(w_kept[i]), int(new_counts[j])) for i, j in enumerate(keep)
    )
    return MixtureState(z_new, comps_new, iteration=it + 1, rng_seed=seed)


def gibbs_sweep(
    state: MixtureState,
    obs,
    prior: NiwPrior,
    *,
    likelihood: str = "directional",
    workers: int = 1,
) -> MixtureState:
    """One full sweep: weights, parameters, then all assignments in parallel."""
    oset = as_observation_set(obs)
    state.validate(len(oset))
    model = make_model(likelihood, prior)
    model.check(oset)
    return _sweep(state, oset, model, workers=workers)


# ---------------------------------------------------------------------------
# restricted scans for split/merge proposals


def _restricted_scan(
    obs: ObservationSet,
    model,
    members: np.ndarray,
    side: np.ndarray,
    fixed_extra: Optional[np.ndarray],
    seed: int,
    it: int,
    scan: int,
    subkey: int,
    alpha: float,
    target: Optional[np.ndarray] = None,
):
    """One restricted sweep of `members` over two scratch components.

    Side-0 parameters are drawn from its current members plus ``fixed_extra``
    rows (frozen points that stay attached to the original label). With
    ``target`` given, no sampling happens: the returned log-probability is
    that of producing ``target`` in this scan. Returns (side, comps, logq).
    """
    idx0 = members[side == 0]
    idx1 = members[side == 1]
    if fixed_extra is not None and fixed_extra.size:
        idx0_fit = np.concatenate([fixed_extra, idx0])
    else:
        idx0_fit = idx0
    comps = []
    for s, idx in ((0, idx0_fit), (1, idx1)):
        rng = generator_for(seed, it, _P_SCAN, subkey, scan, s)
        comps.append(model.sample_component(obs, idx, rng) if idx.size else model.sample_prior_component(rng))
    n0 = idx0_fit.size
    n1 = idx1.size
    w = generator_for(seed, it, _P_SCAN, subkey, scan, 2).dirichlet([n0 + alpha / 2.0, n1 + alpha / 2.0])
    logp = np.stack(
        [
            math.log(w[0]) + model.loglik(comps[0], obs, members),
            math.log(w[1]) + model.loglik(comps[1], obs, members),
        ],
        axis=1,
    )
    norm = logsumexp(logp, axis=1)
    if target is None:
        u = index_uniforms(seed, it, _P_SCAN, members, extra=subkey * 1024 + scan)
        new_side = _categorical_rows(logp, u)
    else:
        new_side = target
    # the scan proposes an unordered two-way partition: both side labelings
    # realize it, so the proposal probability sums over the flip
    rows = np.arange(members.size)
    chosen = float(np.sum(logp[rows, new_side] - norm))
    flipped = float(np.sum(logp[rows, 1 - new_side] - norm))
    return new_side, comps, float(np.logaddexp(chosen, flipped))


def _crp_split_gain(alpha: float, n1: int, n2: int) -> float:
    return math.log(alpha) + gammaln(n1) + gammaln(n2) - gammaln(n1 + n2)


def _launch_coords(obs: ObservationSet, model, members: np.ndarray) -> np.ndarray:
    """Coordinates the launch init measures distances in: per-dimension
    whitened features, plus raw unit directions for the directional model.

    Directions stay unwhitened: they already live on the unit scale (chord
    distance tracks the angle), and dividing by a tiny spread would turn
    pure noise into the dominant coordinate."""
    if hasattr(model, "feature_matrix"):
        F = model.feature_matrix(obs)[members]
        std = F.std(axis=0)
        return F / np.where(std > 1e-12, std, 1.0)
    P = obs.positions[members]
    std = P.std(axis=0)
    return np.hstack([P / np.where(std > 1e-12, std, 1.0), obs.directions[members]])


def _launch_init(obs: ObservationSet, model, members: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Anchored two-way initialization of a launch state.

    A uniform 50/50 assignment of a large member set almost never escapes
    toward the real sub-structure within a few restricted scans (parameters
    fitted to mixed halves are indistinguishable), so the init seeds two
    anchors, the second drawn proportional to squared distance from the
    first, and assigns everyone to the nearest anchor.
    """
    m = members.size
    coords = _launch_coords(obs, model, members)
    a1 = int(rng.integers(m))
    d2 = np.sum((coords - coords[a1]) ** 2, axis=1)
    total = float(d2.sum())
    if total <= 0.0:
        return rng.integers(0, 2, size=m).astype(np.int64)
    a2 = int(rng.choice(m, p=d2 / total))
    d2b = np.sum((coords - coords[a2]) ** 2, axis=1)
    return (d2b < d2).astype(np.int64)


def _closest_pair(comps, candidates) -> tuple[int, int]:
    """Pair of candidate labels with minimal distance between position means,
    ties broken by label order."""
    best = None
    for ii in range(len(candidates)):
        for jj in range(ii + 1, len(candidates)):
            a, b = candidates[ii], candidates[jj]
            dist = float(np.linalg.norm(comps[a].mean_pos - comps[b].mean_pos))
            if best is None or dist < best[0]:
                best = (dist, a, b)
    return best[1], best[2]


def propose_split(
    state: MixtureState,
    obs,
    prior: NiwPrior,
    config: SamplerConfig,
    *,
    likelihood: str = "directional",
    model=None,
    n_frozen: int = 0,
    subkey: int = 0,
) -> tuple[MixtureState, ProposalOutcome]:
    """Split one component in two via restricted-scan launch states.

    The component is chosen uniformly among those with at least two movable
    members. Acceptance compares the collapsed posterior mass of the split
    against the merged cluster, with the final restricted scan supplying the
    forward proposal probability; merging back is unique, so the reverse
    proposal probability is 1.
    """
    oset = as_observation_set(obs)
    if model is None:
        model = make_model(likelihood, prior)
    seed, it = state.rng_seed, state.iteration
    z = state.assignments
    movable = [np.flatnonzero(z[n_frozen:] == j) + n_frozen for j in range(state.n_components)]
    eligible = [j for j in range(state.n_components) if movable[j].size >= 2]
    rng_sel = generator_for(seed, it, _P_SELECT, subkey)
    if not eligible:
        return state, ProposalOutcome("split", False, -np.inf, (), "no component with two movable members")
    c = int(eligible[rng_sel.integers(len(eligible))])
    members = movable[c]
    frozen_here = np.flatnonzero(z[:n_frozen] == c) if n_frozen else np.empty(0, dtype=np.int64)

    side = _launch_init(oset, model, members, rng_sel)
    for scan in range(config.launch_scans):
        side, _, _ = _restricted_scan(oset, model, members, side, frozen_here, seed, it, scan, subkey, prior.alpha)
    side, comps2, logq = _restricted_scan(
        oset, model, members, side, frozen_here, seed, it, config.launch_scans, subkey, prior.alpha
    )
    keep_idx = members[side == 0]
    move_idx = members[side == 1]
    if keep_idx.size + frozen_here.size == 0 or move_idx.size == 0:
        return state, ProposalOutcome("split", False, -np.inf, (c,), "degenerate split")

    all_c = np.sort(np.concatenate([frozen_here, members]))
    stay = np.sort(np.concatenate([frozen_here, keep_idx]))
    log_target = (
        _crp_split_gain(prior.alpha, stay.size, move_idx.size)
        + model.log_marginal(oset, stay)
        + model.log_marginal(oset, move_idx)
        - model.log_marginal(oset, all_c)
    )

    # candidate state, assembled up front so the reverse-selection term can
    # inspect it
    z_new = z.copy()
    new_label = state.n_components
    z_new[move_idx] = new_label
    comps = list(state.components)
    w_parent = comps[c].weight
    frac = move_idx.size / (stay.size + move_idx.size)
    comps[c] = comps2[0].with_weight_count(w_parent * (1.0 - frac), stay.size)
    comps.append(comps2[1].with_weight_count(w_parent * frac, move_idx.size))

    # selection-probability correction (exact reversibility): this split was
    # one of E equally likely choices, while the reverse merge picks its pair
    # deterministically and can only undo the split when (c, new) is the
    # closest pair. Frozen-label mode keeps the plain heuristic ratio.
    log_select = 0.0
    if n_frozen == 0:
        log_select = math.log(len(eligible))
        if _closest_pair(comps, list(range(len(comps)))) != tuple(sorted((c, new_label))):
            return state, ProposalOutcome("split", False, -np.inf, (c,), "reverse merge would not select this pair")

    log_acc = min(0.0, log_target - logq + log_select)
    u = generator_for(seed, it, _P_ACCEPT, subkey).random()
    if math.log(u) >= log_acc:
        return state, ProposalOutcome("split", False, log_acc, (c,))
    new_state = MixtureState(z_new, tuple(comps), iteration=it, rng_seed=seed)
    return new_state, ProposalOutcome("split", True, log_acc, (c, new_label))


def propose_merge(
    state: MixtureState,
    obs,
    prior: NiwPrior,
    config: SamplerConfig,
    *,
    likelihood: str = "directional",
    model=None,
    n_frozen: int = 0,
    subkey: int = 0,
) -> tuple[MixtureState, ProposalOutcome]:
    """Merge the two closest components (Euclidean distance between position
    means, ties by label order).

    The reverse move is a hypothetical split: a launch state is built over the
    union exactly as a split would, and the probability that one final scan
    reproduces the current two-way partition enters the acceptance ratio.
    """
    oset = as_observation_set(obs)
    if model is None:
        model = make_model(likelihood, prior)
    seed, it = state.rng_seed, state.iteration
    z = state.assignments
    if n_frozen:
        has_frozen = np.zeros(state.n_components, dtype=bool)
        labels_frozen = np.unique(z[:n_frozen])
        has_frozen[labels_frozen] = True
        candidates = [j for j in range(state.n_components) if not has_frozen[j]]
    else:
        candidates = list(range(state.n_components))
    if len(candidates) < 2:
        return state, ProposalOutcome("merge", False, -np.inf, (), "fewer than two mergeable components")

    a, b = _closest_pair(state.components, candidates)
    idx_a = np.flatnonzero(z == a)
    idx_b = np.flatnonzero(z == b)
    union = np.sort(np.concatenate([idx_a, idx_b]))

    rng_sel = generator_for(seed, it, _P_SELECT, subkey)
    side = _launch_init(oset, model, union, rng_sel)
    for scan in range(config.launch_scans):
        side, _, _ = _restricted_scan(oset, model, union, side, None, seed, it, scan, subkey, prior.alpha)
    current = np.where(z[union] == a, 0, 1).astype(np.int64)
    _, _, logq_rev = _restricted_scan(
        oset, model, union, side, None, seed, it, config.launch_scans, subkey, prior.alpha, target=current
    )
    log_target = (
        -_crp_split_gain(prior.alpha, idx_a.size, idx_b.size)
        + model.log_marginal(oset, union)
        - model.log_marginal(oset, idx_a)
        - model.log_marginal(oset, idx_b)
    )

    # candidate merged state
    z_new = z.copy()
    z_new[idx_b] = a
    z_new[z_new > b] -= 1
    merged = model.sample_component(oset, union,
                                    generator_for(seed, it, _P_SCAN, subkey, config.launch_scans + 1, 3))
    comps = list(state.components)
    comps[a] = merged.with_weight_count(comps[a].weight + comps[b].weight, union.size)
    del comps[b]

    # reverse-selection correction: undoing this merge means a split that
    # picks the merged component uniformly among the then-eligible ones
    log_select = 0.0
    if n_frozen == 0:
        n_eligible = sum(
            1 for j in range(len(comps)) if int(np.sum(z_new == j)) >= 2
        )
        log_select = -math.log(n_eligible)

    log_acc = min(0.0, log_target + logq_rev + log_select)
    u = generator_for(seed, it, _P_ACCEPT, subkey).random()
    if math.log(u) >= log_acc:
        return state, ProposalOutcome("merge", False, log_acc, (a, b))
    new_state = MixtureState(z_new, tuple(comps), iteration=it, rng_seed=seed)
    return new_state, ProposalOutcome("merge", True, log_acc, (a, b))


# ---------------------------------------------------------------------------
# drivers


def partition_log_score(state: MixtureState, obs, prior: NiwPrior, *, likelihood: str = "directional") -> float:
    """Unnormalized log posterior mass of the state's partition: concentration
    and size terms plus per-component marginal likelihoods."""
    oset = as_observation_set(obs)
    model = make_model(likelihood, prior)
    z = state.assignments
    score = 0.0
    for j in range(state.n_components):
        idx = np.flatnonzero(z == j)
        score += math.log(prior.alpha) + float(gammaln(idx.size)) + model.log_marginal(oset, idx)
    return score


def _finalize(state: MixtureState) -> MixtureState:
    counts = state.counts()
    n = counts.sum()
    comps = tuple(c.with_weight_count(int(counts[j]) / n, int(counts[j])) for j, c in enumerate(state.components))
    return replace(state, components=comps)


def _run_loop(
    state: MixtureState,
    obs: ObservationSet,
    model,
    prior: NiwPrior,
    config: SamplerConfig,
    n_frozen: int,
    callback: Optional[Callable[[MixtureState, ProposalOutcome | None], None]],
) -> MixtureState:
    best_score, best_state = -np.inf, state
    track_map = config.state_selection == "map"
    outcome = None
    for _ in range(config.total_iterations):
        seed, it = state.rng_seed, state.iteration
        for attempt in range(config.proposal_rate):
            coin = generator_for(seed, it, _P_MOVE, attempt).random()
            if coin < 0.5:
                state, outcome = propose_split(
                    state, obs, prior, config, model=model, n_frozen=n_frozen, subkey=attempt
                )
            else:
                state, outcome = propose_merge(
                    state, obs, prior, config, model=model, n_frozen=n_frozen, subkey=attempt
                )
        state = _sweep(state, obs, model, workers=config.workers, n_frozen=n_frozen)
        if callback is not None:
            callback(state, outcome)
        if track_map:
            score = 0.0
            z = state.assignments
            for j in range(state.n_components):
                idx = np.flatnonzero(z == j)
                score += math.log(prior.alpha) + float(gammaln(idx.size)) + model.log_marginal(obs, idx)
            if score > best_score:
                best_score, best_state = score, state
    return _finalize(best_state if track_map else state)


def run(
    obs,
    prior: NiwPrior,
    config: SamplerConfig,
    *,
    likelihood: str = "directional",
    callback: Optional[Callable[[MixtureState, ProposalOutcome | None], None]] = None,
) -> MixtureState:
    """Cluster the observations with the mixed sampler, starting from K=1.

    Observations must all be valid (filter with ``ObservationSet.valid_subset``
    first). The returned state's component weights are normalized counts.
    """
    oset = as_observation_set(obs)
    if len(oset) < 1:
        raise UsageError("need at least one observation")
    if not np.all(oset.valid):
        raise UsageError("clustering input must contain only valid observations")
    model = make_model(likelihood, prior)
    model.check(oset)
    n = len(oset)
    seed = config.seed
    comp = model.sample_component(oset, np.arange(n), generator_for(seed, 0, _P_INIT), weight=1.0)
    state = MixtureState(np.zeros(n, dtype=np.int64), (comp,), iteration=0, rng_seed=seed)
    return _run_loop(state, oset, model, prior, config, n_frozen=0, callback=callback)


def run_incremental(
    previous: MixtureState,
    old_obs,
    new_obs,
    prior: NiwPrior,
    config: SamplerConfig,
    *,
    likelihood: str = "directional",
    callback: Optional[Callable[[MixtureState, ProposalOutcome | None], None]] = None,
) -> MixtureState:
    """Cluster a new batch while keeping the previous batch's labels frozen.

    New points start at their highest-likelihood existing component; sweeps
    resample only new points. Splits re-partition the new members of a
    component (frozen members keep their label); merges happen only between
    components made entirely of new points, so old labels never move.
    """
    old = as_observation_set(old_obs)
    new = as_observation_set(new_obs)
    previous.validate(len(old))
    if len(new) == 0:
        return previous
    if not (np.all(old.valid) and np.all(new.valid)):
        raise UsageError("clustering input must contain only valid observations")
    if new.dim != old.dim:
        raise UsageError("old and new observations have different dimensions")

    combined = ObservationSet(
        np.vstack([old.positions, new.positions]),
        None if old.directions is None else np.vstack([old.directions, new.directions]),
        np.concatenate([old.valid, new.valid]),
        None
        if old.velocities is None or new.velocities is None
        else np.vstack([old.velocities, new.velocities]),
    )
    model = make_model(likelihood, prior)
    model.check(combined)

    k = previous.n_components
    logp = np.empty((len(new), k))
    for j, comp in enumerate(previous.components):
        logp[:, j] = math.log(comp.weight) + model.loglik(comp, new)
    z_new = np.argmax(logp, axis=1)
    z = np.concatenate([previous.assignments, z_new])
    counts = np.bincount(z, minlength=k)
    n_total = len(combined)
    comps = tuple(
        c.with_weight_count(int(counts[j]) / n_total, int(counts[j])) for j, c in enumerate(previous.components)
    )
    state = MixtureState(z, comps, iteration=0, rng_seed=config.seed)
    return _run_loop(state, combined, model, prior, config, n_frozen=len(old), callback=callback)
