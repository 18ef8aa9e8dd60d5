"""Stable dynamical-system motion policies learned from demonstrations.

Pipeline: demonstrations are turned into position/direction observations, a
direction-aware Bayesian mixture is inferred by a hybrid Gibbs + split/merge
sampler, and a globally stable linear-parameter-varying velocity field is
fitted on top of the partition.
"""

from .benchmark import BenchmarkConfig, EvalReport, benchmark, gmm_baseline, learn_pipeline
from .dataio import load_trajectories, save_trajectories
from .errors import (
    DegenerateInputError,
    IntegrationError,
    NumericalError,
    ParseError,
    UsageError,
)
from .lpvds import LpvDsModel, OptConfig, RolloutTrace, evaluate, fit, mixing_weights, rollout
from .metrics import dtwd, edot, rmse
from .mixture import (
    AugmentedObservation,
    Demonstration,
    MixtureComponent,
    NiwPrior,
    ObservationSet,
    augmented_coordinate,
    build_observations,
    cluster_log_marginal,
    component_loglik,
    posterior_predictive_loglik,
    posterior_sample_component,
)
from .modelio import load_model, save_model
from .sampler import (
    MixtureState,
    ProposalOutcome,
    SamplerConfig,
    gibbs_sweep,
    propose_merge,
    propose_split,
    run,
    run_incremental,
)
from .sphere import (
    TangentVector,
    UnitVector,
    directional_variance,
    exp_map,
    frechet_mean,
    geodesic_distance,
    log_map,
    riemannian_covariance,
)

__version__ = "0.1.0"
