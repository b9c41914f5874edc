"""Stochastic low-rank tensor bandits: algebra, completion, policies, harness."""

from .completion import CompletionOptions, Observation, complete, power_iterate, spectral_initialize, u_statistic
from .config import ConfigError, ExperimentConfig, parse_config, parse_grid
from .environment import (
    Environment,
    RegretTrace,
    load_env,
    make_tucker_env,
    record_regret,
    stream,
    synth_env,
)
from .harness import RunSummary, aggregate, grid_search, run_experiment, welch_t
from .policies import (
    EnsemblePrior,
    EnsembleSampling,
    EpochGreedy,
    OraclePolicy,
    TensorElimination,
    VectorizedUcb,
)
from .tensor import (
    Arm,
    TuckerDecomp,
    dematricize,
    flat_offset,
    inner_product,
    load_tensor,
    marginal_multiply,
    matricize,
    norms,
    orthonormal_complement,
    save_tensor,
    truncated_svd_left,
    tucker_reconstruct,
    vectorize_blocked,
)

__version__ = "0.1.0"
