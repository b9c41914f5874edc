from .base import COMMIT, EXPLOIT, EXPLORE, INITIALIZE, OraclePolicy, Policy, uniform_arm
from .elimination import (
    TensorElimination,
    build_rotated_actions,
    exploration_length,
    ridge_blocked,
    run_phase_schedule,
    xi_width,
)
from .ensemble import EnsemblePrior, EnsembleSampling, als_row_update, map_objective
from .epoch_greedy import EpochGreedy, exploit_length, init_length
from .ucb import UcbState, VectorizedUcb

__all__ = [
    "COMMIT",
    "EXPLOIT",
    "EXPLORE",
    "INITIALIZE",
    "OraclePolicy",
    "Policy",
    "uniform_arm",
    "TensorElimination",
    "build_rotated_actions",
    "exploration_length",
    "ridge_blocked",
    "run_phase_schedule",
    "xi_width",
    "EnsemblePrior",
    "EnsembleSampling",
    "als_row_update",
    "map_objective",
    "EpochGreedy",
    "exploit_length",
    "init_length",
    "UcbState",
    "VectorizedUcb",
]
