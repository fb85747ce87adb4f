"""Bisimulation transfer and transfer-guided exploration for tabular MDPs."""

from ._backend import BACKEND
from .bisim import BisimConfig, PairwiseMetric, lax_bisim_metric
from .envs import EnvDescriptor, GridSpec, Simulator, build_rooms, build_taxi, grid_to_mdp, parse_grid, preset, render_grid
from .explore import StrategyConfig, default_config, select_action
from .learner import LearnConfig, RunResult, q_learning_run
from .mdp import DeterministicPolicy, QFunction, TabularMdp, ValidationError, greedy_policy, policy_evaluation, value_iteration
from .metrics import auc_mar_percent, mar, transfer_ratio
from .ot import TransportProblem, kantorovich
from .transfer import TransferTable, compute_transfer, q_init_from_transfer

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BisimConfig",
    "DeterministicPolicy",
    "EnvDescriptor",
    "GridSpec",
    "LearnConfig",
    "PairwiseMetric",
    "QFunction",
    "RunResult",
    "Simulator",
    "StrategyConfig",
    "TabularMdp",
    "TransferTable",
    "TransportProblem",
    "ValidationError",
    "auc_mar_percent",
    "build_rooms",
    "build_taxi",
    "compute_transfer",
    "default_config",
    "grid_to_mdp",
    "greedy_policy",
    "kantorovich",
    "lax_bisim_metric",
    "mar",
    "parse_grid",
    "policy_evaluation",
    "preset",
    "q_init_from_transfer",
    "q_learning_run",
    "render_grid",
    "select_action",
    "transfer_ratio",
    "value_iteration",
]
