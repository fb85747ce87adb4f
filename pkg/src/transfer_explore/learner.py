"""Tabular Q-learning with a pluggable behavioural policy."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from ._backend import kernels
from .envs import Simulator
from .explore import STRATEGIES, StrategyConfig, default_config, uses_transfer
from .mdp import QFunction, ValidationError, greedy_policy, value_iteration
from .metrics import auc_mar_percent, exact_mar, rollout_averages

UNIFORMS_PER_STEP = 5


@dataclass(frozen=True)
class LearnConfig:
    max_steps: int = 50000
    eval_every: int = None  # None: max_steps // 100
    eval_rollouts: int = 20
    eval_horizon: int = 200
    seed: int = 0
    # training episodes also restart after this many steps; 0 disables it
    episode_limit: int = 0
    # None: take the strategy's tuned rate / the MDP's discount
    learning_rate: float = None
    discount: float = None

    def __post_init__(self):
        if self.eval_every is None:
            object.__setattr__(self, "eval_every", max(self.max_steps // 100, 1))
        if min(self.max_steps, self.eval_every, self.eval_rollouts, self.eval_horizon) < 1:
            raise ValidationError("step counts and rollout settings must be positive")
        if self.episode_limit < 0:
            raise ValidationError("episode_limit must be nonnegative")
        if self.max_steps % self.eval_every:
            raise ValidationError("eval_every must divide max_steps")
        if self.learning_rate is not None and not 0 <= self.learning_rate <= 1:
            raise ValidationError("learning_rate must lie in [0, 1]")
        if self.discount is not None and not 0 <= self.discount < 1:
            raise ValidationError("discount must lie in [0, 1)")


@dataclass
class RunResult:
    mar_checkpoints: list
    final_q: QFunction
    auc_mar_percent: float
    seed: int
    strategy: str = ""
    optimal_mar: float = float("nan")
    counts: np.ndarray = field(default=None, repr=False)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "mar"])
            for step, value in self.mar_checkpoints:
                w.writerow([step, repr(float(value))])

    def summary(self) -> dict:
        return {
            "strategy": self.strategy,
            "seed": self.seed,
            "auc_mar_percent": self.auc_mar_percent,
            "optimal_mar": self.optimal_mar,
            "final_mar": self.mar_checkpoints[-1][1],
            "checkpoints": len(self.mar_checkpoints),
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True)


def optimal_mar(mdp, horizon: int) -> float:
    """MAR of the optimal policy, computed exactly."""
    return exact_mar(mdp, greedy_policy(value_iteration(mdp)), horizon)


def seed_streams(seed: int):
    """Independent (training, evaluation) generators split from one seed."""
    train, evaluation = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(train), np.random.default_rng(evaluation)


def q_learning_run(
    sim: Simulator,
    strategy: str,
    learn_config: LearnConfig = LearnConfig(),
    strategy_config: StrategyConfig = None,
    transfer=None,
    q_init=None,
    optimal: float = None,
) -> RunResult:
    """Run ``max_steps`` environment steps of Q-learning.

    MAR of the greedy policy is measured at step 0 and after every
    ``eval_every`` steps on a separate evaluation stream. All randomness
    derives from ``learn_config.seed``; the simulator supplies the model only.
    """
    if strategy not in STRATEGIES:
        raise ValidationError(f"unknown strategy {strategy!r}")
    cfg = strategy_config or default_config(strategy)
    mdp = sim.mdp
    model = sim.model
    S, A = mdp.num_states, mdp.num_actions
    if uses_transfer(strategy):
        if transfer is None:
            raise ValidationError(f"strategy {strategy!r} needs a transfer table")
        adv = np.ascontiguousarray(transfer.advantage, dtype=np.float64)
        if adv.shape != (S, A):
            raise ValidationError("transfer table does not match the target MDP")
    else:
        adv = np.zeros((S, A))
    if q_init is None:
        q = np.zeros((S, A))
    else:
        q = np.array(q_init.values if isinstance(q_init, QFunction) else q_init, dtype=np.float64)
        if q.shape != (S, A):
            raise ValidationError("q_init does not match the MDP")
    q = np.ascontiguousarray(q)
    counts = np.zeros((S, A), dtype=np.int64)
    pursuit = np.full((S, A), 1.0 / A)
    lr = cfg.learning_rate if learn_config.learning_rate is None else learn_config.learning_rate
    gamma = mdp.discount if learn_config.discount is None else learn_config.discount
    anneal = 1 if cfg.extra_anneal == "temperature" else 0

    train_rng, eval_rng = seed_streams(learn_config.seed)
    state = int(model.init_idx[np.searchsorted(model.init_cum, train_rng.random(), side="right").clip(max=len(model.init_cum) - 1)])

    def evaluate():
        u = eval_rng.random((learn_config.eval_rollouts, learn_config.eval_horizon + 1))
        return float(np.mean(rollout_averages(greedy_policy(q), model, u)))

    checkpoints = [(0, evaluate())]
    step = 0
    ep = 0
    while step < learn_config.max_steps:
        u = train_rng.random((learn_config.eval_every, UNIFORMS_PER_STEP))
        state, ep = kernels.train_segment(
            q, counts, pursuit, adv, u, state, ep, learn_config.episode_limit, step, *model.arrays(),
            STRATEGIES[strategy], cfg.epsilon, cfg.epsilon_bisim, cfg.temperature,
            cfg.pursuit_beta, cfg.mbie_beta, lr, gamma, cfg.extra_tau0, cfg.extra_alpha, anneal,
        )
        step += learn_config.eval_every
        checkpoints.append((step, evaluate()))

    if optimal is None:
        optimal = optimal_mar(mdp, learn_config.eval_horizon)
    auc = auc_mar_percent(checkpoints, optimal) if optimal > 0 else float("nan")
    return RunResult(
        mar_checkpoints=checkpoints,
        final_q=QFunction(q.copy()),
        auc_mar_percent=auc,
        seed=learn_config.seed,
        strategy=strategy,
        optimal_mar=optimal,
        counts=counts,
    )


def learn_config_dict(cfg: LearnConfig) -> dict:
    return asdict(cfg)
