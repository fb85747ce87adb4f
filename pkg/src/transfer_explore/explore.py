"""Behavioural policies: classic baselines, transfer-guided sampling and composites."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import _pykernels as codes
from .mdp import ValidationError

STRATEGIES = {
    "eps_greedy_uniform": codes.EPS_GREEDY,
    "boltzmann": codes.BOLTZMANN,
    "mbie_eb": codes.MBIE_EB,
    "pursuit": codes.PURSUIT,
    "extra_eps_greedy": codes.EXTRA_EPS_GREEDY,
    "extra_plus_uniform": codes.EXTRA_PLUS_UNIFORM,
    "extra_plus_softmax": codes.EXTRA_PLUS_SOFTMAX,
    "extra_plus_pursuit": codes.EXTRA_PLUS_PURSUIT,
    "extra_plus_mbie": codes.EXTRA_PLUS_MBIE,
}
BASELINES = ("eps_greedy_uniform", "mbie_eb", "pursuit", "boltzmann")
# composite -> the vanilla strategy it augments
COMPOSITES = {
    "extra_plus_uniform": "eps_greedy_uniform",
    "extra_plus_mbie": "mbie_eb",
    "extra_plus_pursuit": "pursuit",
    "extra_plus_softmax": "boltzmann",
}
ANNEAL_MODES = ("temperature", "additive")


def uses_transfer(strategy: str) -> bool:
    return strategy.startswith("extra_")


@dataclass(frozen=True)
class StrategyConfig:
    epsilon: float = 0.5
    epsilon_bisim: float = 0.5
    temperature: float = 8.1
    pursuit_beta: float = 0.007
    mbie_beta: float = 0.005
    extra_alpha: float = 1e-6
    extra_tau0: float = 0.01
    extra_anneal: str = "temperature"
    learning_rate: float = 0.2

    def __post_init__(self):
        if not (0 <= self.epsilon <= 1 and 0 <= self.epsilon_bisim <= 1):
            raise ValidationError("epsilon values must lie in [0, 1]")
        if self.temperature <= 0 or self.extra_tau0 <= 0:
            raise ValidationError("temperatures must be positive")
        if not 0 <= self.pursuit_beta < 1:
            raise ValidationError("pursuit_beta must lie in [0, 1)")
        if self.mbie_beta < 0 or self.extra_alpha < 0:
            raise ValidationError("mbie_beta and extra_alpha must be nonnegative")
        if self.extra_anneal not in ANNEAL_MODES:
            raise ValidationError(f"extra_anneal must be one of {ANNEAL_MODES}")
        if not 0 <= self.learning_rate <= 1:
            raise ValidationError("learning_rate must lie in [0, 1]")

    def replace(self, **changes) -> "StrategyConfig":
        return dataclasses.replace(self, **changes)


_DEFAULTS = {
    "eps_greedy_uniform": dict(epsilon=0.5),
    "boltzmann": dict(temperature=8.1),
    "mbie_eb": dict(mbie_beta=0.005, epsilon=0.2),
    "pursuit": dict(pursuit_beta=0.007),
    "extra_eps_greedy": dict(epsilon=0.2, learning_rate=0.5),
    "extra_plus_uniform": dict(epsilon=0.5, epsilon_bisim=0.5),
    "extra_plus_softmax": dict(epsilon=0.5),
    "extra_plus_pursuit": dict(epsilon=0.5),
    "extra_plus_mbie": dict(epsilon=0.5),
}


def default_config(strategy: str, **overrides) -> StrategyConfig:
    """Tuned hyperparameters for ``strategy`` with optional overrides."""
    if strategy not in STRATEGIES:
        raise ValidationError(f"unknown strategy {strategy!r}; choose from {sorted(STRATEGIES)}")
    return StrategyConfig(**{**_DEFAULTS[strategy], **overrides})


def _softmax(x):
    z = np.exp(x - np.max(x))
    return z / z.sum()


def boltzmann_policy(q_row, temperature: float) -> np.ndarray:
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    return _softmax(np.asarray(q_row, dtype=np.float64) / temperature)


def mbie_eb_bonus(count: int, beta: float) -> float:
    """beta / sqrt(n); an unvisited pair is treated as visited once."""
    return beta / np.sqrt(max(int(count), 1))


def pursuit_update(pi_row, greedy_action: int, beta: float) -> np.ndarray:
    pi = np.array(pi_row, dtype=np.float64)
    target = np.zeros_like(pi)
    target[greedy_action] = 1.0
    return pi + beta * (target - pi)


def extra_temperature(global_step: int, config: StrategyConfig) -> float:
    if config.extra_anneal == "temperature":
        return config.extra_tau0 * (1.0 + config.extra_alpha * global_step)
    return config.extra_tau0


def extra_policy(state: int, transfer, global_step: int, config: StrategyConfig) -> np.ndarray:
    """Softmax over bisimulation advantages at the annealed temperature.

    In ``additive`` mode the per-state offset alpha * n is subtracted from the
    advantages instead; softmax ignores it, so the distribution never anneals.
    """
    adv = np.asarray(transfer.advantage[state], dtype=np.float64)
    if config.extra_anneal == "additive":
        adv = adv - config.extra_alpha * global_step
    return _softmax(adv / extra_temperature(global_step, config))


@dataclass
class ExplorationState:
    q: np.ndarray
    counts: np.ndarray = None
    pursuit_pi: np.ndarray = None
    global_step: int = 0
    rng: np.random.Generator = field(default_factory=np.random.default_rng)

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=np.float64)
        S, A = self.q.shape
        if self.counts is None:
            self.counts = np.zeros((S, A), dtype=np.int64)
        if self.pursuit_pi is None:
            self.pursuit_pi = np.full((S, A), 1.0 / A)


def _sample(probs, rng):
    return int(rng.choice(len(probs), p=probs))


def select_action(strategy: str, es: ExplorationState, transfer, state: int, config: StrategyConfig) -> int:
    """Draw one behavioural action.

    Count bonuses are applied to rewards at update time, so the MBIE-EB
    strategies select like their epsilon-greedy counterparts. Pursuit
    composites update ``es.pursuit_pi`` before sampling on exploit steps.
    """
    if strategy not in STRATEGIES:
        raise ValidationError(f"unknown strategy {strategy!r}")
    if uses_transfer(strategy) and transfer is None:
        raise ValidationError(f"strategy {strategy!r} needs a transfer table")
    rng = es.rng
    q_row = es.q[state]
    A = len(q_row)

    def greedy():
        return int(np.argmax(q_row))

    def guided():
        return _sample(extra_policy(state, transfer, es.global_step, config), rng)

    if strategy in ("eps_greedy_uniform", "mbie_eb"):
        return int(rng.integers(A)) if rng.random() < config.epsilon else greedy()
    if strategy == "boltzmann":
        return _sample(boltzmann_policy(q_row, config.temperature), rng)
    if strategy == "pursuit":
        return _sample(es.pursuit_pi[state], rng)
    explore = rng.random() < config.epsilon
    if strategy in ("extra_eps_greedy", "extra_plus_mbie"):
        return guided() if explore else greedy()
    if strategy == "extra_plus_uniform":
        if not explore:
            return greedy()
        return guided() if rng.random() < config.epsilon_bisim else int(rng.integers(A))
    if strategy == "extra_plus_softmax":
        return guided() if explore else _sample(boltzmann_policy(q_row, config.temperature), rng)
    # extra_plus_pursuit
    if explore:
        return guided()
    es.pursuit_pi[state] = pursuit_update(es.pursuit_pi[state], greedy(), config.pursuit_beta)
    return _sample(es.pursuit_pi[state], rng)
