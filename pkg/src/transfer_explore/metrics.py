"""Mean Average Reward, AuC-MAR and Transfer Ratio."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .envs import SampledModel, Simulator
from .mdp import DeterministicPolicy, TabularMdp


@dataclass(frozen=True)
class MarCurve:
    points: tuple  # (step, mean, std) triples
    num_seeds: int

    @property
    def steps(self):
        return np.array([p[0] for p in self.points])

    @property
    def mean(self):
        return np.array([p[1] for p in self.points])

    @property
    def std(self):
        return np.array([p[2] for p in self.points])


def rollout_averages(policy: DeterministicPolicy, model: SampledModel, uniforms: np.ndarray) -> np.ndarray:
    return kernels.rollout_averages(
        np.ascontiguousarray(policy.action_of, dtype=np.int64),
        np.ascontiguousarray(uniforms, dtype=np.float64),
        *model.arrays(),
    )


def mar(policy: DeterministicPolicy, sim: Simulator, num_rollouts: int, horizon: int) -> float:
    """Mean over rollouts of the per-trajectory average reward.

    A trajectory ends on reaching a terminal state or after ``horizon`` steps.
    Draws come from ``sim.rng``.
    """
    if num_rollouts < 1 or horizon < 1:
        raise ValueError("num_rollouts and horizon must be positive")
    u = sim.rng.random((num_rollouts, horizon + 1))
    return float(np.mean(rollout_averages(policy, sim.model, u)))


def exact_mar(mdp: TabularMdp, policy: DeterministicPolicy, horizon: int) -> float:
    """Expected per-trajectory average reward, computed without sampling.

    ``g[t, s]`` is E[1/T | alive in s at step t], filled backwards from the
    horizon; the forward pass weighs each step's reward by it.
    """
    S = mdp.num_states
    idx = np.arange(S)
    P = mdp.transition[idx, policy.action_of]
    r = mdp.reward[idx, policy.action_of]
    term = mdp.terminal
    g = np.empty((horizon, S))
    g[horizon - 1] = 1.0 / horizon
    for t in range(horizon - 2, -1, -1):
        g[t] = P @ np.where(term, 1.0 / (t + 1), g[t + 1])
    alive = mdp.initial_distribution.copy()
    total = 0.0
    for t in range(horizon):
        total += float(np.sum(alive * r * g[t]))
        alive = (alive @ P) * ~term
    return total


def auc_mar_percent(curve, optimal_mar: float) -> float:
    """Rectangle-rule area under uniformly spaced checkpoints, as % of optimal."""
    if optimal_mar <= 0:
        raise ValueError("optimal_mar must be positive for a percentage")
    values = np.array([v for _, v in curve], dtype=np.float64)
    if values.size == 0:
        raise ValueError("empty curve")
    return float(100.0 * values.mean() / optimal_mar)


def transfer_ratio(auc_with: float, auc_without: float) -> float:
    """Relative AuC-MAR gain in percent."""
    if auc_without <= 0:
        raise ValueError("auc_without must be positive")
    return 100.0 * (auc_with - auc_without) / auc_without


def mean_std(values):
    """Mean and population standard deviation."""
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def aggregate(curves) -> MarCurve:
    """Pointwise mean and population std over per-seed ``[(step, mar), ...]`` lists."""
    curves = [list(c) for c in curves]
    steps = [s for s, _ in curves[0]]
    for c in curves[1:]:
        if [s for s, _ in c] != steps:
            raise ValueError("curves must share checkpoint steps")
    vals = np.array([[v for _, v in c] for c in curves])
    return MarCurve(
        tuple((int(s), float(m), float(d)) for s, m, d in zip(steps, vals.mean(axis=0), vals.std(axis=0))),
        len(curves),
    )


def write_curve_csv(curve: MarCurve, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "mean", "std"])
        for step, m, s in curve.points:
            w.writerow([step, repr(float(m)), repr(float(s))])


def write_table_csv(rows, header, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, float) else x for x in row])
