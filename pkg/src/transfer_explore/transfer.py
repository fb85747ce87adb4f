"""Bisimulation policy transfer, advantage lower bounds and their verifiers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .bisim import PairwiseMetric, state_metric
from .mdp import DeterministicPolicy, QFunction, TabularMdp, policy_evaluation

BOUND_ATOL = 1e-8


@dataclass(frozen=True, eq=False)
class TransferTable:
    """Per-target-state outcome of bisimulation transfer.

    ``advantage[s2, a2] = -d(s_match(s2), s2, a2)``: the bisimulation advantage
    before the per-state offset, which no consumer needs.
    """

    s_match: np.ndarray
    lower_bound: np.ndarray
    transferred_action: np.ndarray
    advantage: np.ndarray
    matched_value: np.ndarray

    @property
    def policy(self) -> DeterministicPolicy:
        return DeterministicPolicy(self.transferred_action)

    def save(self, path) -> None:
        np.savez(
            path,
            s_match=self.s_match,
            lower_bound=self.lower_bound,
            transferred_action=self.transferred_action,
            advantage=self.advantage,
            matched_value=self.matched_value,
        )

    @classmethod
    def load(cls, path) -> "TransferTable":
        with np.load(path, allow_pickle=False) as data:
            return cls(*(data[k].copy() for k in (
                "s_match", "lower_bound", "transferred_action", "advantage", "matched_value")))


def _d(metric):
    return metric.d if isinstance(metric, PairwiseMetric) else np.asarray(metric)


def compute_transfer(v1_star, metric, variant: str = "optimistic") -> TransferTable:
    """Match each target state to the source state with the best value lower bound."""
    d = _d(metric)
    v1 = np.asarray(v1_star, dtype=np.float64)
    if v1.shape != (d.shape[0],):
        raise ValueError("v1_star must have one value per source state")
    lb = v1[:, None] - state_metric(d, variant).dprime
    s_match = np.argmax(lb, axis=0)
    cols = np.arange(d.shape[1])
    matched = d[s_match, cols, :]
    return TransferTable(
        s_match=s_match,
        lower_bound=lb,
        transferred_action=np.argmin(matched, axis=1),
        advantage=-matched,
        matched_value=v1[s_match],
    )


class Violation(NamedTuple):
    kind: str
    index: tuple
    excess: float


def _slack(metric, slack):
    if slack is not None:
        return slack
    cfg = getattr(metric, "config", None)
    return (cfg.slack() if cfg is not None else 0.0) + BOUND_ATOL


def verify_value_bound(v1_star, q2_star, metric, slack=None) -> list:
    """Every ``(s1, s2, a2)`` where |V1*(s1) - Q2*(s2, a2)| exceeds d + slack."""
    d = _d(metric)
    q2 = q2_star.values if isinstance(q2_star, QFunction) else np.asarray(q2_star)
    gap = np.abs(np.asarray(v1_star)[:, None, None] - q2[None, :, :]) - d - _slack(metric, slack)
    return [Violation("value", tuple(int(i) for i in ix), float(gap[tuple(ix)])) for ix in np.argwhere(gap > 0)]


def verify_state_value_bound(v1_star, q2_star, metric, slack=None) -> list:
    """|V1*(s1) - V2*(s2)| <= d(s1, s2, pi2*(s2)) + slack, the greedy-action case."""
    d = _d(metric)
    q2 = q2_star.values if isinstance(q2_star, QFunction) else np.asarray(q2_star)
    pi2 = np.argmax(q2, axis=1)
    cols = np.arange(q2.shape[0])
    gap = (
        np.abs(np.asarray(v1_star)[:, None] - q2.max(axis=1)[None, :])
        - d[:, cols, pi2]
        - _slack(metric, slack)
    )
    return [Violation("state_value", tuple(int(i) for i in ix), float(gap[tuple(ix)])) for ix in np.argwhere(gap > 0)]


def advantage_offset(q2_star, transfer: TransferTable, metric) -> np.ndarray:
    """beta(s2) = d(s_match, s2, pi2*(s2)); needs the true target optimum."""
    d = _d(metric)
    q2 = q2_star.values if isinstance(q2_star, QFunction) else np.asarray(q2_star)
    cols = np.arange(q2.shape[0])
    return d[transfer.s_match, cols, np.argmax(q2, axis=1)]


def verify_advantage_bound(q2_star, transfer: TransferTable, metric, slack=None) -> list:
    """Check A2* >= -d(s_match, ., .) - beta - slack and that the transferred
    action maximises the bisimulation advantage."""
    q2 = q2_star.values if isinstance(q2_star, QFunction) else np.asarray(q2_star)
    beta = advantage_offset(q2, transfer, metric)
    # the offset enters through two value bounds, so the slack does too
    tol = 2 * _slack(metric, slack)
    true_adv = q2 - q2.max(axis=1, keepdims=True)
    bisim_adv = transfer.advantage - beta[:, None]
    gap = bisim_adv - true_adv - tol
    out = [Violation("advantage", tuple(int(i) for i in ix), float(gap[tuple(ix)])) for ix in np.argwhere(gap > 0)]
    best = np.argmax(bisim_adv, axis=1)
    for s2 in np.flatnonzero(best != transfer.transferred_action):
        out.append(Violation("argmax", (int(s2),), float(bisim_adv[s2, best[s2]] - bisim_adv[s2, transfer.transferred_action[s2]])))
    return out


def q_init_from_transfer(
    target: TabularMdp,
    transfer: TransferTable,
    tolerance: float = 1e-9,
    mode: str = "policy",
) -> QFunction:
    """Initial Q-table for transfer-by-initialisation.

    ``mode="policy"`` evaluates the transferred policy exactly in the target;
    ``mode="lower_bound"`` uses V1*(s_match) - d(s_match, s2, a2), the value
    lower bound, instead.
    """
    if mode == "policy":
        return policy_evaluation(target, transfer.policy, tolerance)
    if mode == "lower_bound":
        return QFunction(transfer.matched_value[:, None] + transfer.advantage)
    raise ValueError(f"unknown q-init mode {mode!r}")
