"""Exact Kantorovich (earth mover) distance between finite distributions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .mdp import ValidationError

MARGINAL_ATOL = 1e-9
DUALITY_ATOL = 1e-8


class DualityError(RuntimeError):
    """The solver's dual certificate disagrees with its primal value."""


@dataclass(frozen=True, eq=False)
class TransportProblem:
    mu: np.ndarray
    nu: np.ndarray
    cost: np.ndarray

    def __post_init__(self):
        mu = _marginal(self.mu, "mu")
        nu = _marginal(self.nu, "nu")
        cost = np.array(self.cost, dtype=np.float64)
        if cost.shape != (len(mu), len(nu)):
            raise ValidationError(f"cost must have shape {(len(mu), len(nu))}, got {cost.shape}")
        if not np.isfinite(cost).all() or np.any(cost < 0):
            raise ValidationError("cost entries must be finite and nonnegative")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "cost", cost)


def _marginal(x, name):
    x = np.array(x, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValidationError(f"{name} is empty")
    if not np.isfinite(x).all() or np.any(x < 0):
        raise ValidationError(f"{name} must be a nonnegative finite vector")
    total = x.sum()
    if abs(total - 1.0) > MARGINAL_ATOL:
        raise ValidationError(f"{name} sums to {total!r}, not 1")
    return x / total


def kantorovich_with_plan(problem: TransportProblem):
    """Optimal value and an optimal plan.

    Zero-mass rows and columns are dropped before solving and come back as
    zero rows/columns of the plan. The optimal basis also yields dual
    potentials; after a c-transform they are exactly feasible and their
    objective is checked against the primal value.
    """
    mu, nu, cost = problem.mu, problem.nu, problem.cost
    rows = np.flatnonzero(mu > 0)
    cols = np.flatnonzero(nu > 0)
    sub = np.ascontiguousarray(cost[np.ix_(rows, cols)])
    value, sub_plan, u, v = kernels.transport(mu[rows], nu[cols], sub)
    v = np.min(sub - u[:, None], axis=0)
    dual = float(u @ mu[rows] + v @ nu[cols])
    if dual > value + DUALITY_ATOL:
        raise DualityError(f"dual objective {dual!r} exceeds primal value {value!r}")
    if value - dual > DUALITY_ATOL:
        raise DualityError(f"duality gap {value - dual!r}: plan is not optimal")
    plan = np.zeros_like(cost)
    plan[np.ix_(rows, cols)] = sub_plan
    return float(value), plan


def kantorovich(problem: TransportProblem) -> float:
    return kantorovich_with_plan(problem)[0]


def emd(mu, nu, cost) -> float:
    """Shorthand for ``kantorovich(TransportProblem(mu, nu, cost))``."""
    return kantorovich(TransportProblem(mu, nu, cost))
