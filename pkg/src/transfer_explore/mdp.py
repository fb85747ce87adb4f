"""Finite MDPs and exact dynamic-programming solvers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

STOCHASTIC_ATOL = 1e-9


class ValidationError(ValueError):
    """Raised when an input violates a structural invariant."""


@dataclass(frozen=True, eq=False)
class TabularMdp:
    """A finite MDP with expected rewards R(s, a) and absorbing terminals.

    ``transition[s, a]`` is the next-state distribution, ``reward[s, a]`` the
    expected immediate reward. Terminal states must self-loop with zero reward
    so that solvers need no special casing.
    """

    transition: np.ndarray
    reward: np.ndarray
    discount: float
    terminal: np.ndarray = None
    initial_distribution: np.ndarray = None
    name: str = ""

    def __post_init__(self):
        P = np.array(self.transition, dtype=np.float64)
        R = np.array(self.reward, dtype=np.float64)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValidationError(f"transition must have shape (S, A, S), got {P.shape}")
        S, A = P.shape[:2]
        if S < 1 or A < 1:
            raise ValidationError("MDP needs at least one state and one action")
        if R.shape != (S, A):
            raise ValidationError(f"reward must have shape {(S, A)}, got {R.shape}")
        if not 0.0 <= self.discount < 1.0:
            raise ValidationError(f"discount must lie in [0, 1), got {self.discount}")
        term = (
            np.zeros(S, dtype=bool)
            if self.terminal is None
            else np.array(self.terminal, dtype=bool)
        )
        if term.shape != (S,):
            raise ValidationError("terminal mask must have one entry per state")
        if self.initial_distribution is None:
            if term.all():
                raise ValidationError("every state is terminal")
            init = (~term).astype(np.float64) / (~term).sum()
        else:
            init = np.array(self.initial_distribution, dtype=np.float64)
        P.setflags(write=False)
        R.setflags(write=False)
        term.setflags(write=False)
        init.setflags(write=False)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "reward", R)
        object.__setattr__(self, "terminal", term)
        object.__setattr__(self, "initial_distribution", init)
        object.__setattr__(self, "discount", float(self.discount))
        self.validate()

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transition.shape[1]

    def validate(self):
        P, R = self.transition, self.reward
        if not (np.isfinite(P).all() and np.isfinite(R).all()):
            raise ValidationError("transition and reward entries must be finite")
        bad = np.argwhere(P < 0)
        if len(bad):
            s, a, _ = bad[0]
            raise ValidationError(f"negative transition probability at (state={s}, action={a})")
        sums = P.sum(axis=2)
        bad = np.argwhere(np.abs(sums - 1.0) > STOCHASTIC_ATOL)
        if len(bad):
            s, a = bad[0]
            raise ValidationError(
                f"transition row (state={s}, action={a}) sums to {float(sums[s, a])!r}, not 1"
            )
        for s in np.flatnonzero(self.terminal):
            if not np.all(P[s, :, s] == 1.0) or np.any(R[s] != 0.0):
                raise ValidationError(f"terminal state {s} must self-loop with zero reward")
        init = self.initial_distribution
        if init.shape != (self.num_states,) or np.any(init < 0):
            raise ValidationError("initial_distribution must be a probability vector over states")
        if abs(init.sum() - 1.0) > STOCHASTIC_ATOL:
            raise ValidationError("initial_distribution must sum to 1")
        if np.any(init[self.terminal] > 0):
            raise ValidationError("initial_distribution assigns mass to a terminal state")

    def content_bytes(self) -> bytes:
        """Canonical byte encoding, used for cache keys."""
        parts = [
            np.asarray(self.transition.shape, dtype=np.int64).tobytes(),
            self.transition.tobytes(),
            self.reward.tobytes(),
            np.float64(self.discount).tobytes(),
            self.terminal.tobytes(),
            self.initial_distribution.tobytes(),
        ]
        return b"".join(parts)


@dataclass(frozen=True, eq=False)
class DeterministicPolicy:
    action_of: np.ndarray

    def __post_init__(self):
        acts = np.array(self.action_of, dtype=np.int64)
        acts.setflags(write=False)
        object.__setattr__(self, "action_of", acts)

    def __len__(self):
        return len(self.action_of)

    def check(self, num_actions: int):
        if np.any(self.action_of < 0) or np.any(self.action_of >= num_actions):
            raise ValidationError(f"policy action outside [0, {num_actions})")


@dataclass(frozen=True, eq=False)
class QFunction:
    """A state-action value table plus solver bookkeeping."""

    values: np.ndarray
    converged: bool = True
    sweeps: int = 0
    residual: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def state_values(self) -> np.ndarray:
        return self.values.max(axis=1)

    def advantage(self) -> np.ndarray:
        return self.values - self.state_values[:, None]


def bellman_optimality(mdp: TabularMdp, q: np.ndarray) -> np.ndarray:
    """One application of the optimal Bellman operator to a Q-table."""
    return mdp.reward + mdp.discount * (mdp.transition @ q.max(axis=1))


def value_iteration(mdp: TabularMdp, tolerance: float = 1e-9, max_sweeps: int = 10000) -> QFunction:
    """Q-value iteration from the zero table.

    Stops once successive iterates differ by at most ``tolerance`` in sup-norm,
    which bounds the Bellman residual of the returned table by
    ``discount * tolerance``.
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    q = np.zeros((mdp.num_states, mdp.num_actions))
    change = np.inf
    sweeps = 0
    while sweeps < max_sweeps:
        new = bellman_optimality(mdp, q)
        change = float(np.max(np.abs(new - q)))
        q = new
        sweeps += 1
        if change <= tolerance:
            break
    residual = float(np.max(np.abs(bellman_optimality(mdp, q) - q)))
    return QFunction(q, converged=change <= tolerance, sweeps=sweeps, residual=residual)


def greedy_policy(q) -> DeterministicPolicy:
    """Greedy actions; ``np.argmax`` already breaks ties toward the lowest index."""
    values = q.values if isinstance(q, QFunction) else np.asarray(q)
    return DeterministicPolicy(np.argmax(values, axis=1))


def policy_evaluation(mdp: TabularMdp, policy: DeterministicPolicy, tolerance: float = 1e-9) -> QFunction:
    """Exact Q^pi by a linear solve of the fixed-policy Bellman equation."""
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    policy.check(mdp.num_actions)
    S = mdp.num_states
    idx = np.arange(S)
    P_pi = mdp.transition[idx, policy.action_of]
    r_pi = mdp.reward[idx, policy.action_of]
    v = np.linalg.solve(np.eye(S) - mdp.discount * P_pi, r_pi)
    q = mdp.reward + mdp.discount * (mdp.transition @ v)
    residual = float(np.max(np.abs(mdp.reward + mdp.discount * (mdp.transition @ q[idx, policy.action_of]) - q)))
    return QFunction(q, converged=residual <= tolerance, sweeps=0, residual=residual)
