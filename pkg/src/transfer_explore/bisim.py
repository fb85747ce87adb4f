"""Restricted lax-bisimulation metric between a source and a target MDP.

The metric is indexed ``d[s1, s2, a2]`` and compares the source pair
``(s1, pi1*(s1))`` with the target pair ``(s2, a2)``. It is the least fixed
point of

    d(s1, s2, a2) = c_R |R1(s1, pi1*(s1)) - R2(s2, a2)|
                    + c_T W(d')(P1(s1, pi1*(s1)), P2(s2, a2))

where ``d'`` reduces ``d`` over target actions (min for the optimistic
variant, max for the pessimistic one) and ``W`` is the Kantorovich distance.
"""

from __future__ import annotations

import hashlib
import io
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._backend import kernels
from .mdp import DeterministicPolicy, TabularMdp, ValidationError, bellman_optimality

log = logging.getLogger(__name__)

VARIANTS = ("optimistic", "pessimistic")

# reference settings per target: (c_R, c_T, threshold, iterations)
REFERENCE = {
    "FourLargeRooms": (0.1, 0.9, 0.01, 5),
    "SixLargeRooms": (0.2, 0.9, 0.01, 5),
    "NineLargeRooms": (0.1, 0.9, 0.01, 5),
}
# re-tuned for transfer accuracy on the generated room layouts
TUNED = (1.0, 0.95, 1e-4, 100)


@dataclass(frozen=True)
class BisimConfig:
    c_R: float = 0.1
    c_T: float = 0.9
    threshold: float = 0.01
    max_iterations: int = 5
    variant: str = "optimistic"

    def __post_init__(self):
        if self.c_R < 0 or self.c_T < 0:
            raise ValidationError("c_R and c_T must be nonnegative")
        if self.threshold <= 0:
            raise ValidationError("threshold must be positive")
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be at least 1")
        if self.variant not in VARIANTS:
            raise ValidationError(f"variant must be one of {VARIANTS}")

    @classmethod
    def for_target(cls, name: str, **overrides) -> "BisimConfig":
        c_r, c_t, thr, iters = REFERENCE.get(name, REFERENCE["FourLargeRooms"])
        return cls(**{"c_R": c_r, "c_T": c_t, "threshold": thr, "max_iterations": iters, **overrides})

    @classmethod
    def tuned(cls, **overrides) -> "BisimConfig":
        c_r, c_t, thr, iters = TUNED
        return cls(**{"c_R": c_r, "c_T": c_t, "threshold": thr, "max_iterations": iters, **overrides})

    @classmethod
    def theory(cls, discount: float, threshold: float = 1e-9, max_iterations: int = 100000) -> "BisimConfig":
        """Reward/transport weights (1, discount) under which the value bounds hold."""
        return cls(1.0, discount, threshold, max_iterations, "pessimistic")

    def slack(self) -> float:
        """Distance from the truncated iterate to the fixed point (c_T < 1)."""
        if self.c_T >= 1:
            return np.inf
        return self.threshold / (1.0 - self.c_T)


@dataclass(frozen=True, eq=False)
class PairwiseMetric:
    d: np.ndarray
    iterations_run: int
    converged: bool
    sup_change_last: float
    config: BisimConfig = None
    history: tuple = ()

    @property
    def shape(self):
        return self.d.shape


@dataclass(frozen=True, eq=False)
class StateMetric:
    dprime: np.ndarray
    variant: str


def state_metric(metric, variant: str) -> StateMetric:
    d = metric.d if isinstance(metric, PairwiseMetric) else np.asarray(metric)
    return StateMetric(_reduce(d, variant), variant)


def _reduce(d, variant):
    if variant == "optimistic":
        return d.min(axis=2)
    if variant == "pessimistic":
        return d.max(axis=2)
    raise ValidationError(f"variant must be one of {VARIANTS}")


def _csr(rows):
    """CSR encoding of the positive entries of a stack of distributions."""
    ptr = [0]
    idx, prob = [], []
    for row in rows:
        nz = np.flatnonzero(row > 0)
        idx.extend(nz.tolist())
        prob.extend(row[nz].tolist())
        ptr.append(len(idx))
    return (
        np.asarray(ptr, dtype=np.int64),
        np.asarray(idx, dtype=np.int64),
        np.asarray(prob, dtype=np.float64),
    )


def check_optimal(mdp: TabularMdp, policy: DeterministicPolicy, atol: float = 1e-6):
    """Assert ``policy`` is greedy with respect to a near-fixed point of the Bellman operator."""
    from .mdp import value_iteration

    q = value_iteration(mdp, tolerance=1e-10).values
    idx = np.arange(mdp.num_states)
    gap = q.max(axis=1) - q[idx, policy.action_of]
    if np.any(gap > atol):
        s = int(np.argmax(gap))
        raise ValidationError(f"source policy is not optimal at state {s} (gap {gap[s]:.3g})")
    residual = np.max(np.abs(bellman_optimality(mdp, q) - q))
    if residual > atol:
        raise ValidationError("could not certify source policy optimality")


def lax_bisim_metric(
    source: TabularMdp,
    pi1_star: DeterministicPolicy,
    target: TabularMdp,
    config: BisimConfig = BisimConfig(),
    check_policy: bool = True,
) -> PairwiseMetric:
    """Fixed-point iteration from the zero metric (Jacobi sweeps)."""
    pi1_star.check(source.num_actions)
    if len(pi1_star) != source.num_states:
        raise ValidationError("pi1_star must assign an action to every source state")
    if check_policy:
        check_optimal(source, pi1_star)
    S1, S2, A2 = source.num_states, target.num_states, target.num_actions
    idx = np.arange(S1)
    src_rows = source.transition[idx, pi1_star.action_of]
    src_ptr, src_idx, src_p = _csr(src_rows)
    src_r = np.ascontiguousarray(source.reward[idx, pi1_star.action_of])
    tgt_ptr, tgt_idx, tgt_p = _csr(target.transition.reshape(S2 * A2, S2))
    tgt_r = np.ascontiguousarray(target.reward.reshape(-1))

    d = np.zeros((S1, S2, A2))
    history = []
    change = np.inf
    k = 0
    while k < config.max_iterations:
        dprime = np.ascontiguousarray(_reduce(d, config.variant))
        new = np.empty_like(d)
        kernels.bisim_sweep(
            dprime, src_ptr, src_idx, src_p, src_r, tgt_ptr, tgt_idx, tgt_p, tgt_r,
            float(config.c_R), float(config.c_T), new,
        )
        change = float(np.max(np.abs(new - d)))
        d = new
        k += 1
        history.append(change)
        if change <= config.threshold:
            break
    converged = change <= config.threshold
    log.debug("bisimulation metric: %d iterations, last sup change %.3g", k, change)
    return PairwiseMetric(d, k, converged, change, config, tuple(history))


# -- caching -------------------------------------------------------------------


def cache_key(source: TabularMdp, pi1_star: DeterministicPolicy, target: TabularMdp, config: BisimConfig) -> str:
    h = hashlib.sha256()
    h.update(source.content_bytes())
    h.update(pi1_star.action_of.tobytes())
    h.update(target.content_bytes())
    h.update(repr((config.c_R, config.c_T, config.threshold, config.max_iterations, config.variant)).encode())
    return h.hexdigest()[:32]


def save_metric(metric: PairwiseMetric, path) -> None:
    """Binary ``.npz`` cache; contents are deterministic for a given metric."""
    cfg = metric.config or BisimConfig()
    buf = io.BytesIO()
    np.savez(
        buf,
        d=metric.d,
        iterations_run=np.int64(metric.iterations_run),
        converged=np.bool_(metric.converged),
        sup_change_last=np.float64(metric.sup_change_last),
        history=np.asarray(metric.history, dtype=np.float64),
        config=np.array([cfg.c_R, cfg.c_T, cfg.threshold, cfg.max_iterations], dtype=np.float64),
        variant=np.array(cfg.variant),
    )
    Path(path).write_bytes(buf.getvalue())


def load_metric(path) -> PairwiseMetric:
    with np.load(path, allow_pickle=False) as data:
        c_r, c_t, thr, iters = data["config"].tolist()
        cfg = BisimConfig(c_r, c_t, thr, int(iters), str(data["variant"]))
        return PairwiseMetric(
            data["d"].copy(),
            int(data["iterations_run"]),
            bool(data["converged"]),
            float(data["sup_change_last"]),
            cfg,
            tuple(data["history"].tolist()),
        )


def write_metric_csv(metric: PairwiseMetric, path) -> None:
    """Flat table with columns s1, s2, a2, d."""
    S1, S2, A2 = metric.d.shape
    with open(path, "w") as fh:
        fh.write("s1,s2,a2,d\n")
        for (s1, s2, a2), value in np.ndenumerate(metric.d):
            fh.write(f"{s1},{s2},{a2},{float(value)!r}\n")


def read_metric_csv(path, shape) -> np.ndarray:
    d = np.full(shape, np.nan)
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "s1,s2,a2,d":
            raise ValueError(f"unexpected header {header!r}")
        for line in fh:
            s1, s2, a2, value = line.strip().split(",")
            d[int(s1), int(s2), int(a2)] = float(value)
    if np.isnan(d).any():
        raise ValueError("metric table is incomplete")
    return d


def cached_metric(source, pi1_star, target, config, cache_dir=None) -> PairwiseMetric:
    """Compute the metric, reusing ``<cache_dir>/<key>.npz`` when it loads cleanly."""
    if cache_dir is None:
        return lax_bisim_metric(source, pi1_star, target, config)
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    path = cache_dir / f"metric_{cache_key(source, pi1_star, target, config)}.npz"
    if path.exists():
        try:
            metric = load_metric(path)
            if metric.d.shape == (source.num_states, target.num_states, target.num_actions):
                return metric
            log.warning("cached metric %s has the wrong shape; recomputing", path)
        except Exception as exc:  # corrupt cache files are recomputed, never fatal
            log.warning("cached metric %s is unreadable (%s); recomputing", path, exc)
    metric = lax_bisim_metric(source, pi1_star, target, config)
    save_metric(metric, path)
    return metric
