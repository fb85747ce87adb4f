"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--quick]

Both backends are driven through the public API with identical inputs, and
each row also reports whether the two results were bit-identical.
"""

import argparse
import time

import numpy as np

import transfer_explore.bisim as bisim_mod
import transfer_explore.learner as learner_mod
import transfer_explore.metrics as metrics_mod
import transfer_explore.ot as ot_mod
from transfer_explore import BisimConfig, LearnConfig, Simulator, compute_transfer, greedy_policy, lax_bisim_metric, q_learning_run, value_iteration
from transfer_explore import _pykernels
from transfer_explore.envs import preset
from transfer_explore.ot import emd

MODULES = (bisim_mod, learner_mod, metrics_mod, ot_mod)


def use(backend):
    for m in MODULES:
        m.kernels = backend


def best_of(fn, repeat):
    times, result = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - t0)
    return min(times), result


def cases(quick):
    rng = np.random.default_rng(0)
    problems = []
    for _ in range(200 if quick else 2000):
        m, n = rng.integers(2, 12, size=2)
        problems.append((rng.dirichlet(np.ones(m)), rng.dirichlet(np.ones(n)), rng.random((m, n))))

    def transport():
        return [emd(*p) for p in problems]

    src = preset("FourSmallRooms").build()
    tgt = preset("FourLargeRooms").build()
    q1 = value_iteration(src)
    pi1 = greedy_policy(q1)
    iters = 2 if quick else 5

    def metric():
        return lax_bisim_metric(src, pi1, tgt, BisimConfig(0.1, 0.9, 1e-12, iters)).d

    table = compute_transfer(q1.state_values, lax_bisim_metric(src, pi1, tgt, BisimConfig(0.1, 0.9, 1e-12, 2)))
    steps = 10_000 if quick else 50_000

    def train():
        cfg = LearnConfig(max_steps=steps, eval_every=steps // 10, eval_rollouts=20, seed=0, episode_limit=16)
        run = q_learning_run(Simulator(tgt), "extra_eps_greedy", cfg, transfer=table, optimal=1.0)
        return run.final_q.values

    u = rng.random((500 if quick else 5000, 201))
    model = Simulator(tgt).model

    def rollouts():
        return metrics_mod.rollout_averages(table.policy, model, u)

    return [
        (f"transport x{len(problems)}", transport),
        (f"bisim {iters} sweeps {src.num_states}x{tgt.num_states}x{tgt.num_actions}", metric),
        (f"q-learning {steps} steps", train),
        (f"rollouts {u.shape[0]}x{u.shape[1] - 1}", rollouts),
    ]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--quick", action="store_true", help="smaller inputs")
    args = parser.parse_args()
    try:
        from transfer_explore import _ckernels
    except ImportError:
        raise SystemExit("compiled kernels not built; run `pip install --no-build-isolation -e .` first")

    saved = [m.kernels for m in MODULES]
    print(f"{'kernel':40s} {'compiled':>10s} {'python':>10s} {'speedup':>8s}  identical")
    try:
        for name, fn in cases(args.quick):
            use(_ckernels)
            tc, rc = best_of(fn, args.repeat)
            use(_pykernels)
            tp, rp = best_of(fn, 1)
            same = np.array_equal(np.asarray(rc), np.asarray(rp))
            print(f"{name:40s} {tc:9.4f}s {tp:9.3f}s {tp / tc:7.1f}x  {same}")
    finally:
        for m, k in zip(MODULES, saved):
            m.kernels = k


if __name__ == "__main__":
    main()
