"""Multi-seed experiment arms and the four replication families.

Every file written here is a pure function of the configuration and seeds:
no timestamps, no wall-clock data, floats rendered with ``repr``.
"""

from __future__ import annotations

import configparser
import dataclasses
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bisim import BisimConfig, cached_metric
from .envs import EnvDescriptor, Simulator, preset
from .explore import BASELINES, COMPOSITES, StrategyConfig, default_config, uses_transfer
from .learner import LearnConfig, optimal_mar, q_learning_run
from .mdp import ValidationError, greedy_policy, value_iteration
from .metrics import aggregate, mean_std, transfer_ratio, write_curve_csv, write_table_csv
from .transfer import compute_transfer, q_init_from_transfer

log = logging.getLogger(__name__)

DEFAULT_SEEDS = tuple(range(10))

# step budgets per family; the other protocol values are shared
LONG = LearnConfig(max_steps=200000, eval_rollouts=200, episode_limit=16)
COMPOSITE_BUDGET = dataclasses.replace(LONG, max_steps=40000, eval_every=400)
NEGATIVE_TRANSFER_BUDGET = dataclasses.replace(LONG, max_steps=50000, eval_every=500)

ROOM_TARGETS = ("FourLargeRooms", "SixLargeRooms", "NineLargeRooms")
SOURCE_VARIANTS = ("two_goals", "firepit", "no_goal", "negative_hallways", "three_actions", "gravity")

AUC_HEADER = ["target", "arm", "strategy", "source", "num_seeds", "mean", "std"]
TR_HEADER = ["target", "strategy", "vanilla", "num_seeds", "auc_vanilla", "auc_with", "tr"]


@dataclass(frozen=True)
class Arm:
    """One learner configuration evaluated over all seeds."""

    name: str
    strategy: str
    source: EnvDescriptor = None
    metric: BisimConfig = None
    q_init: str = ""  # "", "lower_bound" or "policy"
    overrides: tuple = ()  # (key, value) pairs applied to the strategy defaults

    @property
    def needs_transfer(self) -> bool:
        return uses_transfer(self.strategy) or bool(self.q_init)

    def strategy_config(self) -> StrategyConfig:
        return default_config(self.strategy, **dict(self.overrides))

    def source_label(self) -> str:
        if self.source is None:
            return ""
        return _describe(self.source)


@dataclass
class ArmResult:
    arm: Arm
    target: str
    runs: list
    curve: object

    @property
    def aucs(self):
        return [r.auc_mar_percent for r in self.runs]

    @property
    def auc(self):
        return mean_std(self.aucs)

    def row(self):
        m, s = self.auc
        return [self.target, self.arm.name, self.arm.strategy, self.arm.source_label(), len(self.runs), m, s]


@dataclass
class Report:
    name: str
    out_dir: Path
    results: list = field(default_factory=list)
    tr_rows: list = field(default_factory=list)

    def get(self, target: str, arm: str) -> ArmResult:
        for r in self.results:
            if r.target == target and r.arm.name == arm:
                return r
        raise KeyError((target, arm))


def _describe(desc: EnvDescriptor) -> str:
    if desc.kind == "taxi":
        return "taxi"
    if desc.kind == "grid":
        return f"grid:{desc.map_path}"
    label = f"rooms{desc.rooms_x}x{desc.rooms_y}s{desc.room_size}"
    if desc.variant != "default":
        label += f"/{desc.variant}"
    if desc.goal_room:
        label += f"/goal{desc.goal_room}"
    return label


class TransferCache:
    """Transfer tables memoised per (source, target, metric settings)."""

    def __init__(self, cache_dir=None):
        self.cache_dir = cache_dir
        self._tables = {}
        self._solved = {}

    def solve(self, desc: EnvDescriptor):
        key = desc.to_text()
        if key not in self._solved:
            mdp = desc.build()
            q = value_iteration(mdp)
            self._solved[key] = (mdp, q, greedy_policy(q))
        return self._solved[key]

    def transfer(self, source: EnvDescriptor, target: EnvDescriptor, metric: BisimConfig):
        key = (source.to_text(), target.to_text(), metric)
        if key not in self._tables:
            src_mdp, q1, pi1 = self.solve(source)
            tgt_mdp = self.solve(target)[0]
            t0 = time.perf_counter()
            d = cached_metric(src_mdp, pi1, tgt_mdp, metric, self.cache_dir)
            log.info(
                "metric %s -> %s: %d iterations, sup change %.3g, %.1fs",
                _describe(source), _describe(target), d.iterations_run, d.sup_change_last,
                time.perf_counter() - t0,
            )
            self._tables[key] = compute_transfer(q1.state_values, d, metric.variant)
        return self._tables[key]


def run_arm(target: EnvDescriptor, arm: Arm, protocol: LearnConfig, seeds, out_dir=None,
            cache: TransferCache = None, target_name: str = None) -> ArmResult:
    """Run ``arm`` once per seed; writes ``mar_seed<k>.csv`` and ``mar_agg.csv`` when ``out_dir`` is set."""
    cache = cache or TransferCache()
    tgt_mdp = cache.solve(target)[0]
    transfer = q_init = None
    if arm.needs_transfer:
        if arm.source is None:
            raise ValidationError(f"arm {arm.name!r} needs a source environment")
        transfer = cache.transfer(arm.source, target, arm.metric or BisimConfig.tuned())
        if arm.q_init:
            q_init = q_init_from_transfer(tgt_mdp, transfer, mode=arm.q_init)
    sim = Simulator(tgt_mdp, 0)
    optimum = optimal_mar(tgt_mdp, protocol.eval_horizon)
    cfg = arm.strategy_config()
    runs = []
    for seed in seeds:
        run = q_learning_run(
            sim, arm.strategy, dataclasses.replace(protocol, seed=int(seed)), cfg,
            transfer=transfer if uses_transfer(arm.strategy) else None,
            q_init=q_init, optimal=optimum,
        )
        runs.append(run)
    curve = aggregate([r.mar_checkpoints for r in runs])
    if out_dir is not None:
        arm_dir = Path(out_dir) / arm.name
        arm_dir.mkdir(parents=True, exist_ok=True)
        for seed, run in zip(seeds, runs):
            run.write_csv(arm_dir / f"mar_seed{seed}.csv")
        write_curve_csv(curve, arm_dir / "mar_agg.csv")
    return ArmResult(arm, target_name or _describe(target), runs, curve)


def _check_seeds(seeds):
    seeds = tuple(int(s) for s in seeds)
    if not seeds:
        raise ValidationError("at least one seed is required")
    if len(set(seeds)) != len(seeds):
        raise ValidationError("seeds must be distinct")
    return seeds


def run_arms(report: Report, target_name: str, target: EnvDescriptor, arms, protocol, seeds, cache, subdir=True):
    out = report.out_dir / target_name if subdir else report.out_dir
    for arm in arms:
        log.info("%s / %s / %s", report.name, target_name, arm.name)
        report.results.append(run_arm(target, arm, protocol, seeds, out, cache, target_name))


def add_transfer_ratios(report: Report, target_name: str, pairs) -> None:
    for with_name, vanilla_name in pairs:
        a = report.get(target_name, with_name)
        b = report.get(target_name, vanilla_name)
        am, bm = a.auc[0], b.auc[0]
        report.tr_rows.append([target_name, a.arm.strategy, b.arm.strategy, len(a.runs), bm, am, transfer_ratio(am, bm)])


def write_report(report: Report, manifest: configparser.ConfigParser) -> None:
    report.out_dir.mkdir(parents=True, exist_ok=True)
    write_table_csv([r.row() for r in report.results], AUC_HEADER, report.out_dir / "auc.csv")
    if report.tr_rows:
        write_table_csv(report.tr_rows, TR_HEADER, report.out_dir / "tr.csv")
    with open(report.out_dir / "manifest.ini", "w") as fh:
        manifest.write(fh)


def _manifest(name, seeds, protocol, targets, arms_by_target) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp["experiment"] = {"name": name, "seeds": ",".join(map(str, seeds))}
    cp["learn"] = {k: str(v) for k, v in dataclasses.asdict(protocol).items() if k != "seed"}
    for tname, desc in targets.items():
        cp[f"target:{tname}"] = _fields(desc)
        for arm in arms_by_target[tname]:
            section = {"strategy": arm.strategy, "q_init": arm.q_init}
            section.update({f"strategy.{k}": str(v) for k, v in dataclasses.asdict(arm.strategy_config()).items()})
            if arm.source is not None:
                section.update({f"source.{k}": v for k, v in _fields(arm.source).items()})
            if arm.needs_transfer:
                metric = arm.metric or BisimConfig.tuned()
                section.update({f"bisim.{k}": str(v) for k, v in dataclasses.asdict(metric).items()})
            cp[f"arm:{tname}:{arm.name}"] = section
    return cp


def _fields(desc: EnvDescriptor) -> dict:
    return {f.name: str(getattr(desc, f.name)) for f in dataclasses.fields(desc)}


def _run_family(name, out_dir, seeds, cache_dir, plan, protocol, pairs=()) -> Report:
    """``plan`` maps a target name to ``(descriptor, arms)``."""
    seeds = _check_seeds(seeds)
    report = Report(name, Path(out_dir))
    cache = TransferCache(cache_dir)
    for tname, (desc, arms) in plan.items():
        run_arms(report, tname, desc, arms, protocol, seeds, cache)
        if pairs:
            add_transfer_ratios(report, tname, pairs)
    manifest = _manifest(name, seeds, protocol, {t: d for t, (d, _) in plan.items()},
                         {t: a for t, (_, a) in plan.items()})
    write_report(report, manifest)
    return report


def baseline_arms():
    return [Arm(b, b) for b in BASELINES]


def extra_arm(source: EnvDescriptor, name="extra_eps_greedy", metric=None) -> Arm:
    return Arm(name, "extra_eps_greedy", source, metric or BisimConfig.tuned())


def convergence_family(out_dir, seeds=DEFAULT_SEEDS, targets=ROOM_TARGETS, cache_dir=None, protocol=LONG):
    """Transfer-guided ε-greedy against four baselines on room targets, FourSmallRooms source."""
    source = preset("FourSmallRooms")
    plan = {t: (preset(t), baseline_arms() + [extra_arm(source)]) for t in targets}
    return _run_family("convergence", out_dir, seeds, cache_dir, plan, protocol)


def goal_sweep_family(out_dir, seeds=DEFAULT_SEEDS, goal_rooms=(1, 2, 3, 4, 5), cache_dir=None,
                      protocol=LONG, baselines=True):
    """SixLargeRooms target (goal in room 0); sources move the goal to other rooms."""
    arms = baseline_arms() if baselines else [Arm("eps_greedy_uniform", "eps_greedy_uniform")]
    arms += [extra_arm(preset("SixLargeRooms", goal_room=k), f"source_goal_room{k}") for k in goal_rooms]
    return _run_family("goal_sweep", out_dir, seeds, cache_dir, {"SixLargeRooms": (preset("SixLargeRooms"), arms)}, protocol)


def source_variant_family(out_dir, seeds=DEFAULT_SEEDS, variants=SOURCE_VARIANTS, cache_dir=None, protocol=LONG):
    """FourLargeRooms target with sources differing in one aspect each."""
    arms = [extra_arm(preset("FourLargeRooms", variant=v), f"source_{v}") for v in variants]
    arms.append(extra_arm(preset("FourSmallRooms"), "source_four_small_rooms"))
    return _run_family("source_variants", out_dir, seeds, cache_dir, {"FourLargeRooms": (preset("FourLargeRooms"), arms)}, protocol)


def composites_family(out_dir, seeds=DEFAULT_SEEDS, target="SixLargeRooms", cache_dir=None,
                      protocol=COMPOSITE_BUDGET, composites=tuple(COMPOSITES)):
    """Each baseline with and without a transfer-guided exploration branch; emits Transfer Ratios."""
    source = preset("FourSmallRooms")
    arms = []
    for comp in composites:
        arms.append(Arm(COMPOSITES[comp], COMPOSITES[comp]))
        arms.append(Arm(comp, comp, source, BisimConfig.tuned()))
    pairs = [(c, COMPOSITES[c]) for c in composites]
    return _run_family("composites", out_dir, seeds, cache_dir, {target: (preset(target), arms)}, protocol, pairs)


def negative_transfer_family(out_dir, seeds=DEFAULT_SEEDS, targets=("FourLargeRooms", "Taxi"), cache_dir=None,
                             protocol=NEGATIVE_TRANSFER_BUDGET):
    """Transfer-guided ε-greedy against Q-table initialisation from the transferred bounds.

    Both use the reference five-iteration metric settings, under which the
    rooms-to-Taxi transfer is poor.
    """
    source = preset("FourSmallRooms")
    plan = {}
    for t in targets:
        metric = BisimConfig.for_target(t)
        plan[t] = (preset(t), [
            Arm("eps_greedy_uniform", "eps_greedy_uniform"),
            extra_arm(source, metric=metric),
            Arm("q_init_transfer", "eps_greedy_uniform", source, metric, q_init="lower_bound"),
        ])
    return _run_family("negative_transfer", out_dir, seeds, cache_dir, plan, protocol)


def sensitivity_family(out_dir, seeds=DEFAULT_SEEDS, cache_dir=None, protocol=LONG):
    out = Path(out_dir)
    return [
        goal_sweep_family(out / "goal_sweep", seeds, cache_dir=cache_dir, protocol=protocol),
        source_variant_family(out / "source_variants", seeds, cache_dir=cache_dir, protocol=protocol),
    ]


FAMILY_PROTOCOLS = {
    "convergence": LONG,
    "sensitivity": LONG,
    "goal_sweep": LONG,
    "source_variants": LONG,
    "composites": COMPOSITE_BUDGET,
    "negative_transfer": NEGATIVE_TRANSFER_BUDGET,
}

FAMILIES = {
    "convergence": convergence_family,
    "sensitivity": sensitivity_family,
    "goal_sweep": goal_sweep_family,
    "source_variants": source_variant_family,
    "composites": composites_family,
    "negative_transfer": negative_transfer_family,
}


# -- single configured experiment -------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    target: EnvDescriptor
    strategy: str
    source: EnvDescriptor = None
    bisim: BisimConfig = None
    strategy_overrides: tuple = ()
    learn: LearnConfig = LearnConfig()
    seeds: tuple = DEFAULT_SEEDS
    out_dir: str = "results"
    baseline: str = ""  # paired vanilla strategy for a Transfer Ratio
    q_init: str = ""
    cache_dir: str = None

    def __post_init__(self):
        _check_seeds(self.seeds)
        default_config(self.strategy, **dict(self.strategy_overrides))
        if (uses_transfer(self.strategy) or self.q_init) and self.source is None:
            raise ValidationError(f"strategy {self.strategy!r} needs a [source] environment")
        if self.baseline:
            default_config(self.baseline)
        if self.q_init not in ("", "lower_bound", "policy"):
            raise ValidationError(f"unknown q_init mode {self.q_init!r}")


def run_experiment(cfg: ExperimentConfig) -> Report:
    arm = Arm(cfg.strategy, cfg.strategy, cfg.source, cfg.bisim, cfg.q_init, cfg.strategy_overrides)
    arms = [arm]
    pairs = []
    if cfg.baseline:
        if cfg.baseline == cfg.strategy:
            arm = dataclasses.replace(arm, name=f"{cfg.strategy}_transfer")
            arms = [arm]
        arms.append(Arm(cfg.baseline, cfg.baseline))
        pairs = [(arm.name, cfg.baseline)]
    plan = {"target": (cfg.target, arms)}
    seeds = _check_seeds(cfg.seeds)
    report = Report("experiment", Path(cfg.out_dir))
    cache = TransferCache(cfg.cache_dir)
    run_arms(report, "target", cfg.target, arms, cfg.learn, seeds, cache, subdir=False)
    add_transfer_ratios(report, "target", pairs)
    write_report(report, _manifest("experiment", seeds, cfg.learn, {"target": cfg.target}, {"target": arms}))
    return report


def summary_lines(report) -> list:
    reports = report if isinstance(report, list) else [report]
    lines = []
    for rep in reports:
        for r in rep.results:
            m, s = r.auc
            lines.append(f"{rep.name:18s} {r.target:16s} {r.arm.name:26s} {m:7.2f} +- {s:5.2f}")
        for row in rep.tr_rows:
            lines.append(f"{rep.name:18s} {row[0]:16s} TR {row[1]:>22s} {row[6]:+8.2f}%")
    return lines


def final_mar(result: ArmResult) -> float:
    return float(np.mean([r.mar_checkpoints[-1][1] for r in result.runs]))
