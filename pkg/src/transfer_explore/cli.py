"""Command-line entry point: solve, metric, transfer, train and experiment."""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .bisim import BisimConfig, cache_key, cached_metric
from .envs import ConfigurationError, EnvDescriptor, Simulator, preset
from .experiments import FAMILIES, FAMILY_PROTOCOLS, ExperimentConfig, run_experiment, summary_lines
from .explore import StrategyConfig, default_config, uses_transfer
from .learner import LearnConfig, optimal_mar, q_learning_run
from .mdp import ValidationError, greedy_policy, value_iteration
from .metrics import write_table_csv
from .transfer import compute_transfer

log = logging.getLogger("transfer_explore")

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 1, 2

SECTIONS = ("env", "source", "target", "bisim", "strategy", "learn", "experiment")


# -- configuration -------------------------------------------------------------


def load_config(path=None, overrides=()) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    if path:
        if not Path(path).is_file():
            raise ConfigurationError(f"config file {path} not found")
        cp.read(path)
    for item in overrides:
        key, sep, value = item.partition("=")
        section, dot, option = key.strip().partition(".")
        if not sep or not dot or not option:
            raise ConfigurationError(f"--set expects section.key=value, got {item!r}")
        if not cp.has_section(section):
            cp.add_section(section)
        cp[section][option] = value.strip()
    unknown = set(cp.sections()) - set(SECTIONS)
    if unknown:
        raise ConfigurationError(f"unknown config section(s): {sorted(unknown)}")
    return cp


def _section(cp, name) -> dict:
    return dict(cp[name]) if cp.has_section(name) else {}


def env_from(cp, name, default=None) -> EnvDescriptor:
    mapping = _section(cp, name)
    if not mapping:
        if default is None:
            raise ConfigurationError(f"missing [{name}] environment section")
        return preset(default)
    return EnvDescriptor.from_mapping(mapping)


def _typed(cls, mapping, skip=()):
    types = {f.name: f.type for f in dataclasses.fields(cls)}
    out = {}
    for key, value in mapping.items():
        if key in skip:
            continue
        if key not in types:
            raise ConfigurationError(f"unknown {cls.__name__} key {key!r}")
        kind = types[key]
        try:
            if value.lower() in ("", "none"):
                out[key] = None
            elif kind == "int":
                out[key] = int(value)
            elif kind == "float":
                out[key] = float(value)
            else:
                out[key] = value
        except ValueError as exc:
            raise ConfigurationError(f"bad value for {key!r}: {value!r}") from exc
    return out


def bisim_from(cp) -> BisimConfig:
    mapping = _section(cp, "bisim")
    base = mapping.pop("preset", "")
    kwargs = _typed(BisimConfig, mapping)
    if base == "tuned":
        return BisimConfig.tuned(**kwargs)
    if base:
        return BisimConfig.for_target(base, **kwargs)
    return BisimConfig(**kwargs)


def strategy_from(cp, cli_strategy=None):
    mapping = _section(cp, "strategy")
    name = cli_strategy or mapping.get("name")
    if not name:
        raise ConfigurationError("no strategy given (use --strategy or [strategy] name)")
    overrides = _typed(StrategyConfig, mapping, skip=("name",))
    default_config(name, **overrides)  # validates
    return name, tuple(sorted(overrides.items()))


def learn_from(cp) -> LearnConfig:
    return LearnConfig(**_typed(LearnConfig, _section(cp, "learn")))


def parse_seeds(text) -> tuple:
    try:
        seeds = []
        for part in str(text).split(","):
            part = part.strip()
            if not part:
                continue
            if "-" in part[1:]:
                lo, hi = part.split("-", 1)
                seeds.extend(range(int(lo), int(hi) + 1))
            else:
                seeds.append(int(part))
    except ValueError as exc:
        raise ConfigurationError(f"bad seed list {text!r}") from exc
    if not seeds:
        raise ConfigurationError("empty seed list")
    return tuple(seeds)


# -- subcommands ---------------------------------------------------------------


def _out(args, cp) -> Path:
    out = args.out or _section(cp, "experiment").get("out") or "results"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_solve(args, cp) -> int:
    desc = env_from(cp, "env") if cp.has_section("env") else env_from(cp, "target", "FourSmallRooms")
    mdp = desc.build()
    q = value_iteration(mdp)
    pi = greedy_policy(q)
    horizon = learn_from(cp).eval_horizon
    opt = optimal_mar(mdp, horizon)
    out = _out(args, cp)
    S, A = q.values.shape
    write_table_csv([[s, float(v)] for s, v in enumerate(q.state_values)], ["state", "v"], out / "v_star.csv")
    write_table_csv([[s, a, float(q.values[s, a])] for s in range(S) for a in range(A)],
                    ["state", "action", "q"], out / "q_star.csv")
    write_table_csv([[s, int(a)] for s, a in enumerate(pi.action_of)], ["state", "action"], out / "policy.csv")
    summary = {"optimal_mar": opt, "horizon": horizon, "sweeps": q.sweeps, "residual": q.residual,
               "converged": q.converged, "num_states": S, "num_actions": A}
    (out / "solve.json").write_text(json.dumps(summary, sort_keys=True, indent=1) + "\n")
    print(f"optimal MAR {opt:.6g} ({S} states, {A} actions, {q.sweeps} sweeps)")
    return EXIT_OK


def _metric(args, cp):
    source = env_from(cp, "source", "FourSmallRooms")
    target = env_from(cp, "target", "FourLargeRooms")
    cfg = bisim_from(cp)
    src_mdp, tgt_mdp = source.build(), target.build()
    q1 = value_iteration(src_mdp)
    pi1 = greedy_policy(q1)
    out = _out(args, cp)
    metric = cached_metric(src_mdp, pi1, tgt_mdp, cfg, out)
    key = cache_key(src_mdp, pi1, tgt_mdp, cfg)
    return q1, metric, key, out


def cmd_metric(args, cp) -> int:
    _, metric, key, out = _metric(args, cp)
    report = {"cache_key": key, "iterations": metric.iterations_run, "converged": metric.converged,
              "sup_change": metric.sup_change_last, "shape": list(metric.d.shape)}
    (out / "metric_report.json").write_text(json.dumps(report, sort_keys=True, indent=1) + "\n")
    print(f"metric {metric.d.shape}: {metric.iterations_run} iterations, "
          f"converged={metric.converged}, sup change {metric.sup_change_last:.3g}")
    return EXIT_OK


def cmd_transfer(args, cp) -> int:
    q1, metric, _, out = _metric(args, cp)
    table = compute_transfer(q1.state_values, metric, metric.config.variant)
    S2, A2 = table.advantage.shape
    rows = [[s2, int(table.s_match[s2]), int(table.transferred_action[s2]), float(table.matched_value[s2]),
             float(table.lower_bound[table.s_match[s2], s2])] for s2 in range(S2)]
    write_table_csv(rows, ["s2", "s_match", "transferred_action", "matched_value", "lower_bound"], out / "transfer.csv")
    write_table_csv([[s2, a2, float(table.advantage[s2, a2])] for s2 in range(S2) for a2 in range(A2)],
                    ["s2", "a2", "advantage"], out / "advantage.csv")
    table.save(out / "transfer.npz")
    print(f"transfer table for {S2} target states written to {out}")
    return EXIT_OK


def cmd_train(args, cp) -> int:
    target = env_from(cp, "target", "FourLargeRooms")
    name, overrides = strategy_from(cp, args.strategy)
    learn = learn_from(cp)
    if args.seeds:
        learn = dataclasses.replace(learn, seed=parse_seeds(args.seeds)[0])
    tgt_mdp = target.build()
    transfer = None
    if uses_transfer(name):
        q1, metric, _, _ = _metric(args, cp)
        transfer = compute_transfer(q1.state_values, metric, metric.config.variant)
    result = q_learning_run(Simulator(tgt_mdp, 0), name, learn, default_config(name, **dict(overrides)), transfer)
    out = _out(args, cp)
    result.write_csv(out / f"mar_seed{learn.seed}.csv")
    (out / f"summary_seed{learn.seed}.json").write_text(result.summary_json() + "\n")
    print(f"{name}: AuC-MAR {result.auc_mar_percent:.2f}%")
    return EXIT_OK


def cmd_experiment(args, cp) -> int:
    exp = _section(cp, "experiment")
    family = args.family or exp.get("family")
    seeds = parse_seeds(args.seeds or exp.get("seeds", "0-9"))
    out = _out(args, cp)
    cache_dir = exp.get("cache_dir") or None
    if family:
        if family not in FAMILIES:
            raise ConfigurationError(f"unknown family {family!r}; choose from {sorted(FAMILIES)}")
        protocol = FAMILY_PROTOCOLS[family]
        learn = _typed(LearnConfig, _section(cp, "learn"))
        if learn:
            if "max_steps" in learn and "eval_every" not in learn:
                learn["eval_every"] = None
            protocol = dataclasses.replace(protocol, **learn)
        report = FAMILIES[family](out, seeds=seeds, cache_dir=cache_dir, protocol=protocol)
    else:
        name, overrides = strategy_from(cp, args.strategy)
        needs_source = uses_transfer(name) or exp.get("q_init")
        cfg = ExperimentConfig(
            target=env_from(cp, "target"),
            strategy=name,
            source=env_from(cp, "source") if needs_source else None,
            bisim=bisim_from(cp) if cp.has_section("bisim") else None,
            strategy_overrides=overrides,
            learn=learn_from(cp),
            seeds=seeds,
            out_dir=str(out),
            baseline=exp.get("baseline", ""),
            q_init=exp.get("q_init", ""),
            cache_dir=cache_dir,
        )
        report = run_experiment(cfg)
    for line in summary_lines(report):
        print(line)
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "metric": cmd_metric,
    "transfer": cmd_transfer,
    "train": cmd_train,
    "experiment": cmd_experiment,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="transfer-explore", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI file with [env]/[source]/[target]/[bisim]/[strategy]/[learn]/[experiment]")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seeds", help="comma list or ranges, e.g. 0-9 or 1,4,7")
        p.add_argument("--strategy", help="exploration strategy name")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE")
        if name == "experiment":
            p.add_argument("--family", help=f"one of {', '.join(FAMILIES)}")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        cp = load_config(args.config, args.set)
        return COMMANDS[args.command](args, cp)
    except (ValidationError, ConfigurationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # anything else is a runtime failure
        log.debug("runtime failure", exc_info=True)
        print(f"failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
