"""Command-line entry point: train, evaluate, oracle, fuzz, compare.

Exit codes: 0 success, 1 configuration or validation error, 2 runtime
divergence or broken invariant, 3 I/O error.

All randomness descends from the run seed: it is split into independent
streams for network initialization, demand sampling, action exploration,
and replay sampling, so a (config, seed) pair fully determines every
artifact except ``timings.csv``.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, build_scenario, load_config, load_config_dict, resolved_dict
from .data import ScenarioDataError, build_episode, synth_demand
from .fuzz import fuzz_battery, fuzz_clearing, fuzz_profit
from .marl import ReplayBuffer, build_learner, load_learner, rollout_episode, save_learner, train
from .nn import CheckpointError, DivergenceError
from .oracle import brute_force, random_tiny_instance, replay_sequence, rolling_greedy
from .report import (
    read_metrics_csv,
    summarize,
    write_long_csv,
    write_metrics_csv,
    write_summary_csv,
    write_timings_csv,
    write_trace_csv,
)


class _Parser(argparse.ArgumentParser):
    """Argparse variant whose usage errors map to exit code 1."""

    def error(self, message):
        raise ConfigError(message)


def _load(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else load_config_dict({})
    overrides: dict = {}
    if getattr(args, "algorithm", None):
        overrides["algorithms"] = args.algorithm
    if getattr(args, "seed", None) is not None and args.seed != []:
        seeds = args.seed if isinstance(args.seed, list) else [args.seed]
        overrides["seeds"] = seeds
    if getattr(args, "out", None):
        overrides["out_dir"] = args.out
    if overrides:
        merged = resolved_dict(cfg)
        merged.update(overrides)
        cfg = load_config_dict(merged)
    return cfg


def _seed_streams(seed: int) -> tuple[np.random.Generator, ...]:
    """(net-init, demand, exploration, replay) generators for one run."""
    children = np.random.SeedSequence([seed]).spawn(4)
    return tuple(np.random.default_rng(c) for c in children)


def _episode_factory(price, pv, demand, stations, initial_soc, ess, demand_rng):
    horizon = len(price)

    def make():
        arrivals = synth_demand(demand, horizon, stations, rng=demand_rng)
        return build_episode(price, pv, arrivals, initial_soc, ess)

    return make


def cmd_train(args) -> int:
    cfg = _load(args)
    price, pv, demand, stations = build_scenario(cfg)
    out_root = Path(cfg.out_dir)
    out_root.mkdir(parents=True, exist_ok=True)
    echo = json.dumps(resolved_dict(cfg), indent=2, sort_keys=True)
    (out_root / "resolved_config.json").write_text(echo + "\n")

    for algorithm in cfg.algorithms:
        for seed in cfg.seeds:
            t0 = time.perf_counter()
            rng_init, rng_demand, rng_roll, rng_replay = _seed_streams(seed)
            learner = build_learner(algorithm, stations, cfg.ess, cfg.grid,
                                    cfg.scales, cfg.train, rng_init)
            buffer = ReplayBuffer(cfg.train.capacity, rng_replay)
            factory = _episode_factory(price, pv, demand, stations,
                                       cfg.scenario.initial_soc, cfg.ess, rng_demand)
            metrics = train(learner, buffer, factory, rng_roll)

            run_dir = out_root / f"{algorithm}_seed{seed}"
            run_dir.mkdir(parents=True, exist_ok=True)
            write_metrics_csv(run_dir / "metrics.csv", metrics, algorithm, seed)
            write_timings_csv(run_dir / "timings.csv", metrics)
            save_learner(run_dir / "checkpoint.npz", learner)

            window = min(50, len(metrics))
            tail = metrics[-window:]
            mean_profit = sum(m.total_profit for m in tail) / window
            print(f"{algorithm} seed {seed}: {len(metrics)} episodes in "
                  f"{time.perf_counter() - t0:.1f}s, final-{window} mean profit "
                  f"${mean_profit:.2f} -> {run_dir}")
    return 0


def cmd_evaluate(args) -> int:
    learner = load_learner(args.checkpoint)
    cfg = _load(args)
    price, pv, demand, stations = build_scenario(cfg)
    if stations != learner.n_agents:
        raise ConfigError(
            f"checkpoint expects {learner.n_agents} stations, scenario has {stations}")
    seed = args.seed if args.seed is not None else 0
    _, rng_demand, _, _ = _seed_streams(seed)
    factory = _episode_factory(price, pv, demand, stations,
                               cfg.scenario.initial_soc, cfg.ess, rng_demand)
    episode = factory()
    record, trace = rollout_episode(episode, learner, epsilon=0.0, rng=None,
                                    collect_trace=True)
    out_dir = Path(args.out or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    write_trace_csv(out_dir / "trace.csv", trace, cfg.ess)
    total = float(record.total_profits.sum())
    stations_profit = record.station_profits.sum(axis=0)
    print(f"greedy episode profit ${total:.2f} "
          f"({', '.join(f'station {i}: ${v:.2f}' for i, v in enumerate(stations_profit))})")
    print(f"trace written to {out_dir / 'trace.csv'}")
    return 0


def cmd_oracle(args) -> int:
    seed = args.seed if args.seed is not None else 0
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    rows = []
    mismatches = 0
    for k in range(args.instances):
        instance = random_tiny_instance(rng)
        result = brute_force(instance)
        lookahead = args.lookahead or instance.episode.length
        greedy_total, greedy_actions = rolling_greedy(instance, lookahead)
        _, oracle_split = replay_sequence(instance, result.actions)
        _, greedy_split = replay_sequence(instance, greedy_actions)
        if lookahead >= instance.episode.length \
                and abs(greedy_total - result.profit) > 1e-9 * max(1.0, abs(result.profit)):
            mismatches += 1
        rows.append((k, "oracle", result.profit, oracle_split, result.nodes))
        rows.append((k, f"greedy-L{lookahead}", greedy_total, greedy_split, None))
        print(f"instance {k}: optimum ${result.profit:.4f} "
              f"({result.nodes} nodes, {result.wall_time_s:.2f}s), "
              f"greedy-L{lookahead} ${greedy_total:.4f}")

    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        import csv as _csv
        with (out_dir / "oracle_metrics.csv").open("w", newline="") as fh:
            w = _csv.writer(fh)
            n_st = len(rows[0][3])
            w.writerow(["episode", "algorithm", "seed", "total_profit"]
                       + [f"station_profit_{i}" for i in range(n_st)]
                       + ["l_mix", "agent_loss_mean", "epsilon"])
            for k, name, total, split, _nodes in rows:
                w.writerow([k, name, seed, repr(float(total))]
                           + [repr(float(v)) for v in split] + ["", "", ""])
        print(f"wrote {out_dir / 'oracle_metrics.csv'}")

    if mismatches:
        print(f"ERROR: full-lookahead greedy diverged from the optimum on "
              f"{mismatches} instance(s)", file=sys.stderr)
        return 2
    return 0


def cmd_fuzz(args) -> int:
    seed = args.seed if args.seed is not None else 0
    reports = [
        fuzz_clearing(args.clearing, seed),
        fuzz_battery(args.battery, seed + 1),
        fuzz_profit(args.profit, seed + 2),
    ]
    ok = True
    for rep in reports:
        print(rep)
        ok = ok and rep.ok
    return 0 if ok else 2


def _collect_metric_files(paths: list[str]) -> list[Path]:
    found: list[Path] = []
    for raw in paths:
        p = Path(raw)
        if p.is_dir():
            found.extend(sorted(p.rglob("metrics.csv")))
        elif p.exists():
            found.append(p)
        else:
            raise ConfigError(f"no such file or directory: {raw}")
    if not found:
        raise ConfigError(f"no metrics.csv found under {', '.join(paths)}")
    return found


def cmd_compare(args) -> int:
    files = _collect_metric_files(args.runs)
    runs = []
    for path in files:
        rows = read_metrics_csv(path)
        runs.append((rows[0]["algorithm"], rows[0]["seed"], rows))
    summary = summarize(runs, args.window)
    out_dir = Path(args.out or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    write_summary_csv(out_dir / "summary.csv", summary)
    write_long_csv(out_dir / "long.csv", runs)
    print(f"{'algorithm':<18}{'seeds':>6}{'window':>8}{'mean':>12}{'median':>12}{'std':>12}")
    for row in summary:
        print(f"{row.algorithm:<18}{row.seeds:>6}{row.window:>8}"
              f"{row.profit_mean:>12.2f}{row.profit_median:>12.2f}{row.profit_std:>12.2f}")
    print(f"wrote {out_dir / 'summary.csv'} and {out_dir / 'long.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="evcoop",
                     description="Cooperative EV-charging microgrid training and analysis")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train one or more algorithms over the seed list")
    p_train.add_argument("--config", help="JSON config file (omit for all defaults)")
    p_train.add_argument("--seed", type=int, action="append",
                         help="override config seeds (repeatable)")
    p_train.add_argument("--algorithm", action="append",
                         choices=["double_qmix", "qmix", "independent_dqn", "random"],
                         help="override config algorithms (repeatable)")
    p_train.add_argument("--out", help="override output directory")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("evaluate",
                            help="greedy rollout of a checkpoint; writes trace.csv")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--config", help="scenario source (defaults to the bundled sample)")
    p_eval.add_argument("--seed", type=int,
                        help="demand seed; matches the first training episode of the same seed")
    p_eval.add_argument("--out", help="output directory (default: current)")
    p_eval.set_defaults(func=cmd_evaluate)

    p_oracle = sub.add_parser("oracle",
                              help="enumerate tiny instances: exact optimum vs rolling greedy")
    p_oracle.add_argument("--instances", type=int, default=10)
    p_oracle.add_argument("--seed", type=int)
    p_oracle.add_argument("--lookahead", type=int,
                          help="greedy lookahead (default: full horizon)")
    p_oracle.add_argument("--out", help="write oracle_metrics.csv here")
    p_oracle.set_defaults(func=cmd_oracle)

    p_fuzz = sub.add_parser("fuzz", help="randomized invariant checks on the market core")
    p_fuzz.add_argument("--clearing", type=int, default=100_000)
    p_fuzz.add_argument("--battery", type=int, default=100_000)
    p_fuzz.add_argument("--profit", type=int, default=10_000)
    p_fuzz.add_argument("--seed", type=int)
    p_fuzz.set_defaults(func=cmd_fuzz)

    p_cmp = sub.add_parser("compare",
                           help="summarize completed runs into summary.csv + long.csv")
    p_cmp.add_argument("--runs", nargs="+", required=True,
                       help="metrics.csv files or directories to scan")
    p_cmp.add_argument("--window", type=int, default=50,
                       help="final-episode window for the aggregate (default 50)")
    p_cmp.add_argument("--out", help="output directory (default: current)")
    p_cmp.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (ConfigError, ScenarioDataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return 2
    except (OSError, CheckpointError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
