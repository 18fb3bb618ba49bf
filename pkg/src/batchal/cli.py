"""Command-line front end: dataset generation, experiment runs, reports.

Exit codes: 0 success, 1 configuration/validation error, 2 runtime error.
All result files are plain CSV; the summary and curve files are byte-stable
across repeated runs of the same config.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import os
import sys
from collections import defaultdict

import numpy as np

from . import __version__
from .config import (ConfigError, ExperimentConfig, build_dataset,
                     config_hash, emit_toml, from_dict, load_config, to_dict)
from .dataset import ImbalanceSpec, apply_imbalance, gen_gaussian_mixture, save_csv
from .loop import (RunLog, aubc, f_acc, mean_and_halfwidth, mean_curve,
                   penalty_matrix, read_runlog_csv, run, summarize,
                   write_runlog_csv)


def _fmt(x: float) -> str:
    return f"{x:.10g}"


def cmd_gen_data(args) -> int:
    data = gen_gaussian_mixture(args.classes, args.dim, args.per_class,
                                args.class_sep, args.seed)
    if args.imbalance != "none":
        ratios = None
        if args.ratios:
            ratios = tuple(float(r) for r in args.ratios.split(","))
        spec = ImbalanceSpec(kind=args.imbalance, ratios=ratios,
                             factor=args.factor)
        data = apply_imbalance(data, spec, args.seed)
    save_csv(data, args.out)
    counts = data.class_counts()
    print(f"wrote {len(data)} samples x {data.dim} features to {args.out}")
    for c, n in enumerate(counts.tolist()):
        print(f"class {c}: {n}")
    return 0


def _run_task(config_dict: dict, strategy: str, seed: int) -> RunLog:
    cfg = from_dict(config_dict)
    dataset = build_dataset(cfg)
    return run(dataset, cfg.al_config(strategy, seed))


def _write_summary(path, strategies, logs_by_strategy) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["strategy", "seeds", "aubc_mean", "aubc_halfwidth",
                         "facc_mean", "facc_halfwidth"])
        for strategy in strategies:
            s = summarize(logs_by_strategy[strategy])
            writer.writerow([strategy, s["seeds"], _fmt(s["aubc_mean"]),
                             _fmt(s["aubc_halfwidth"]), _fmt(s["facc_mean"]),
                             _fmt(s["facc_halfwidth"])])


def _write_curves(out_dir, strategies, logs_by_strategy, budget) -> None:
    for strategy in strategies:
        counts, means, halves = mean_curve(logs_by_strategy[strategy])
        with open(os.path.join(out_dir, f"curve_{strategy}.csv"), "w",
                  newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["budget_fraction", "mean_accuracy", "halfwidth"])
            for k in range(len(counts)):
                writer.writerow([_fmt(counts[k] / budget), _fmt(means[k]),
                                 _fmt(halves[k])])


def _mean_runlog(logs) -> RunLog:
    """Synthetic run log carrying per-budget mean accuracy across seeds."""
    counts, means, _ = mean_curve(logs)
    from .loop import IterationRecord
    records = [IterationRecord(k, int(counts[k]), float(means[k]), 0.0, {})
               for k in range(len(counts))]
    return RunLog(logs[0].strategy, -1, logs[0].budget, records)


def _write_penalty(path, strategies, logs_by_strategy) -> None:
    mean_logs = {s: [_mean_runlog(logs_by_strategy[s])] for s in strategies}
    budgets = [rec.labeled_count for rec in mean_logs[strategies[0]][0].records]
    methods, matrix = penalty_matrix(mean_logs, budgets)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method"] + list(methods))
        for i, name in enumerate(methods):
            writer.writerow([name] + [int(v) for v in matrix[i]])


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = _replace_cfg(cfg, seeds=(args.seed,))
    if args.strategy is not None:
        if args.strategy not in cfg.strategies:
            raise ConfigError(
                [f"--strategy {args.strategy} not in the config strategy list"])
        cfg = _replace_cfg(cfg, strategies=(args.strategy,))
    out_dir = args.out or cfg.output_dir
    runlog_dir = os.path.join(out_dir, "runlogs")
    os.makedirs(runlog_dir, exist_ok=True)

    tasks = [(strategy, seed) for strategy in cfg.strategies
             for seed in cfg.seeds]
    config_dict = to_dict(cfg)
    jobs = args.jobs or os.cpu_count() or 1
    logs: dict[tuple[str, int], RunLog] = {}
    if jobs == 1 or len(tasks) == 1:
        for strategy, seed in tasks:
            logs[(strategy, seed)] = _run_task(config_dict, strategy, seed)
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {pool.submit(_run_task, config_dict, strategy, seed):
                       (strategy, seed) for strategy, seed in tasks}
            for fut in concurrent.futures.as_completed(futures):
                logs[futures[fut]] = fut.result()

    logs_by_strategy = {s: [logs[(s, seed)] for seed in cfg.seeds]
                        for s in cfg.strategies}
    for (strategy, seed), runlog in sorted(logs.items()):
        write_runlog_csv(runlog, os.path.join(
            runlog_dir, f"{strategy}_seed{seed}.csv"))
    _write_summary(os.path.join(out_dir, "summary.csv"), cfg.strategies,
                   logs_by_strategy)
    _write_curves(out_dir, cfg.strategies, logs_by_strategy, cfg.budget)
    _write_penalty(os.path.join(out_dir, "penalty_matrix.csv"),
                   list(cfg.strategies), logs_by_strategy)

    with open(os.path.join(out_dir, "config.toml"), "w", encoding="utf-8") as fh:
        fh.write(emit_toml(config_dict))
    with open(os.path.join(out_dir, "manifest.toml"), "w", encoding="utf-8") as fh:
        fh.write(emit_toml({"manifest": {
            "version": __version__,
            "config_sha256": config_hash(cfg),
            "strategies": list(cfg.strategies),
            "seeds": list(cfg.seeds),
        }}))
    print(f"wrote results for {len(tasks)} runs to {out_dir}")
    return 0


def _replace_cfg(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    from dataclasses import replace
    return replace(cfg, **kw)


def cmd_report(args) -> int:
    runlog_dir = args.runlog_dir
    files = sorted(f for f in os.listdir(runlog_dir) if f.endswith(".csv"))
    if not files:
        raise ConfigError([f"no run logs found in {runlog_dir}"])
    logs_by_strategy = defaultdict(list)
    budget = None
    for name in files:
        runlog = read_runlog_csv(os.path.join(runlog_dir, name))
        logs_by_strategy[runlog.strategy].append(runlog)
        budget = runlog.budget
    strategies = sorted(logs_by_strategy)
    out_dir = args.out or os.path.dirname(os.path.abspath(runlog_dir))
    os.makedirs(out_dir, exist_ok=True)
    _write_summary(os.path.join(out_dir, "summary.csv"), strategies,
                   logs_by_strategy)
    _write_curves(out_dir, strategies, logs_by_strategy, budget)
    _write_penalty(os.path.join(out_dir, "penalty_matrix.csv"), strategies,
                   logs_by_strategy)
    print(f"wrote report for {len(files)} run logs to {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="batchal",
        description="Batch active-learning experiments with a reward-policy "
                    "selector, baselines and AUBC/F-acc reports.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="generate a synthetic CSV dataset")
    gen.add_argument("--classes", type=int, default=10)
    gen.add_argument("--dim", type=int, default=16)
    gen.add_argument("--per-class", type=int, default=200)
    gen.add_argument("--class-sep", type=float, default=3.0)
    gen.add_argument("--seed", type=int, default=1234)
    gen.add_argument("--imbalance", choices=["none", "linear", "exponential"],
                     default="none")
    gen.add_argument("--ratios", help="comma-separated linear ratios")
    gen.add_argument("--factor", type=float, help="exponential decay factor")
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_gen_data)

    runp = sub.add_parser("run", help="run all (strategy x seed) experiments")
    runp.add_argument("--config", required=True)
    runp.add_argument("--seed", type=int, help="override the seed list")
    runp.add_argument("--strategy", help="run only this strategy")
    runp.add_argument("--out", help="override the output directory")
    runp.add_argument("--jobs", type=int,
                      help="worker processes (default: cpu count)")
    runp.set_defaults(func=cmd_run)

    rep = sub.add_parser("report", help="recompute summaries from stored run logs")
    rep.add_argument("--runlog-dir", required=True)
    rep.add_argument("--out", help="output directory (default: next to run logs)")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for violation in exc.violations:
            print(f"config error: {violation}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
