"""Command-line experiment runner.

Exit codes: 0 success, 1 configuration/validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from .config import ConfigError, ExperimentConfig
from . import runner


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _names(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="greensched",
        description="Green-datacenter scheduling experiments: evaluation, "
                    "comparisons, training and sweeps.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, config_required: bool = True):
        p.add_argument("--config", required=config_required,
                       help="experiment config file (YAML)")
        p.add_argument("--seed", type=int, default=None,
                       help="override run.seeds with this single seed")
        p.add_argument("--out", default=None, help="output directory")

    p = sub.add_parser("evaluate", help="run the configured policy over run.seeds")
    common(p)
    p.add_argument("--policy", default=None, help="policy name or checkpoint path")

    p = sub.add_parser("compare", help="evaluate several policies on shared seeds")
    common(p)
    p.add_argument("--policies", default="sjf,qos,hvf,fcfs",
                   help="comma-separated policy names (checkpoint paths allowed)")
    p.add_argument("--baseline", default=None, help="baseline policy for deltas")

    p = sub.add_parser("train-online", help="train the scheduler in the live env")
    common(p)

    p = sub.add_parser("train-offline", help="train from a transition dataset")
    common(p)
    p.add_argument("--dataset", required=True, help="dataset file from 'collect'")
    p.add_argument("--mode", choices=("bc", "crr"), default=None,
                   help="cloning (bc) or advantage-filtered (crr); "
                        "defaults to training.mode")

    p = sub.add_parser("collect", help="record heuristic rollouts to a dataset")
    common(p)
    p.add_argument("--policy", default="sjf",
                   help="policy name, or comma-separated names mixed evenly")
    p.add_argument("--episodes", type=int, default=20)
    p.add_argument("--dataset", required=True, help="output dataset path")

    p = sub.add_parser("agreement", help="action agreement of a checkpoint vs heuristic")
    common(p)
    p.add_argument("--policy", required=True, help="checkpoint path")
    p.add_argument("--heuristic", default="sjf", choices=sorted(["sjf", "qos", "hvf", "fcfs"]))
    p.add_argument("--episodes", type=int, default=10)

    p = sub.add_parser("sweep-power", help="evaluate policies across power levels")
    common(p)
    p.add_argument("--levels", default="1.0,0.9,0.8", help="comma-separated fractions")
    p.add_argument("--policies", default="sjf,qos,hvf,fcfs")

    p = sub.add_parser("sweep-horizon", help="train+evaluate across planning horizons")
    common(p)
    p.add_argument("--values", default="36,48,60,72")

    p = sub.add_parser("sweep-readypool", help="train+evaluate across ready-pool sizes")
    common(p)
    p.add_argument("--values", default="5,10,15")

    p = sub.add_parser("gradcheck", help="finite-difference check of every layer")
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=0)
    return parser


def _load_config(args) -> ExperimentConfig:
    config = ExperimentConfig.from_file(args.config)
    if getattr(args, "seed", None) is not None:
        config = config.with_overrides(run={"seeds": [args.seed]})
    return config


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "gradcheck":
            results, ok = runner.run_gradcheck(args.out, seed=args.seed)
            for r in results:
                status = "ok" if (r.passed if "control" not in r.name else not r.passed) \
                    else "FAIL"
                print(f"{r.name:40s} max_rel_error={r.max_rel_error:.3e} "
                      f"entries={r.checked} {status}")
            if not ok:
                print("gradient check FAILED", file=sys.stderr)
                return 2
            return 0

        config = _load_config(args)
        if args.command == "evaluate":
            records, summary = runner.run_evaluate(config, args.out, args.policy)
            print(f"episodes={summary['episodes']} "
                  f"mean_total_job_value="
                  f"{summary['metrics']['total_job_value']['mean']:.3f}")
        elif args.command == "compare":
            table = runner.run_compare(config, _names(args.policies), args.baseline,
                                       args.out)
            for row in table:
                print(f"{row['policy']:8s} {row['mean_total_job_value']:12.3f} "
                      f"{row['pct_vs_baseline']:+7.2f}% vs {row['baseline']}")
        elif args.command == "train-online":
            ckpt = runner.run_train_online(config, args.out)
            print(f"checkpoint written to {ckpt}")
        elif args.command == "train-offline":
            mode = args.mode or config.training.get("mode", "bc")
            ckpt = runner.run_train_offline(config, args.dataset, mode, args.out)
            print(f"checkpoint written to {ckpt}")
        elif args.command == "collect":
            count = runner.run_collect(config, _names(args.policy), args.episodes,
                                       args.dataset, seed=args.seed or 0)
            print(f"wrote {count} transitions to {args.dataset}")
        elif args.command == "agreement":
            fraction = runner.run_agreement(config, args.policy, args.heuristic,
                                            args.episodes, seed=args.seed or 0)
            print(f"action_agreement={fraction:.4f}")
        elif args.command == "sweep-power":
            rows = runner.run_power_sweep(config, _floats(args.levels),
                                          _names(args.policies), args.out)
            for row in rows:
                print(row)
        elif args.command == "sweep-horizon":
            for row in runner.run_horizon_sweep(config, _ints(args.values), args.out):
                print(row)
        elif args.command == "sweep-readypool":
            for row in runner.run_readypool_sweep(config, _ints(args.values), args.out):
                print(row)
        return 0
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
