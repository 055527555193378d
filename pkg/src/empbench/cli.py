"""Command-line interface for the benchmark harness.

Subcommands:

* ``run <config>``       full sweep, writes records.csv and summary.csv
* ``tv <config>``        same sweep, writes records.csv and tv_summary.csv
* ``oracle <env>``       print the exact average reward and stationary
                         distribution of the default target policy
* ``env-check <env>``    validate the environment's invariants

Exit codes: 0 success, 2 invalid configuration, 3 runtime error.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from .envs import ENVIRONMENTS, build_environment
from .harness import (ExperimentConfig, InvalidConfig, emit_csv, load_config,
                      make_policies, run_experiment, summarize_mse, summarize_tv)
from .mdp import average_reward, stationary_distribution


def _out_dir(cfg, args) -> Path:
    out = Path(args.out if args.out is not None else cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    records = run_experiment(cfg, master_seed=args.seed, workers=args.workers,
                             measure_time=args.timings)
    out = _out_dir(cfg, args)
    emit_csv(records, out / "records.csv")
    emit_csv(summarize_mse(records), out / "summary.csv")
    print(f"wrote {len(records)} records to {out / 'records.csv'}")
    return 0


def _cmd_tv(args) -> int:
    cfg = load_config(args.config)
    records = run_experiment(cfg, master_seed=args.seed, workers=args.workers,
                             measure_time=args.timings)
    out = _out_dir(cfg, args)
    emit_csv(records, out / "records.csv")
    rows = summarize_tv(records)
    emit_csv(rows, out / "tv_summary.csv")
    print(f"wrote {len(rows)} summary rows to {out / 'tv_summary.csv'}")
    return 0


def _cmd_oracle(args) -> int:
    mdp = build_environment(args.environment)
    cfg = ExperimentConfig(environment=args.environment)
    target, _ = make_policies(mdp, cfg, args.seed)
    value = average_reward(mdp, target)
    dist = stationary_distribution(mdp, target)
    print(f"environment = {args.environment}")
    print(f"average_reward = {value:.12g}")
    print("stationary_distribution = "
          + " ".join(format(p, ".12g") for p in dist.probs))
    return 0


def _cmd_env_check(args) -> int:
    mdp = build_environment(args.environment)  # constructor validates invariants
    rows = mdp.transition.sum(axis=2)
    print(f"environment = {args.environment}")
    print(f"num_states = {mdp.num_states}")
    print(f"num_actions = {mdp.num_actions}")
    print(f"max transition row-sum deviation = {np.abs(rows - 1.0).max():.3g}")
    print(f"initial_dist sum deviation = {abs(mdp.initial_dist.sum() - 1.0):.3g}")
    print("ok")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="empbench",
                                     description="off-policy evaluation benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
        p.add_argument("--workers", type=int, default=1, help="parallel cell workers")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--timings", action="store_true",
                       help="record real wall times (off by default so repeated "
                            "runs emit byte-identical CSV)")

    p_run = sub.add_parser("run", help="run the full sweep from a config file")
    p_run.add_argument("config")
    common(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_tv = sub.add_parser("tv", help="run the sweep and summarize TV distances")
    p_tv.add_argument("config")
    common(p_tv)
    p_tv.set_defaults(func=_cmd_tv)

    p_oracle = sub.add_parser("oracle", help="print exact target-policy values")
    p_oracle.add_argument("environment", choices=sorted(ENVIRONMENTS))
    p_oracle.add_argument("--seed", type=int, default=0)
    p_oracle.set_defaults(func=_cmd_oracle)

    p_check = sub.add_parser("env-check", help="validate environment invariants")
    p_check.add_argument("environment", choices=sorted(ENVIRONMENTS))
    p_check.set_defaults(func=_cmd_env_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except InvalidConfig as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 3


def entry() -> None:
    sys.exit(main())
