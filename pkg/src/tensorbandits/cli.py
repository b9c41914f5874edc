"""Command-line entry point: run, tune, aggregate, and standalone completion.

Exit codes: 0 on success, 1 on configuration errors, 2 on runtime errors.
The environment variable ``TB_SEED`` overrides the config seed.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from .completion import CompletionOptions, complete
from .config import ConfigError, parse_config, parse_grid
from .harness import aggregate, grid_search, load_observations, run_experiment
from .tensor import load_tensor, save_tensor, tucker_reconstruct


def _apply_seed_override(cfg):
    override = os.environ.get("TB_SEED")
    if override is not None:
        try:
            cfg.seed = int(override)
        except ValueError:
            raise ConfigError(f"TB_SEED must be an integer, got {override!r}") from None
        cfg.raw["seed"] = override
    return cfg


def _cmd_run(args) -> int:
    cfg = _apply_seed_override(parse_config(args.config))
    out_dir = Path(args.out) if args.out else Path("runs") / cfg.policy
    summary = run_experiment(cfg, out_dir=out_dir, threads=args.threads, full_trace=args.full_trace)
    print(
        f"{summary.policy}: {summary.replications} replications, horizon {summary.horizon}, "
        f"mean final regret {np.mean(summary.final_regrets):.4f} "
        f"({summary.wall_clock:.1f}s) -> {out_dir}"
    )
    return 0


def _cmd_tune(args) -> int:
    cfg = _apply_seed_override(parse_config(args.config))
    grids = parse_grid(args.grid)
    best, table = grid_search(cfg, grids, threads=args.threads)
    out_dir = Path(args.out) if args.out else Path("runs") / f"tune_{cfg.policy}"
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "grid_table.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["param", "value", "assignment", "mean_final_regret"])
        writer.writeheader()
        writer.writerows(table)
    with open(out_dir / "best.json", "w") as fh:
        json.dump(best, fh, indent=2)
    print(f"best hyperparameters: {best} -> {out_dir}")
    return 0


def _cmd_aggregate(args) -> int:
    report = aggregate(args.trace_dirs, args.report)
    print(f"aggregated {len(report.labels)} runs -> {args.report}")
    for comp in report.comparisons:
        print(
            f"  {comp['policy_b']} vs {comp['policy_a']}: "
            f"reduction {comp['reduction_pct_b_vs_a']:.1f}%, t={comp['welch_t']:.2f}, p={comp['p_value']:.3g}"
        )
    return 0


def _cmd_complete(args) -> int:
    truth = load_tensor(args.tensor)
    ranks = tuple(int(tok) for tok in args.ranks.split(","))
    if len(ranks) != truth.ndim:
        raise ConfigError(f"--ranks: expected {truth.ndim} entries for dims {truth.shape}")
    obs = load_observations(args.obs, truth.shape)
    opts = CompletionOptions(ranks=ranks, tolerance=args.tol, max_iterations=args.max_iter)
    estimate = tucker_reconstruct(complete(obs, truth.shape, opts))
    save_tensor(args.out, estimate)
    denom = np.linalg.norm(truth)
    rel = np.linalg.norm(estimate - truth) / denom if denom > 0 else float("nan")
    print(f"completed from {len(obs)} observations; relative error vs tensor file: {rel:.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tensor-bandits",
        description="Low-rank tensor bandit simulations: run policies, tune, and compare.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None, help="output directory (traces.csv, summary.json)")
    p_run.add_argument("--threads", type=int, default=1)
    p_run.add_argument("--full-trace", action="store_true", help="write every step, not checkpoints")
    p_run.set_defaults(func=_cmd_run)

    p_tune = sub.add_parser("tune", help="sequential grid search over hyperparameters")
    p_tune.add_argument("--config", required=True)
    p_tune.add_argument("--grid", required=True)
    p_tune.add_argument("--out", default=None)
    p_tune.add_argument("--threads", type=int, default=1)
    p_tune.set_defaults(func=_cmd_tune)

    p_agg = sub.add_parser("aggregate", help="compare run directories")
    p_agg.add_argument("trace_dirs", nargs="+")
    p_agg.add_argument("--report", required=True, help="report text path; CSVs and figures land beside it")
    p_agg.set_defaults(func=_cmd_aggregate)

    p_comp = sub.add_parser("complete", help="standalone tensor completion from an observation file")
    p_comp.add_argument("--tensor", required=True, help="reference tensor in the text format")
    p_comp.add_argument("--obs", required=True, help="lines of '<i1> ... <id> <reward>' (1-based)")
    p_comp.add_argument("--ranks", required=True, help="comma-separated Tucker ranks")
    p_comp.add_argument("--out", required=True, help="where to write the reconstruction")
    p_comp.add_argument("--tol", type=float, default=1e-6)
    p_comp.add_argument("--max-iter", type=int, default=50)
    p_comp.set_defaults(func=_cmd_complete)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
