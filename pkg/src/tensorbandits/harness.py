"""Experiment driver: seeded replicated runs, grid tuning, and aggregation.

Every replication owns private RNG streams derived from the master seed (see
:mod:`tensorbandits.environment`), so running replications across a thread
pool produces byte-identical trace files to a serial run.  Traces are
checkpointed CSV rows; aggregation compares policies with Welch t-tests on
final regrets and renders regret-curve figures next to the delimited output.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .completion import CompletionOptions, Observation
from .config import ConfigError, ExperimentConfig, config_from_mapping
from .environment import (
    PURPOSE_CONTEXT,
    PURPOSE_NOISE,
    PURPOSE_POLICY,
    PURPOSE_TRUTH,
    Environment,
    RegretTrace,
    child_seed,
    load_context_sequence,
    load_env,
    record_regret,
    stream,
    synth_env,
)
from .policies.base import OraclePolicy
from .policies.elimination import TensorElimination
from .policies.ensemble import EnsemblePrior, EnsembleSampling
from .policies.epoch_greedy import EpochGreedy
from .policies.ucb import VectorizedUcb
from .tensor import Arm, check_arm

TRACE_HEADER = ["replication", "t", "policy", "phase", "arm", "inst_regret", "cum_regret"]


@dataclass
class RunSummary:
    """Replication-aggregated view of one run."""

    policy: str
    horizon: int
    replications: int
    checkpoints: list[int]
    mean: list[float]
    std: list[float]
    final_regrets: list[float]
    wall_clock: float


def checkpoint_steps(n: int, stride: int) -> list[int]:
    """Stride multiples up to n, with n always included."""
    steps = list(range(stride, n + 1, stride))
    if not steps or steps[-1] != n:
        steps.append(n)
    return steps


def _make_env(cfg: ExperimentConfig, replication: int) -> Environment:
    if cfg.tensor_file:
        env = load_env(cfg.tensor_file, cfg.noise_std, cfg.context_dim)
        return env
    seed = child_seed(cfg.seed, replication, PURPOSE_TRUTH)
    return synth_env(cfg.p, cfg.r, cfg.w, cfg.noise_std, cfg.context_dim, seed)


def _ranks(cfg: ExperimentConfig, env: Environment) -> tuple[int, ...]:
    if cfg.ranks is not None:
        if len(cfg.ranks) != env.truth.ndim:
            raise ConfigError(
                f"key 'ranks': expected {env.truth.ndim} entries for dims {env.dims}, got {len(cfg.ranks)}"
            )
        return cfg.ranks
    if cfg.r is not None:
        return (cfg.r,) * env.truth.ndim
    raise ConfigError("key 'ranks': required when neither r nor ranks is given")


def make_policy(cfg: ExperimentConfig, env: Environment, rng: np.random.Generator):
    """Instantiate the configured policy against an environment."""
    if cfg.policy == "oracle":
        return OraclePolicy(env)
    if cfg.policy == "vectorized_ucb":
        return VectorizedUcb(env.dims, alpha=cfg.alpha, context_dim=cfg.context_dim)
    ranks = _ranks(cfg, env)
    opts = CompletionOptions(
        ranks=ranks, tolerance=cfg.completion_tol, max_iterations=cfg.completion_max_iter
    )
    if cfg.policy == "epoch_greedy":
        return EpochGreedy(
            env.dims, ranks, rng, c2=cfg.c2, completion=opts, context_dim=cfg.context_dim
        )
    if cfg.policy == "elimination":
        return TensorElimination(
            env.dims,
            ranks,
            cfg.n,
            rng,
            lambda1=cfg.lambda1,
            c=cfg.c,
            c0=cfg.c0,
            delta=cfg.delta,
            completion=opts,
            n1_floor=cfg.n1_floor,
        )
    if cfg.policy == "ensemble":
        prior = EnsemblePrior(
            sigma_k=cfg.sigma_prior,
            sigma=cfg.sigma_fit,
            sigma_tilde=math.sqrt(cfg.sigma_tilde2),
            n_models=cfg.n_models,
        )
        return EnsembleSampling(
            env.dims,
            ranks,
            rng,
            prior=prior,
            context_dim=cfg.context_dim,
            init_sweeps=cfg.init_sweeps,
            step_sweeps=cfg.step_sweeps,
        )
    raise ConfigError(f"key 'policy': unsupported policy {cfg.policy!r}")


def _run_replication(cfg: ExperimentConfig, replication: int, contexts: list[Arm] | None):
    """One seeded replication; returns (per-step rows-ready arrays, final regret)."""
    env = _make_env(cfg, replication)
    noise_rng = stream(cfg.seed, replication, PURPOSE_NOISE)
    policy_rng = stream(cfg.seed, replication, PURPOSE_POLICY)
    context_rng = stream(cfg.seed, replication, PURPOSE_CONTEXT)
    policy = make_policy(cfg, env, policy_rng)
    trace = RegretTrace()
    phases: list[str] = []
    arms: list[Arm] = []
    for t in range(cfg.n):
        if cfg.context_dim > 0:
            if contexts is not None:
                context = contexts[t % len(contexts)]
            else:
                context = env.draw_context(context_rng)
        else:
            context = None
        arm, phase = policy.select(context)
        reward = env.pull(arm, noise_rng)
        record_regret(trace, env, context, arm)
        policy.update(arm, reward, phase)
        phases.append(phase)
        arms.append(arm)
    return phases, arms, trace


def _trace_rows(cfg: ExperimentConfig, replication: int, phases, arms, trace, full_trace: bool):
    steps = range(1, cfg.n + 1) if full_trace else checkpoint_steps(cfg.n, cfg.checkpoint_stride)
    rows = []
    for t in steps:
        i = t - 1
        rows.append(
            [
                replication,
                t,
                cfg.policy,
                phases[i],
                "|".join(str(x) for x in arms[i]),
                repr(trace.instantaneous[i]),
                repr(trace.cumulative[i]),
            ]
        )
    return rows


def run_experiment(
    cfg: ExperimentConfig,
    out_dir: str | Path | None = None,
    threads: int = 1,
    full_trace: bool = False,
) -> RunSummary:
    """Run R seeded replications of (environment x policy) and summarize.

    Writes ``traces.csv`` and ``summary.json`` under ``out_dir`` when given.
    Results are independent of the thread count.
    """
    started = time.perf_counter()
    contexts = None
    if cfg.context_file:
        if cfg.context_dim < 1:
            raise ConfigError("key 'context_file': requires context_dim >= 1")
        probe_env = _make_env(cfg, 0)
        contexts = load_context_sequence(cfg.context_file, probe_env.dims, cfg.context_dim)

    def job(rep: int):
        return _run_replication(cfg, rep, contexts)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, range(cfg.replications)))
    else:
        results = [job(rep) for rep in range(cfg.replications)]

    checkpoints = checkpoint_steps(cfg.n, cfg.checkpoint_stride)
    cums = np.array([[res[2].cumulative[t - 1] for t in checkpoints] for res in results])
    finals = [float(res[2].cumulative[-1]) for res in results]
    ddof = 1 if cfg.replications > 1 else 0
    summary = RunSummary(
        policy=cfg.policy,
        horizon=cfg.n,
        replications=cfg.replications,
        checkpoints=checkpoints,
        mean=[float(v) for v in cums.mean(axis=0)],
        std=[float(v) for v in cums.std(axis=0, ddof=ddof)],
        final_regrets=finals,
        wall_clock=time.perf_counter() - started,
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "traces.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(TRACE_HEADER)
            for rep, res in enumerate(results):
                writer.writerows(_trace_rows(cfg, rep, *res, full_trace))
        with open(out / "summary.json", "w") as fh:
            json.dump(
                {
                    "policy": summary.policy,
                    "horizon": summary.horizon,
                    "replications": summary.replications,
                    "checkpoints": summary.checkpoints,
                    "mean_cumulative_regret": summary.mean,
                    "std_cumulative_regret": summary.std,
                    "final_regrets": summary.final_regrets,
                    "wall_clock_seconds": summary.wall_clock,
                    "config": cfg.raw,
                },
                fh,
                indent=2,
            )
    return summary


def grid_search(
    cfg: ExperimentConfig,
    grids: list[tuple[str, list[str]]],
    threads: int = 1,
) -> tuple[dict[str, str], list[dict]]:
    """Sequential grid tuning with common random numbers across points.

    Parameters are tuned one at a time in file order: each grid is swept with
    all other parameters held at their current best, then its argmin value is
    fixed (ties keep the first grid order).  Every evaluated point reuses the
    same master seed, so comparisons share randomness.  Returns the best
    assignment and the full evaluation table.
    """
    best: dict[str, str] = {}
    table: list[dict] = []
    for key, values in grids:
        scores: list[float] = []
        for value in values:
            entries = dict(cfg.raw)
            entries.update(best)
            entries[key] = value
            point_cfg = config_from_mapping(entries)
            summary = run_experiment(point_cfg, out_dir=None, threads=threads)
            mean_final = float(np.mean(summary.final_regrets))
            scores.append(mean_final)
            table.append(
                {
                    "param": key,
                    "value": value,
                    "assignment": json.dumps({**best, key: value}, sort_keys=True),
                    "mean_final_regret": mean_final,
                }
            )
        best[key] = values[int(np.argmin(scores))]
    return best, table


def welch_t(a, b) -> tuple[float, float]:
    """Welch two-sample t statistic and two-sided p-value.

    Degenerate zero-variance samples return t = 0 for equal means and
    +/- inf otherwise, rather than NaN.
    """
    from scipy import stats

    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    va, vb = a.var(ddof=1), b.var(ddof=1)
    if va == 0.0 and vb == 0.0:
        if a.mean() == b.mean():
            return 0.0, 1.0
        return math.copysign(math.inf, a.mean() - b.mean()), 0.0
    res = stats.ttest_ind(a, b, equal_var=False)
    return float(res.statistic), float(res.pvalue)


def read_trace_dir(path) -> dict:
    """Parse one run directory's traces.csv into per-replication curves."""
    path = Path(path)
    trace_file = path / "traces.csv"
    if not trace_file.exists():
        raise FileNotFoundError(f"{trace_file} not found")
    per_rep: dict[int, dict[int, float]] = {}
    policy = None
    with open(trace_file, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            rep = int(row["replication"])
            t = int(row["t"])
            policy = row["policy"]
            per_rep.setdefault(rep, {})[t] = float(row["cum_regret"])
    if not per_rep:
        raise ValueError(f"{trace_file}: no rows")
    horizons = {max(curve) for curve in per_rep.values()}
    if len(horizons) != 1:
        raise ValueError(f"{trace_file}: replications have mismatched horizons {sorted(horizons)}")
    return {"policy": policy, "per_rep": per_rep, "horizon": horizons.pop(), "dir": str(path)}


@dataclass
class AggregateReport:
    labels: list[str]
    checkpoints: list[int]
    curves: dict[str, tuple[list[float], list[float]]]  # label -> (mean, std)
    finals: dict[str, list[float]]
    comparisons: list[dict]


def aggregate(trace_dirs, report_path: str | Path) -> AggregateReport:
    """Aggregate one or more run directories into a comparison report.

    Writes, next to ``report_path``: the report text itself, ``curves.csv``
    and ``comparisons.csv`` (delimited output), and regret-curve / final-box
    figures as PNG files.
    """
    runs = [read_trace_dir(d) for d in trace_dirs]
    horizons = {run["horizon"] for run in runs}
    if len(horizons) != 1:
        raise ValueError(f"mismatched horizons across runs: {sorted(horizons)}")
    labels: list[str] = []
    seen: dict[str, int] = {}
    for run in runs:
        base = run["policy"]
        seen[base] = seen.get(base, 0) + 1
        label = base if seen[base] == 1 else f"{base}#{seen[base]}"
        labels.append(label)
        run["label"] = label
    common = None
    for run in runs:
        steps = set.intersection(*(set(c.keys()) for c in run["per_rep"].values()))
        common = steps if common is None else (common & steps)
    checkpoints = sorted(common)
    curves = {}
    finals = {}
    for run in runs:
        reps = sorted(run["per_rep"])
        mat = np.array([[run["per_rep"][rep][t] for t in checkpoints] for rep in reps])
        ddof = 1 if len(reps) > 1 else 0
        curves[run["label"]] = (
            [float(v) for v in mat.mean(axis=0)],
            [float(v) for v in mat.std(axis=0, ddof=ddof)],
        )
        finals[run["label"]] = [float(run["per_rep"][rep][run["horizon"]]) for rep in reps]
    comparisons = []
    for i in range(len(runs)):
        for j in range(i + 1, len(runs)):
            la, lb = runs[i]["label"], runs[j]["label"]
            fa, fb = finals[la], finals[lb]
            t_stat, p_val = welch_t(fa, fb)
            mean_a, mean_b = float(np.mean(fa)), float(np.mean(fb))
            reduction = 100.0 * (mean_a - mean_b) / mean_a if mean_a != 0 else 0.0
            comparisons.append(
                {
                    "policy_a": la,
                    "policy_b": lb,
                    "mean_final_a": mean_a,
                    "mean_final_b": mean_b,
                    "reduction_pct_b_vs_a": reduction,
                    "welch_t": t_stat,
                    "p_value": p_val,
                }
            )
    report_path = Path(report_path)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    out_dir = report_path.parent
    with open(out_dir / "curves.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["policy", "t", "mean_cum_regret", "std_cum_regret"])
        for label in labels:
            mean, std = curves[label]
            for t, m, s in zip(checkpoints, mean, std):
                writer.writerow([label, t, repr(m), repr(s)])
    with open(out_dir / "comparisons.csv", "w", newline="") as fh:
        writer = csv.DictWriter(
            fh,
            fieldnames=[
                "policy_a", "policy_b", "mean_final_a", "mean_final_b",
                "reduction_pct_b_vs_a", "welch_t", "p_value",
            ],
        )
        writer.writeheader()
        writer.writerows(comparisons)
    lines = ["policy comparison report", "=" * 40, ""]
    for label in labels:
        f = finals[label]
        lines.append(
            f"{label}: final regret mean {np.mean(f):.4f} +/- {np.std(f, ddof=1 if len(f) > 1 else 0):.4f}"
            f" over {len(f)} replications"
        )
    lines.append("")
    for comp in comparisons:
        lines.append(
            f"{comp['policy_b']} vs {comp['policy_a']}: reduction {comp['reduction_pct_b_vs_a']:.1f}%"
            f", Welch t = {comp['welch_t']:.3f}, p = {comp['p_value']:.3g}"
        )
    with open(report_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    from .plots import render_final_regrets, render_regret_curves

    render_regret_curves(checkpoints, curves, out_dir / "regret_curves.png")
    render_final_regrets(finals, out_dir / "final_regrets.png")
    return AggregateReport(labels, checkpoints, curves, finals, comparisons)


def load_observations(path, dims) -> list[Observation]:
    """Observation file: one line per sample, 1-based indices then the reward."""
    obs: list[Observation] = []
    d = len(dims)
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            toks = line.split()
            if not toks:
                continue
            if len(toks) != d + 1:
                raise ValueError(f"{path}: line {lineno}: expected {d} indices and a reward")
            try:
                arm = tuple(int(t) for t in toks[:d])
                reward = float(toks[d])
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from exc
            check_arm(arm, dims)
            obs.append(Observation(arm=arm, reward=reward))
    if not obs:
        raise ValueError(f"{path}: no observations found")
    return obs
