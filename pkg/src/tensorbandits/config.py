"""Experiment configuration: flat key=value files with strict key checking.

Unknown keys are rejected by name (with a close-match suggestion), and every
domain violation names the offending key.  The same format is used for grid
files, whose values are comma-separated lists tuned sequentially.
"""

from __future__ import annotations

import difflib
from dataclasses import dataclass, field

POLICIES = ("epoch_greedy", "elimination", "ensemble", "vectorized_ucb", "oracle")


class ConfigError(ValueError):
    """Invalid configuration; maps to CLI exit code 1."""


@dataclass
class ExperimentConfig:
    """One environment x policy run block with all hyperparameters resolved."""

    policy: str = ""
    # environment
    p: int | None = None
    r: int | None = None
    w: float = 0.5
    noise_std: float = 1.0
    context_dim: int = 0
    seed: int = 0
    tensor_file: str | None = None
    context_file: str | None = None
    # run
    n: int = 0
    replications: int = 30
    checkpoint_stride: int = 10
    # policy hyperparameters
    ranks: tuple[int, ...] | None = None
    c2: float = 10.0
    c0: float = 0.02
    c: float = 0.04
    n1_floor: int = 8
    lambda1: float = 0.1
    delta: float | None = None
    alpha: float = 1.0
    n_models: int = 100
    sigma_tilde2: float = 0.1
    sigma_fit: float = 1.0
    sigma_prior: float = 1.0
    init_sweeps: int = 5
    step_sweeps: int = 1
    completion_tol: float = 1e-6
    completion_max_iter: int = 50
    raw: dict[str, str] = field(default_factory=dict)


def _parse_int(key: str, value: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"key '{key}': expected an integer, got {value!r}") from None


def _parse_float(key: str, value: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"key '{key}': expected a number, got {value!r}") from None


def _parse_ranks(key: str, value: str) -> tuple[int, ...]:
    try:
        ranks = tuple(int(tok) for tok in value.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"key '{key}': expected comma-separated integers, got {value!r}") from None
    if not ranks or any(r < 1 for r in ranks):
        raise ConfigError(f"key '{key}': ranks must be positive integers")
    return ranks


_PARSERS = {
    "policy": lambda k, v: v,
    "p": _parse_int,
    "r": _parse_int,
    "w": _parse_float,
    "noise_std": _parse_float,
    "context_dim": _parse_int,
    "seed": _parse_int,
    "tensor_file": lambda k, v: v,
    "context_file": lambda k, v: v,
    "n": _parse_int,
    "replications": _parse_int,
    "checkpoint_stride": _parse_int,
    "ranks": _parse_ranks,
    "c2": _parse_float,
    "c0": _parse_float,
    "c": _parse_float,
    "n1_floor": _parse_int,
    "lambda1": _parse_float,
    "delta": _parse_float,
    "alpha": _parse_float,
    "n_models": _parse_int,
    "sigma_tilde2": _parse_float,
    "sigma_fit": _parse_float,
    "sigma_prior": _parse_float,
    "init_sweeps": _parse_int,
    "step_sweeps": _parse_int,
    "completion_tol": _parse_float,
    "completion_max_iter": _parse_int,
}

# Keys the tune command may sweep.
TUNABLE_KEYS = (
    "c", "c0", "c2", "lambda1", "alpha", "sigma_tilde2", "sigma_prior", "n_models", "delta",
)


def parse_kv_lines(path) -> dict[str, str]:
    """Read ``key = value`` lines, ignoring blanks and '#' comments."""
    out: dict[str, str] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}: line {lineno}: expected 'key = value'")
            key, value = stripped.split("=", 1)
            key, value = key.strip(), value.strip()
            if key in out:
                raise ConfigError(f"{path}: line {lineno}: duplicate key '{key}'")
            out[key] = value
    return out


def _reject_unknown(key: str) -> None:
    suggestion = difflib.get_close_matches(key, _PARSERS.keys(), n=1)
    hint = f"; did you mean '{suggestion[0]}'?" if suggestion else ""
    raise ConfigError(f"unknown key '{key}'{hint}")


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    """Domain checks; every failure names the offending key."""
    if cfg.policy not in POLICIES:
        raise ConfigError(f"key 'policy': must be one of {', '.join(POLICIES)}; got {cfg.policy!r}")
    if cfg.n < 1:
        raise ConfigError(f"key 'n': horizon must be at least 1, got {cfg.n}")
    if cfg.replications < 1:
        raise ConfigError(f"key 'replications': must be at least 1, got {cfg.replications}")
    if cfg.checkpoint_stride < 1:
        raise ConfigError(f"key 'checkpoint_stride': must be at least 1, got {cfg.checkpoint_stride}")
    if cfg.tensor_file is None:
        if cfg.p is None:
            raise ConfigError("key 'p': required unless tensor_file is given")
        if cfg.p < 2:
            raise ConfigError(f"key 'p': must be at least 2, got {cfg.p}")
        if cfg.r is None:
            raise ConfigError("key 'r': required unless tensor_file is given")
        if not 1 <= cfg.r <= cfg.p:
            raise ConfigError(f"key 'r': must lie in [1, p], got {cfg.r}")
        if cfg.w <= 0:
            raise ConfigError(f"key 'w': signal strength must be positive, got {cfg.w}")
    if cfg.noise_std < 0:
        raise ConfigError(f"key 'noise_std': must be nonnegative, got {cfg.noise_std}")
    if cfg.context_dim < 0:
        raise ConfigError(f"key 'context_dim': must be nonnegative, got {cfg.context_dim}")
    if cfg.policy == "elimination" and cfg.context_dim != 0:
        raise ConfigError("key 'context_dim': tensor elimination is context-free; set context_dim = 0")
    if cfg.policy in ("epoch_greedy", "elimination", "ensemble") and cfg.tensor_file and cfg.ranks is None:
        raise ConfigError(f"key 'ranks': required for policy '{cfg.policy}' with a tensor file")
    for key in ("c2", "c0", "c", "lambda1", "alpha", "sigma_fit", "sigma_prior", "w"):
        if getattr(cfg, key) <= 0:
            raise ConfigError(f"key '{key}': must be positive, got {getattr(cfg, key)}")
    if cfg.delta is not None and not 0 < cfg.delta < 1:
        raise ConfigError(f"key 'delta': must lie in (0, 1), got {cfg.delta}")
    if cfg.sigma_tilde2 < 0:
        raise ConfigError(f"key 'sigma_tilde2': must be nonnegative, got {cfg.sigma_tilde2}")
    if cfg.n_models < 1:
        raise ConfigError(f"key 'n_models': must be at least 1, got {cfg.n_models}")
    if cfg.init_sweeps < 1 or cfg.step_sweeps < 0:
        raise ConfigError("keys 'init_sweeps'/'step_sweeps': need init_sweeps >= 1 and step_sweeps >= 0")
    if cfg.n1_floor < 0:
        raise ConfigError(f"key 'n1_floor': must be nonnegative, got {cfg.n1_floor}")
    if cfg.completion_tol <= 0:
        raise ConfigError(f"key 'completion_tol': must be positive, got {cfg.completion_tol}")
    if cfg.completion_max_iter < 1:
        raise ConfigError(f"key 'completion_max_iter': must be at least 1, got {cfg.completion_max_iter}")
    return cfg


def config_from_mapping(entries: dict[str, str]) -> ExperimentConfig:
    cfg = ExperimentConfig(raw=dict(entries))
    for key, value in entries.items():
        parser = _PARSERS.get(key)
        if parser is None:
            _reject_unknown(key)
        setattr(cfg, key, parser(key, value))
    return validate(cfg)


def parse_config(path) -> ExperimentConfig:
    """Parse and validate an experiment config file."""
    return config_from_mapping(parse_kv_lines(path))


def parse_grid(path) -> list[tuple[str, list[str]]]:
    """Parse a grid file: tunable keys mapped to comma-separated value lists.

    Order of lines defines the sequential tuning order.
    """
    grids: list[tuple[str, list[str]]] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}: line {lineno}: expected 'key = v1,v2,...'")
            key, value = (tok.strip() for tok in stripped.split("=", 1))
            if key not in TUNABLE_KEYS:
                suggestion = difflib.get_close_matches(key, TUNABLE_KEYS, n=1)
                hint = f"; did you mean '{suggestion[0]}'?" if suggestion else ""
                raise ConfigError(f"{path}: line {lineno}: key '{key}' is not tunable{hint}")
            values = [tok.strip() for tok in value.split(",") if tok.strip()]
            if not values:
                raise ConfigError(f"{path}: line {lineno}: empty grid for key '{key}'")
            grids.append((key, values))
    if not grids:
        raise ConfigError(f"{path}: no grid entries found")
    return grids
