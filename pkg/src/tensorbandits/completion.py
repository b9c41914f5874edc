"""Noisy low-rank tensor completion from uniformly random entry observations.

Two stages: a spectral initialization built from a rescaled unbiased entry
estimator plus per-mode second-moment U-statistics, then alternating power
iterations that refine the factor subspaces.  Both decision policies that
estimate the reward tensor from randomly pulled arms go through
:func:`complete`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .tensor import (
    Arm,
    TuckerDecomp,
    check_arm,
    fix_signs,
    marginal_multiply,
    matricize,
    rotate_coeffs,
    truncated_svd_left,
)


class Observation(NamedTuple):
    arm: Arm
    reward: float


@dataclass
class CompletionOptions:
    """Target ranks plus the power-iteration stopping rule."""

    ranks: tuple[int, ...]
    tolerance: float = 1e-6
    max_iterations: int = 50

    def __post_init__(self):
        self.ranks = tuple(int(r) for r in self.ranks)
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


def _as_index_arrays(obs: Sequence[Observation], dims: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """(T, d) 0-based index array and (T,) reward array, with range checks."""
    idx = np.empty((len(obs), len(dims)), dtype=np.int64)
    ys = np.empty(len(obs))
    for t, (arm, y) in enumerate(obs):
        check_arm(arm, dims)
        idx[t] = [i - 1 for i in arm]
        ys[t] = y
    return idx, ys


def u_statistic(obs: Sequence[Observation], dims: Sequence[int], axis: int) -> np.ndarray:
    """Mode-``axis`` second-moment U-statistic of the observations.

    Equals c * sum_{t != t'} y_t y_t' M_axis(A_t) M_axis(A_t')^T with
    c = (prod dims)^2 / (T (T-1)), computed in accumulation form: because
    each indicator matricizes to a one-hot outer product, the double sum
    collapses to B B^T minus its t == t' diagonal, where B accumulates
    y_t into (row = mode index, column = flat offset of the remaining
    indices).
    """
    dims = tuple(dims)
    idx, ys = _as_index_arrays(obs, dims)
    t_total = len(obs)
    if t_total < 2:
        raise ValueError("need at least 2 observations for the U-statistic")
    p_axis = dims[axis]
    rest = dims[:axis] + dims[axis + 1:]
    rest_size = int(np.prod(rest, dtype=np.int64)) if rest else 1
    rows = idx[:, axis]
    if rest:
        rest_idx = np.delete(idx, axis, axis=1)
        cols = np.ravel_multi_index(tuple(rest_idx.T), rest)
    else:
        cols = np.zeros(t_total, dtype=np.int64)
    b = np.zeros((p_axis, rest_size))
    np.add.at(b, (rows, cols), ys)
    diag = np.bincount(rows, weights=ys ** 2, minlength=p_axis)
    total = int(np.prod(dims, dtype=np.int64))
    scale = total ** 2 / (t_total * (t_total - 1))
    return scale * (b @ b.T - np.diag(diag))


def spectral_initialize(
    obs: Sequence[Observation], dims: Sequence[int], opts: CompletionOptions
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Rescaled unbiased entry estimator plus U-statistic factor subspaces.

    Returns ``x_ini = (prod dims / T) * sum_t y_t * indicator(arm_t)`` and,
    per mode, the top-r eigenvectors of the mode's U-statistic.  Ranks are
    known inputs here, so eigenvalue thresholding is replaced by rank
    truncation.
    """
    dims = tuple(dims)
    if len(obs) < 2:
        raise ValueError("need at least 2 observations")
    if len(opts.ranks) != len(dims):
        raise ValueError("ranks and dims must have equal length")
    idx, ys = _as_index_arrays(obs, dims)
    total = int(np.prod(dims, dtype=np.int64))
    x_ini = np.zeros(dims)
    np.add.at(x_ini, tuple(idx.T), ys)
    x_ini *= total / len(obs)

    factors0 = []
    for axis, r in enumerate(opts.ranks):
        r_hat = u_statistic(obs, dims, axis)
        eigvals, eigvecs = np.linalg.eigh(r_hat)
        top = eigvecs[:, np.argsort(eigvals)[::-1][:r]]
        factors0.append(fix_signs(top))
    return x_ini, factors0


def projected_norm(x_ini: np.ndarray, factors: Sequence[np.ndarray]) -> float:
    """Frobenius norm of x_ini contracted with every factor transpose."""
    return float(np.linalg.norm(rotate_coeffs(x_ini, factors)))


def power_iterate(
    x_ini: np.ndarray, factors0: Sequence[np.ndarray], opts: CompletionOptions
) -> list[np.ndarray]:
    """Alternating per-mode SVD refinement of the factor subspaces.

    Each sweep replaces factor j by the top-r_j left singular vectors of the
    mode-j matricization of x_ini projected onto all other current factors.
    Sweeps stop when the projected Frobenius norm gains at most
    ``opts.tolerance`` or after ``opts.max_iterations`` sweeps; the projected
    norm is nondecreasing across sweeps.
    """
    factors = [np.asarray(f) for f in factors0]
    for axis, f in enumerate(factors):
        err = np.max(np.abs(f.T @ f - np.eye(f.shape[1])))
        if err > 1e-8:
            raise ValueError(f"initial factor {axis} not orthonormal (max deviation {err:.2e})")
    d = x_ini.ndim
    last = projected_norm(x_ini, factors)
    for _ in range(opts.max_iterations):
        for axis in range(d):
            proj = x_ini
            for other in range(d):
                if other != axis:
                    proj = marginal_multiply(proj, factors[other].T, other)
            factors[axis] = truncated_svd_left(matricize(proj, axis), factors[axis].shape[1])
        current = projected_norm(x_ini, factors)
        if current - last <= opts.tolerance:
            break
        last = current
    return factors


def complete(obs: Sequence[Observation], dims: Sequence[int], opts: CompletionOptions) -> TuckerDecomp:
    """Full completion pipeline: spectral initialization, power iteration, core."""
    x_ini, factors0 = spectral_initialize(obs, dims, opts)
    factors = power_iterate(x_ini, factors0, opts)
    core = rotate_coeffs(x_ini, factors)
    return TuckerDecomp(core=core, factors=factors)
