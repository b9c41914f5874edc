"""Tensor ensemble sampling: M perturbed MAP models, act on a uniform draw.

Each model keeps its own perturbed copy of the reward stream and a Tucker
model (core plus unconstrained factor matrices) fitted by alternating
regularized least squares: every row of a factor matrix has a closed-form
update given the core and the other factors, and the core solves a small
ridge-stabilized least squares given the factors.  Acting greedily with
respect to a uniformly sampled ensemble member approximates Thompson
sampling without tractable posteriors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..tensor import Arm, marginal_multiply
from .base import EXPLOIT

_LETTERS = "abcdefghijkl"
CORE_RIDGE = 1e-8


@dataclass
class EnsemblePrior:
    """Gaussian row priors for the factor matrices plus noise scales.

    ``mu`` holds one p_j x r_j prior-mean matrix per mode (None means zero
    means).  ``sigma_k`` is the per-mode prior row std (scalar broadcasts),
    ``sigma`` the reward noise std used in the fit, ``sigma_tilde`` the
    reward perturbation std, and ``n_models`` the ensemble size M.
    """

    mu: list[np.ndarray] | None = None
    sigma_k: float | list[float] = 1.0
    sigma: float = 1.0
    sigma_tilde: float = 1.0
    n_models: int = 100

    def sigma_k_list(self, d: int) -> list[float]:
        if np.isscalar(self.sigma_k):
            return [float(self.sigma_k)] * d
        out = [float(s) for s in self.sigma_k]
        if len(out) != d:
            raise ValueError(f"sigma_k list has length {len(out)}, expected {d}")
        return out


def _normalize_columns(u: np.ndarray) -> np.ndarray:
    """Scale each column to unit Euclidean norm; zero columns pass through."""
    norms = np.linalg.norm(u, axis=0)
    safe = np.where(norms > 0, norms, 1.0)
    return u / safe


def _rows_product(core: np.ndarray, factors, idx: np.ndarray, skip: int) -> np.ndarray:
    """Per-observation contraction of the core with every mode's row but one.

    Returns the (t, r_skip) matrix whose s-th row is the core multiplied by
    factor rows at the observed indices of all modes except ``skip``.
    """
    d = core.ndim
    operands: list[np.ndarray] = [core]
    subs = [_LETTERS[:d]]
    for j in range(d):
        if j == skip:
            continue
        operands.append(factors[j][idx[:, j], :])
        subs.append("s" + _LETTERS[j])
    expr = ",".join(subs) + "->s" + _LETTERS[skip]
    return np.einsum(expr, *operands, optimize=True)


def _design_rows(core_shape, factors, idx: np.ndarray) -> np.ndarray:
    """Kronecker rows of factor rows at observed indices, matching core.ravel()."""
    t = idx.shape[0]
    design = np.ones((t, 1))
    for j in range(len(core_shape)):
        rows = factors[j][idx[:, j], :]
        design = (design[:, :, None] * rows[:, None, :]).reshape(t, -1)
    return design


def als_row_update(
    core: np.ndarray,
    factors,
    idx: np.ndarray,
    rewards: np.ndarray,
    mode: int,
    row: int,
    sigma: float,
    sigma_k: float,
    prior_row: np.ndarray,
) -> np.ndarray:
    """Closed-form update of one factor row, all other quantities fixed.

    Solves [sigma^-2 sum_{s: i_ks = i} v v^T + sigma_k^-2 I] u =
    sigma^-2 sum_{s: i_ks = i} y_s v + sigma_k^-2 prior_row, where v is the
    core contracted with the other modes' current rows at observation s.
    With no observation hitting the row, the update returns the prior row.
    """
    r = core.shape[mode]
    hit = idx[:, mode] == row
    inv_s2 = 1.0 / sigma ** 2
    inv_k2 = 1.0 / sigma_k ** 2
    lhs = inv_k2 * np.eye(r)
    rhs = inv_k2 * np.asarray(prior_row, dtype=float)
    if np.any(hit):
        v = _rows_product(core, factors, idx[hit], mode)
        lhs = lhs + inv_s2 * (v.T @ v)
        rhs = rhs + inv_s2 * (v.T @ rewards[hit])
    return np.linalg.solve(lhs, rhs)


def map_objective(
    core: np.ndarray,
    factors,
    idx: np.ndarray,
    rewards: np.ndarray,
    prior_factors,
    sigma: float,
    sigma_k: list[float],
    core_ridge: float = CORE_RIDGE,
) -> float:
    """Fitted objective: weighted residuals, factor-row priors, tiny core ridge."""
    d = core.ndim
    if idx.shape[0]:
        preds = _design_rows(core.shape, factors, idx) @ core.ravel()
        fit = float(np.sum((rewards - preds) ** 2)) / sigma ** 2
    else:
        fit = 0.0
    prior = sum(
        float(np.sum((factors[k] - prior_factors[k]) ** 2)) / sigma_k[k] ** 2 for k in range(d)
    )
    return fit + prior + core_ridge * float(np.sum(core ** 2))


class EnsembleSampling:
    """Approximate Thompson sampling over a perturbed model ensemble."""

    name = "ensemble"

    def __init__(
        self,
        dims,
        ranks,
        rng: np.random.Generator,
        prior: EnsemblePrior | None = None,
        context_dim: int = 0,
        init_sweeps: int = 5,
        step_sweeps: int = 1,
    ):
        self.dims = tuple(int(p) for p in dims)
        self.ranks = tuple(int(r) for r in ranks)
        self.context_dim = int(context_dim)
        self._rng = rng
        self.prior = prior or EnsemblePrior()
        d = len(self.dims)
        self.sigma = float(self.prior.sigma)
        self.sigma_k = self.prior.sigma_k_list(d)
        self.sigma_tilde = float(self.prior.sigma_tilde)
        self.n_models = int(self.prior.n_models)
        if self.n_models < 1:
            raise ValueError("need at least one model")
        if self.sigma <= 0 or any(s <= 0 for s in self.sigma_k):
            raise ValueError("sigma and sigma_k must be positive")
        if self.sigma_tilde < 0:
            raise ValueError("sigma_tilde must be nonnegative")
        self.init_sweeps = int(init_sweeps)
        self.step_sweeps = int(step_sweeps)
        mu = self.prior.mu or [np.zeros((p, r)) for p, r in zip(self.dims, self.ranks)]
        self.prior_factors: list[list[np.ndarray]] = []
        self.factors: list[list[np.ndarray]] = []
        self.cores: list[np.ndarray] = []
        for _ in range(self.n_models):
            model = []
            for k, (p, r) in enumerate(zip(self.dims, self.ranks)):
                draw = mu[k] + self.sigma_k[k] * rng.standard_normal((p, r))
                model.append(_normalize_columns(draw))
            self.prior_factors.append([u.copy() for u in model])
            self.factors.append(model)
            self.cores.append(np.ones(self.ranks))
        cap = 64
        self._idx = np.zeros((cap, d), dtype=np.int64)
        self._ys = np.zeros(cap)
        self._pert = np.zeros((cap, self.n_models))
        self.t = 0
        self._ever_fit = [False] * self.n_models

    # -- history ------------------------------------------------------------

    def _grow(self) -> None:
        cap = self._idx.shape[0] * 2
        idx = np.zeros((cap, self._idx.shape[1]), dtype=np.int64)
        idx[: self.t] = self._idx[: self.t]
        ys = np.zeros(cap)
        ys[: self.t] = self._ys[: self.t]
        pert = np.zeros((cap, self.n_models))
        pert[: self.t] = self._pert[: self.t]
        self._idx, self._ys, self._pert = idx, ys, pert

    @property
    def shared_rewards(self) -> np.ndarray:
        return self._ys[: self.t]

    def perturbed_rewards(self, m: int) -> np.ndarray:
        return self._pert[: self.t, m]

    def history_index(self) -> np.ndarray:
        return self._idx[: self.t]

    # -- fitting --------------------------------------------------------------

    def _mode_update(self, m: int, mode: int) -> None:
        """Exact simultaneous update of every row of one factor matrix.

        Rows are decoupled given the other modes, so this equals applying
        :func:`als_row_update` to each row.
        """
        t = self.t
        idx = self._idx[:t]
        ys = self._pert[:t, m]
        core = self.cores[m]
        factors = self.factors[m]
        p, r = self.dims[mode], self.ranks[mode]
        inv_s2 = 1.0 / self.sigma ** 2
        inv_k2 = 1.0 / self.sigma_k[mode] ** 2
        lhs = np.tile(inv_k2 * np.eye(r), (p, 1, 1))
        rhs = inv_k2 * self.prior_factors[m][mode].copy()
        if t:
            v = _rows_product(core, factors, idx, mode)
            rows = idx[:, mode]
            outer = (v[:, :, None] * v[:, None, :]).reshape(t, -1)
            offsets = rows[:, None] * (r * r) + np.arange(r * r)[None, :]
            gram = np.bincount(offsets.ravel(), weights=outer.ravel(), minlength=p * r * r)
            lhs += inv_s2 * gram.reshape(p, r, r)
            offsets_b = rows[:, None] * r + np.arange(r)[None, :]
            load = np.bincount(
                offsets_b.ravel(), weights=(ys[:, None] * v).ravel(), minlength=p * r
            )
            rhs += inv_s2 * load.reshape(p, r)
        factors[mode] = np.linalg.solve(lhs, rhs[:, :, None])[:, :, 0]

    def _core_update(self, m: int) -> None:
        t = self.t
        if t == 0:
            return
        idx = self._idx[:t]
        ys = self._pert[:t, m]
        design = _design_rows(self.ranks, self.factors[m], idx)
        inv_s2 = 1.0 / self.sigma ** 2
        size = design.shape[1]
        lhs = inv_s2 * (design.T @ design) + CORE_RIDGE * np.eye(size)
        rhs = inv_s2 * (design.T @ ys)
        self.cores[m] = np.linalg.solve(lhs, rhs).reshape(self.ranks)

    def map_fit(self, m: int, sweeps: int = 1, trace: bool = False) -> list[float]:
        """Alternating sweeps over factor modes then the core for one model.

        Every constituent update exactly minimizes the fitted objective in its
        block, so the objective is nonincreasing across updates.  With an
        empty history the model is left at its initialization.  Returns the
        objective trace when requested (one value per block update).
        """
        values: list[float] = []

        def snap():
            if trace:
                values.append(self.objective(m))

        if self.t == 0:
            return values
        snap()
        for _ in range(sweeps):
            for mode in range(len(self.dims)):
                self._mode_update(m, mode)
                snap()
            self._core_update(m)
            snap()
        self._ever_fit[m] = True
        return values

    def objective(self, m: int) -> float:
        return map_objective(
            self.cores[m],
            self.factors[m],
            self._idx[: self.t],
            self._pert[: self.t, m],
            self.prior_factors[m],
            self.sigma,
            self.sigma_k,
        )

    # -- acting ----------------------------------------------------------------

    def act(self, m: int, context: Arm | None) -> Arm:
        """Greedy arm of model m's reconstruction, restricted to the context slice."""
        d0 = self.context_dim
        core = self.cores[m]
        factors = self.factors[m]
        d = len(self.dims)
        if context:
            if len(context) != d0:
                raise ValueError(f"context {context} has length {len(context)}, expected {d0}")
            operands = [core]
            subs = [_LETTERS[:d]]
            for j, i in enumerate(context):
                operands.append(factors[j][i - 1, :])
                subs.append(_LETTERS[j])
            out_letters = _LETTERS[d0:d]
            slice_core = np.einsum(",".join(subs) + "->" + out_letters, *operands, optimize=True)
        else:
            d0 = 0
            slice_core = core
        view = slice_core
        for pos, j in enumerate(range(d0, d)):
            view = marginal_multiply(view, factors[j], pos)
        decision_dims = self.dims[d0:]
        idx = np.unravel_index(int(np.argmax(view)), decision_dims)
        prefix = tuple(context) if context else ()
        return prefix + tuple(int(i) + 1 for i in idx)

    # -- policy interface --------------------------------------------------------

    def select(self, context: Arm | None) -> tuple[Arm, str]:
        m = int(self._rng.integers(self.n_models))
        if self.t:
            sweeps = self.step_sweeps if self._ever_fit[m] else self.init_sweeps
            self.map_fit(m, sweeps=sweeps)
        return self.act(m, context), EXPLOIT

    def update(self, arm: Arm, reward: float, phase: str) -> None:
        if self.t == self._idx.shape[0]:
            self._grow()
        self._idx[self.t] = [i - 1 for i in arm]
        self._ys[self.t] = reward
        omega = self._rng.normal(0.0, self.sigma_tilde, size=self.n_models)
        self._pert[self.t] = reward + omega
        self.t += 1
