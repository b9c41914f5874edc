"""Tensor elimination: explore, complete, rotate, then phased UCB elimination.

After s1 + n1 uniform pulls the reward tensor is completed, the estimated
factor bases (with orthonormal complements) rotate every arm into a vector
whose provably-small coordinates get a heavy ridge penalty, and the run
finishes as a phased linear bandit: within each phase the arm with the
largest confidence width is pulled, and at phase end arms whose upper
confidence bound falls below the best lower confidence bound are dropped.

The rotated action vectors are rows of a Kronecker product of orthogonal
matrices, so inner products between actions factor across modes.  All phase
computations run through that kernel plus a growing Cholesky factor of the
phase Gram matrix; no prod(p_j)-squared inverse is ever formed, and the
per-pull width updates are rank-one Sherman-Morrison steps against it.
"""

from __future__ import annotations

import math
from functools import reduce

import numpy as np
from scipy.linalg import solve_triangular

from ..completion import CompletionOptions, Observation, complete, u_statistic
from ..tensor import (
    Arm,
    basis_with_complement,
    blocked_order,
    complement_block_mask,
    tucker_reconstruct,
)
from .base import COMMIT, EXPLORE, INITIALIZE, uniform_arm
from .epoch_greedy import init_length

_LETTERS = "abcdefghijkl"
_REFRESH_EVERY = 256


def exploration_length(
    n: int, p: int, r: int, d: int, sigma_min, c0: float = 1.0, s1: int = 0
) -> int:
    """Length of the uniform exploration block before the linear reduction.

    ceil(c0 * n^(2/(d+2)) * (r^d / prod sigma_j) * p^((d^2+d)/2) * (log p)^(d/2)),
    clamped into [1, n - s1 - 1].  ``sigma_min`` lists the smallest nonzero
    singular value of each mode matricization of the (estimated) reward tensor.
    """
    sigma_min = [float(s) for s in np.atleast_1d(sigma_min)]
    if any(s <= 0 for s in sigma_min):
        raise ValueError("all mode singular values must be positive")
    if p < 2:
        raise ValueError("p must be at least 2")
    if c0 <= 0:
        raise ValueError("c0 must be positive")
    raw = (
        n ** (2.0 / (d + 2))
        * r ** d
        / float(np.prod(sigma_min))
        * p ** ((d * d + d) / 2.0)
        * math.log(p) ** (d / 2.0)
    )
    return int(np.clip(math.ceil(c0 * raw), 1, max(1, n - s1 - 1)))


def xi_width(
    delta: float,
    lambda1: float,
    lambda2: float,
    norm_head: float,
    norm_tail: float,
    c: float = 1.0,
) -> float:
    """Confidence half-width: c * (2 sqrt(14 log(2/delta)) + sqrt(l1)|b_head| + sqrt(l2)|b_tail|)."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if lambda1 <= 0 or lambda2 <= 0:
        raise ValueError("regularization parameters must be positive")
    if norm_head < 0 or norm_tail < 0:
        raise ValueError("norms must be nonnegative")
    if c <= 0:
        raise ValueError("multiplier c must be positive")
    base = 2.0 * math.sqrt(14.0 * math.log(2.0 / delta))
    return c * (base + math.sqrt(lambda1) * norm_head + math.sqrt(lambda2) * norm_tail)


def ridge_blocked(vectors, rewards, q: int, lambda1: float, lambda2: float) -> np.ndarray:
    """Split-penalty ridge solution over explicit action vectors.

    Minimizes sum (y_t - <a_t, beta>)^2 + lambda1 |beta_{1:q}|^2
    + lambda2 |beta_{q+1:}|^2, solved in the dual so the cost scales with the
    number of observations rather than the ambient dimension.  An empty
    history returns the zero vector.
    """
    a = np.asarray(vectors, dtype=float)
    if a.ndim == 1:
        if a.size == 0:
            raise ValueError("action dimension unknown for empty vectors; pass shape (0, P)")
        a = a.reshape(1, -1)
    t, dim = a.shape
    if not 0 <= q <= dim:
        raise ValueError(f"q={q} out of range for dimension {dim}")
    lam = np.full(dim, lambda2)
    lam[:q] = lambda1
    if t == 0:
        return np.zeros(dim)
    y = np.asarray(rewards, dtype=float)
    a_scaled = a / lam
    gram = np.eye(t) + a_scaled @ a.T
    z = np.linalg.solve(gram, y)
    return (a.T @ z) / lam


def run_phase_schedule(k: int, budget: int) -> tuple[int, int]:
    """Commit-step range [2^(k-1), min(2^k - 1, budget)] covered by phase k."""
    if k < 1:
        raise ValueError("phase index starts at 1")
    start = 2 ** (k - 1)
    return start, min(2 ** k - 1, budget)


def build_rotated_actions(factors_hat) -> tuple[dict[Arm, np.ndarray], int]:
    """Materialized rotated action vectors for every arm, plus the split point q.

    The vector for arm (i_1, ..., i_d) flattens the outer product of the
    rows [U_j ; U_j_perp][i_j, :] with the blocked ordering, so its leading
    coordinates carry the low-rank block.  Every vector has unit Euclidean
    norm.  Intended for small problems and tests; the policy itself works in
    the factored kernel form.
    """
    bases = [basis_with_complement(np.asarray(u)) for u in factors_hat]
    dims = tuple(b.shape[0] for b in bases)
    ranks = tuple(np.asarray(u).shape[1] for u in factors_hat)
    order = blocked_order(dims, ranks)
    q = int(np.prod(dims)) - int(np.prod([p - r for p, r in zip(dims, ranks)]))
    actions: dict[Arm, np.ndarray] = {}
    for flat in range(int(np.prod(dims))):
        idx = np.unravel_index(flat, dims)
        vec = reduce(np.kron, [b[i, :] for b, i in zip(bases, idx)])
        actions[tuple(int(i) + 1 for i in idx)] = vec[order]
    return actions, q


class _PhaseState:
    """One elimination phase: width-max pulls plus the phase ridge estimate.

    Maintains, over the phase's pulled arms, the Cholesky factor of
    I + A Lambda^-1 A^T and the active arms' squared widths |a|^2_{V^-1},
    where V = Lambda + sum a a^T.  Action inner products are evaluated
    through per-mode tail Gram matrices: a_i^T Lambda^-1 a_j =
    delta_ij / lambda1 + (1/lambda2 - 1/lambda1) * prod_j G_j[i_j, j_j]
    with G_j = I - U_j U_j^T.
    """

    def __init__(self, policy: "TensorElimination", active: np.ndarray):
        self.pol = policy
        self.active = active
        self.act_idx = np.vstack(np.unravel_index(active, policy.dims))
        tail_self = np.ones(active.size)
        for g, row in zip(policy._tail_gram, self.act_idx):
            tail_self *= g[row, row]
        self.base = 1.0 / policy.lambda1 + policy._coef * tail_self
        self.norms2 = self.base.copy()
        cap = 16
        self.chol = np.zeros((cap, cap))
        self.w = np.zeros((active.size, cap))
        self.pulled_flat = np.zeros(cap, dtype=np.int64)
        self.pulled_idx = np.zeros((len(policy.dims), cap), dtype=np.int64)
        self.ys = np.zeros(cap)
        self.t = 0

    def _grow(self) -> None:
        cap = self.chol.shape[0] * 2
        for name, axis in (("chol", None), ("w", 1), ("pulled_flat", 0), ("pulled_idx", 1), ("ys", 0)):
            old = getattr(self, name)
            if name == "chol":
                new = np.zeros((cap, cap))
                new[: old.shape[0], : old.shape[1]] = old
            else:
                shape = list(old.shape)
                shape[axis if axis is not None else 0] = cap
                new = np.zeros(shape, dtype=old.dtype)
                sl = tuple(slice(0, s) for s in old.shape)
                new[sl] = old
            setattr(self, name, new)

    def _kernel_tail(self, idx_rows: np.ndarray, mode_idx) -> np.ndarray:
        out = np.ones(idx_rows.shape[1])
        for g, row, i in zip(self.pol._tail_gram, idx_rows, mode_idx):
            out *= g[row, i]
        return out

    def select_local(self) -> int:
        """Active-set position of the widest arm (first max wins ties)."""
        return int(np.argmax(self.norms2))

    def add(self, local: int, reward: float) -> None:
        """Record one pull of the active arm at ``local`` and update widths."""
        pol = self.pol
        if self.t == self.chol.shape[0]:
            self._grow()
        t = self.t
        flat = int(self.active[local])
        mode_idx = self.act_idx[:, local]
        k_act = pol._coef * self._kernel_tail(self.act_idx, mode_idx)
        k_act[local] += 1.0 / pol.lambda1
        k_self = float(k_act[local])
        if t:
            k_pull = pol._coef * self._kernel_tail(self.pulled_idx[:, :t], mode_idx)
            k_pull[self.pulled_flat[:t] == flat] += 1.0 / pol.lambda1
            low = self.chol[:t, :t]
            half = solve_triangular(low, k_pull, lower=True)
            quad = k_self - float(half @ half)
            z = solve_triangular(low.T, half, lower=False)
            c_vec = k_act - self.w[:, :t] @ z
        else:
            k_pull = np.zeros(0)
            half = np.zeros(0)
            quad = k_self
            c_vec = k_act
        denom = 1.0 + quad
        self.norms2 -= c_vec * c_vec / denom
        self.chol[t, :t] = half
        self.chol[t, t] = math.sqrt(denom)
        self.w[:, t] = k_act
        self.pulled_flat[t] = flat
        self.pulled_idx[:, t] = mode_idx
        self.ys[t] = reward
        self.t += 1
        if self.t % _REFRESH_EVERY == 0:
            self._refresh()

    def _refresh(self) -> None:
        """Recompute widths from the exact Cholesky factor to cap drift."""
        t = self.t
        half = solve_triangular(self.chol[:t, :t], self.w[:, :t].T, lower=True)
        self.norms2 = self.base - np.einsum("ij,ij->j", half, half)

    def beta_hat(self) -> np.ndarray:
        """Phase ridge estimate as a tensor of rotated-coordinate values."""
        pol = self.pol
        t = self.t
        if t == 0:
            return np.zeros(pol.dims)
        low = self.chol[:t, :t]
        z = solve_triangular(low, self.ys[:t], lower=True)
        z = solve_triangular(low.T, z, lower=False)
        d = len(pol.dims)
        operands, subs = [z], ["s"]
        for j in range(d):
            operands.append(pol._bases[j][self.pulled_idx[j, :t], :])
            subs.append("s" + _LETTERS[j])
        raw = np.einsum(",".join(subs) + "->" + _LETTERS[:d], *operands, optimize=True)
        return raw / pol.lambda1 + (1.0 / pol.lambda2 - 1.0 / pol.lambda1) * (raw * pol._tail_mask)

    def finish(self) -> tuple[np.ndarray, np.ndarray]:
        """(mean estimates, widths) for the active arms at phase end."""
        beta = self.beta_hat()
        d = len(self.pol.dims)
        operands, subs = [beta], [_LETTERS[:d]]
        out = _LETTERS[d: 2 * d]
        for j in range(d):
            operands.append(self.pol._bases[j])
            subs.append(out[j] + _LETTERS[j])
        values = np.einsum(",".join(subs) + "->" + out, *operands, optimize=True).ravel()
        widths = np.sqrt(np.clip(self.norms2, 0.0, None))
        return values[self.active], widths


class TensorElimination:
    """Phased elimination policy for context-free tensor bandits."""

    name = "elimination"

    def __init__(
        self,
        dims,
        ranks,
        horizon: int,
        rng: np.random.Generator,
        lambda1: float = 0.1,
        c: float = 0.04,
        c0: float = 0.02,
        delta: float | None = None,
        completion: CompletionOptions | None = None,
        n1_floor: int = 8,
    ):
        self.dims = tuple(int(p) for p in dims)
        self.ranks = tuple(int(r) for r in ranks)
        self.horizon = int(horizon)
        self._rng = rng
        self.lambda1 = float(lambda1)
        self.c = float(c)
        self.c0 = float(c0)
        self.n1_floor = int(n1_floor)
        self.n_arms = int(np.prod(self.dims, dtype=np.int64))
        self.delta = float(delta) if delta is not None else 1.0 / (self.horizon * self.n_arms)
        d = len(self.dims)
        self.p = max(self.dims)
        self.r = max(self.ranks)
        self.s1 = init_length(self.p, self.r, d)
        if self.lambda1 <= 0:
            raise ValueError("lambda1 must be positive")
        self.opts = completion or CompletionOptions(ranks=self.ranks)
        self.n1: int | None = None
        self.lambda2: float | None = None
        self.xi: float | None = None
        self.q = self.n_arms - int(np.prod([p - r for p, r in zip(self.dims, self.ranks)]))
        self.t = 0
        self.history: list[Observation] = []
        self.active = np.arange(self.n_arms)
        self.phase_index = 0
        self._commit_t = 0
        self._phase: _PhaseState | None = None
        self._phase_end = 0
        self._bases: list[np.ndarray] | None = None
        self._tail_gram: list[np.ndarray] | None = None
        self._tail_mask: np.ndarray | None = None
        self._coef = 0.0
        self.factors_hat: list[np.ndarray] | None = None

    # -- random stage ------------------------------------------------------

    def _estimate_sigmas(self) -> list[float]:
        """Per-mode estimates of the smallest retained singular value.

        Uses the r-th eigenvalue of each mode's observation U-statistic, an
        unbiased estimator of the squared mode singular values; the singular
        values of the completed tensor itself inflate badly at initialization
        sample sizes because the rank projection captures sampling noise.
        """
        sigmas = []
        for axis, r in enumerate(self.ranks):
            eigvals = np.linalg.eigvalsh(u_statistic(self.history, self.dims, axis))
            lam = float(eigvals[::-1][r - 1]) if eigvals.size >= r else 0.0
            sigmas.append(math.sqrt(max(lam, 1e-12)))
        return sigmas

    def _enter_commit(self) -> None:
        est = complete(self.history, self.dims, self.opts)
        self.factors_hat = est.factors
        self._bases = [basis_with_complement(u) for u in est.factors]
        self._tail_gram = [
            np.eye(p) - u @ u.T for p, u in zip(self.dims, est.factors)
        ]
        self._tail_mask = complement_block_mask(self.dims, self.ranks).astype(float)
        budget = self.commit_budget
        self.lambda2 = budget / (self.q * math.log(1.0 + budget / self.lambda1))
        self._coef = 1.0 / self.lambda2 - 1.0 / self.lambda1
        norm_head = float(np.linalg.norm(tucker_reconstruct(est)))
        self.xi = xi_width(self.delta, self.lambda1, self.lambda2, norm_head, 0.0, self.c)
        self.phase_index = 1
        self._start_phase()

    def _start_phase(self) -> None:
        start, end = run_phase_schedule(self.phase_index, self.commit_budget)
        self._phase_end = end
        self._phase = _PhaseState(self, self.active)

    @property
    def commit_budget(self) -> int:
        if self.n1 is None:
            raise RuntimeError("commit budget unknown before the exploration block")
        return max(1, self.horizon - self.s1 - self.n1)

    # -- policy interface ----------------------------------------------------

    def select(self, context: Arm | None) -> tuple[Arm, str]:
        if context:
            raise ValueError("tensor elimination is context-free")
        if self.t < self.s1:
            return uniform_arm(self.dims, self._rng), INITIALIZE
        if self.n1 is None:
            sigmas = self._estimate_sigmas()
            formula = exploration_length(
                self.horizon, self.p, self.r, len(self.dims), sigmas, self.c0, self.s1
            )
            # completion-validity floor: the rotation is only as good as the
            # tensor estimate, so never explore less than a few multiples of
            # the initialization length (keeps the estimated-sigma noise,
            # which enters the formula cubed, from starving the completion)
            floor = min(self.n1_floor * self.s1, max(1, self.horizon - self.s1 - 1))
            self.n1 = max(formula, floor)
        if self.t < self.s1 + self.n1:
            return uniform_arm(self.dims, self._rng), EXPLORE
        if self._phase is None:
            self._enter_commit()
        local = self._phase.select_local()
        arm = np.unravel_index(int(self.active[local]), self.dims)
        return tuple(int(i) + 1 for i in arm), COMMIT

    def update(self, arm: Arm, reward: float, phase: str) -> None:
        self.t += 1
        if phase in (INITIALIZE, EXPLORE):
            self.history.append(Observation(arm=tuple(arm), reward=float(reward)))
            return
        flat = int(np.ravel_multi_index(tuple(i - 1 for i in arm), self.dims))
        local = int(np.searchsorted(self.active, flat))
        self._phase.add(local, float(reward))
        self._commit_t += 1
        if self._commit_t >= self._phase_end and self._commit_t < self.commit_budget:
            values, widths = self._phase.finish()
            self.active = self.active[self.eliminate_mask(values, widths, self.xi)]
            self.phase_index += 1
            self._start_phase()

    # -- elimination rule ----------------------------------------------------

    @staticmethod
    def eliminate_mask(values: np.ndarray, widths: np.ndarray, xi: float) -> np.ndarray:
        """Survivor mask: UCB at least the best LCB; the top-UCB arm always stays."""
        ucb = values + widths * xi
        lcb = values - widths * xi
        keep = ucb >= np.max(lcb)
        keep[int(np.argmax(ucb))] = True
        return keep

    def eliminate(self, values: np.ndarray, widths: np.ndarray, xi: float | None = None) -> np.ndarray:
        """Apply the phase-end rule to the current active set and return it."""
        mask = self.eliminate_mask(values, widths, self.xi if xi is None else xi)
        self.active = self.active[mask]
        return self.active

    # -- introspection for tests and diagnostics ------------------------------

    def active_arms(self) -> list[Arm]:
        return [tuple(int(i) + 1 for i in np.unravel_index(int(f), self.dims)) for f in self.active]

    def phase_widths(self) -> np.ndarray:
        if self._phase is None:
            raise RuntimeError("no commit phase is running")
        return np.sqrt(np.clip(self._phase.norms2, 0.0, None))

    def phase_values_widths(self) -> tuple[np.ndarray, np.ndarray]:
        if self._phase is None:
            raise RuntimeError("no commit phase is running")
        return self._phase.finish()
