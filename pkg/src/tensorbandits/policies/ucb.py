"""Vectorized UCB baseline: flatten the arm box and run the UCB1 index.

With contexts, a separate index state is kept per context cell over the
decision slice (the standard disjoint treatment).
"""

from __future__ import annotations

import math

import numpy as np

from ..tensor import Arm
from .base import EXPLOIT


class UcbState:
    """Counts, incremental means, and the UCB1 index over one flat arm set."""

    def __init__(self, n_arms: int, alpha: float = 1.0):
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        self.counts = np.zeros(n_arms, dtype=np.int64)
        self.means = np.zeros(n_arms)
        self.t = 0
        self.alpha = alpha

    def next_arm(self) -> int:
        """Lowest-offset unpulled arm first, then the index argmax (first max wins)."""
        unpulled = np.flatnonzero(self.counts == 0)
        if unpulled.size:
            return int(unpulled[0])
        bonus = self.alpha * np.sqrt(2.0 * math.log(self.t) / self.counts)
        return int(np.argmax(self.means + bonus))

    def update(self, flat_arm: int, reward: float) -> None:
        self.counts[flat_arm] += 1
        n = self.counts[flat_arm]
        self.means[flat_arm] += (reward - self.means[flat_arm]) / n
        self.t += 1


class VectorizedUcb:
    """UCB1 over all prod(p_j) flat arms; per-context states when d0 > 0."""

    name = "vectorized_ucb"

    def __init__(self, dims, alpha: float = 1.0, context_dim: int = 0):
        self.dims = tuple(dims)
        self.context_dim = int(context_dim)
        self.decision_dims = self.dims[self.context_dim:]
        self._n_decisions = int(np.prod(self.decision_dims, dtype=np.int64))
        self.alpha = float(alpha)
        self._cells: dict[Arm, UcbState] = {}

    def _cell(self, context: Arm | None) -> UcbState:
        key = tuple(context) if context else ()
        state = self._cells.get(key)
        if state is None:
            state = UcbState(self._n_decisions, self.alpha)
            self._cells[key] = state
        return state

    def _split(self, arm: Arm) -> tuple[Arm, int]:
        context = arm[: self.context_dim]
        decision = arm[self.context_dim:]
        flat = int(np.ravel_multi_index(tuple(i - 1 for i in decision), self.decision_dims))
        return context, flat

    def select(self, context: Arm | None) -> tuple[Arm, str]:
        if self.context_dim and (context is None or len(context) != self.context_dim):
            raise ValueError("contextual UCB needs a context of the configured length")
        flat = self._cell(context).next_arm()
        decision = tuple(int(i) + 1 for i in np.unravel_index(flat, self.decision_dims))
        arm = (tuple(context) if context else ()) + decision
        return arm, EXPLOIT

    def update(self, arm: Arm, reward: float, phase: str) -> None:
        context, flat = self._split(arm)
        self._cell(context if self.context_dim else None).update(flat, reward)
