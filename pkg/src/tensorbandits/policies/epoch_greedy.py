"""Epoch-structured explore/exploit policy driven by repeated tensor completion.

After an initialization block of s1 uniform pulls, the policy proceeds in
epochs: one uniform exploration pull, then a growing block of greedy pulls
against the current completion estimate.  Only initialization and exploration
samples ever enter the completion data set; greedy samples are discarded for
estimation because they are adaptively biased.  The schedule needs no
knowledge of the horizon.
"""

from __future__ import annotations

import math

import numpy as np

from ..completion import CompletionOptions, Observation, complete
from ..tensor import Arm, TuckerDecomp, tucker_reconstruct
from .base import EXPLOIT, EXPLORE, INITIALIZE, uniform_arm


def init_length(p: int, r: int, d: int, c0: float = 1.0) -> int:
    """Initialization block length ceil(c0 * r^((d-2)/2) * p^(d/2))."""
    if p < 1 or r < 1 or d < 1:
        raise ValueError("p, r, d must be positive")
    if c0 <= 0:
        raise ValueError("c0 must be positive")
    return max(1, math.ceil(c0 * r ** ((d - 2) / 2) * p ** (d / 2)))


def exploit_length(k: int, s1: int, c2: float, p: int, r: int, d: int) -> int:
    """Greedy-block length of epoch k.

    ceil(c2 * p^(-(d+1)/2) * r^(-1/2) * (log p)^(-1/2) * (k + s1)^(1/2)),
    always at least 1 and nondecreasing in k.
    """
    if p < 2:
        raise ValueError("p must be at least 2 (log p must be positive)")
    if k < 0 or s1 < 0:
        raise ValueError("k and s1 must be nonnegative")
    if c2 <= 0:
        raise ValueError("c2 must be positive")
    raw = c2 * p ** (-(d + 1) / 2) * r ** -0.5 * math.log(p) ** -0.5 * math.sqrt(k + s1)
    return max(1, math.ceil(raw))


class EpochGreedy:
    """Tensor epoch-greedy over an arm box of shape ``dims``.

    In contextual runs the environment fixes the leading ``context_dim``
    coordinates; exploration randomizes the decision coordinates only and
    greedy steps maximize the estimate over the decision slice.
    """

    name = "epoch_greedy"

    def __init__(
        self,
        dims,
        ranks,
        rng: np.random.Generator,
        c2: float = 10.0,
        c0: float = 1.0,
        completion: CompletionOptions | None = None,
        context_dim: int = 0,
    ):
        self.dims = tuple(dims)
        self.ranks = tuple(ranks)
        self.context_dim = int(context_dim)
        self._rng = rng
        self.c2 = float(c2)
        d = len(self.dims)
        self.p = max(self.dims)
        self.r = max(self.ranks)
        self.s1 = init_length(self.p, self.r, d, c0)
        self.opts = completion or CompletionOptions(ranks=self.ranks)
        self.t = 0
        self.epoch = 0
        self.exploits_left = 0
        self.history: list[Observation] = []
        self.estimate: TuckerDecomp | None = None
        self._reconstruction: np.ndarray | None = None
        self._estimate_stale = True

    def _phase(self) -> str:
        if self.t < self.s1:
            return INITIALIZE
        if self.exploits_left == 0:
            return EXPLORE
        return EXPLOIT

    def _refresh_estimate(self) -> None:
        if self.estimate is None or self._estimate_stale:
            self.estimate = complete(self.history, self.dims, self.opts)
            self._reconstruction = tucker_reconstruct(self.estimate)
            self._estimate_stale = False

    def _greedy_arm(self, context: Arm | None) -> Arm:
        if self._reconstruction is None:
            raise RuntimeError("greedy step requested before any estimate exists")
        if context:
            view = self._reconstruction[tuple(i - 1 for i in context)]
            decision_dims = self.dims[len(context):]
            idx = np.unravel_index(int(np.argmax(view)), decision_dims)
            return tuple(context) + tuple(int(i) + 1 for i in idx)
        idx = np.unravel_index(int(np.argmax(self._reconstruction)), self.dims)
        return tuple(int(i) + 1 for i in idx)

    def select(self, context: Arm | None) -> tuple[Arm, str]:
        phase = self._phase()
        if phase in (INITIALIZE, EXPLORE):
            return uniform_arm(self.dims, self._rng, context), phase
        self._refresh_estimate()
        return self._greedy_arm(context), EXPLOIT

    def update(self, arm: Arm, reward: float, phase: str) -> None:
        self.t += 1
        if phase in (INITIALIZE, EXPLORE):
            self.history.append(Observation(arm=tuple(arm), reward=float(reward)))
            self._estimate_stale = True
            if phase == EXPLORE:
                d = len(self.dims)
                self.exploits_left = exploit_length(self.epoch, self.s1, self.c2, self.p, self.r, d)
        else:
            self.exploits_left -= 1
            if self.exploits_left == 0:
                self.epoch += 1
