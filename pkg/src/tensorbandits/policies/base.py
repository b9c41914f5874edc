"""Shared policy interface and the debug oracle policy."""

from __future__ import annotations

from typing import Protocol

import numpy as np

from ..environment import Environment
from ..tensor import Arm

INITIALIZE = "initialize"
EXPLORE = "explore"
EXPLOIT = "exploit"
COMMIT = "commit"
ORACLE = "oracle"


class Policy(Protocol):
    """Uniform select/update loop contract used by the harness."""

    name: str

    def select(self, context: Arm | None) -> tuple[Arm, str]:
        ...

    def update(self, arm: Arm, reward: float, phase: str) -> None:
        ...


def uniform_arm(dims, rng: np.random.Generator, context: Arm | None = None) -> Arm:
    """Uniform random arm; a given context pins the leading coordinates."""
    fixed = tuple(context) if context else ()
    free = tuple(int(rng.integers(1, p + 1)) for p in dims[len(fixed):])
    return fixed + free


class OraclePolicy:
    """Debug policy that plays the environment's oracle arm every step."""

    name = "oracle"

    def __init__(self, env: Environment):
        self._env = env

    def select(self, context: Arm | None) -> tuple[Arm, str]:
        arm, _ = self._env.oracle(context)
        return arm, ORACLE

    def update(self, arm: Arm, reward: float, phase: str) -> None:
        pass
