"""Vectorized UCB baseline: index rule, incremental means, contextual cells."""

import math

import numpy as np

from tensorbandits.environment import synth_env
from tensorbandits.policies.ucb import UcbState, VectorizedUcb


class TestUcbState:
    def test_first_pull_is_offset_zero(self):
        state = UcbState(6)
        assert state.next_arm() == 0

    def test_unpulled_before_index(self):
        state = UcbState(3)
        state.update(0, 1.0)
        assert state.next_arm() == 1

    def test_index_example(self):
        # arm means 1.0 (count 100) and 0.0 (count 1) at t=101, alpha=1:
        # bonus of arm 2 is sqrt(2 ln 101) ~ 3.04 > 1.30, so arm 2 wins
        state = UcbState(2, alpha=1.0)
        for _ in range(100):
            state.update(0, 1.0)
        state.update(1, 0.0)
        idx0 = 1.0 + math.sqrt(2 * math.log(101) / 100)
        idx1 = 0.0 + math.sqrt(2 * math.log(101) / 1)
        assert idx1 > idx0
        assert state.next_arm() == 1

    def test_incremental_mean(self):
        state = UcbState(2)
        state.update(0, 1.0)
        state.update(0, 3.0)
        assert state.means[0] == 2.0 and state.counts[0] == 2

    def test_mean_of_identical_rewards_exact(self):
        state = UcbState(1)
        for _ in range(50):
            state.update(0, 0.7)
        assert state.means[0] == 0.7

    def test_incremental_matches_batch(self):
        rng = np.random.default_rng(0)
        rewards = rng.standard_normal(1000)
        state = UcbState(1)
        for r in rewards:
            state.update(0, float(r))
        assert abs(state.means[0] - rewards.mean()) < 1e-12

    def test_counts_sum_to_t(self):
        rng = np.random.default_rng(1)
        state = UcbState(4)
        for _ in range(60):
            arm = state.next_arm()
            state.update(arm, float(rng.standard_normal()))
        assert state.counts.sum() == state.t == 60


class TestVectorizedUcb:
    def test_noiseless_best_arm_dominates(self):
        env = synth_env(3, 1, 1.0, noise_std=0.0, seed=5)
        policy = VectorizedUcb(env.dims, alpha=1.0)
        rng = np.random.default_rng(0)
        best, _ = env.oracle()
        counts: dict = {}
        for t in range(27 + 120):
            arm, phase = policy.select(None)
            policy.update(arm, env.pull(arm, rng), phase)
            if t >= 27:
                counts[arm] = counts.get(arm, 0) + 1
        assert max(counts, key=counts.get) == best

    def test_contextual_cells_independent(self):
        env = synth_env(3, 1, 1.0, noise_std=0.0, context_dim=1, seed=6)
        policy = VectorizedUcb(env.dims, alpha=1.0, context_dim=1)
        rng = np.random.default_rng(1)
        # exercise two contexts; each cell does its own initial pass of 9 arms
        for ctx in ((1,), (2,)):
            seen = []
            for _ in range(9):
                arm, phase = policy.select(ctx)
                assert arm[0] == ctx[0]
                seen.append(arm[1:])
                policy.update(arm, env.pull(arm, rng), phase)
            assert len(set(seen)) == 9

    def test_contextual_best_arm_dominates(self):
        env = synth_env(3, 1, 1.0, noise_std=0.0, context_dim=1, seed=7)
        policy = VectorizedUcb(env.dims, alpha=1.0, context_dim=1)
        rng = np.random.default_rng(2)
        ctx = (2,)
        best, _ = env.oracle(ctx)
        counts: dict = {}
        for t in range(9 + 120):
            arm, phase = policy.select(ctx)
            policy.update(arm, env.pull(arm, rng), phase)
            if t >= 9:
                counts[arm] = counts.get(arm, 0) + 1
        assert max(counts, key=counts.get) == best
