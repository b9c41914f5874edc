"""Environment contracts: synthesis, pulls, contexts, oracle, regret."""

import numpy as np
import pytest

from tensorbandits.environment import (
    Environment,
    RegretTrace,
    load_context_sequence,
    load_env,
    make_tucker_env,
    record_regret,
    stream,
    synth_env,
)
from tensorbandits.tensor import matricize, save_tensor


class TestSynthEnv:
    def test_core_diagonal_value(self):
        env = synth_env(15, 2, 0.5, seed=3)
        # signal strength w * p^1.5 shows up as the Frobenius norm per
        # diagonal core entry: |truth|_F = w p^1.5 sqrt(r)
        expected_entry = 0.5 * 15 ** 1.5
        assert abs(expected_entry - 29.0473750966) < 1e-8
        fro = np.linalg.norm(env.truth)
        assert abs(fro - expected_entry * np.sqrt(2)) < 1e-8

    def test_same_seed_identical(self):
        a = synth_env(6, 2, 0.7, seed=11)
        b = synth_env(6, 2, 0.7, seed=11)
        assert np.array_equal(a.truth, b.truth)

    def test_different_seed_differs(self):
        a = synth_env(6, 2, 0.7, seed=11)
        b = synth_env(6, 2, 0.7, seed=12)
        assert not np.array_equal(a.truth, b.truth)

    def test_factor_orthonormality_via_rank(self):
        env = synth_env(9, 3, 1.0, seed=4)
        for axis in range(3):
            s = np.linalg.svd(matricize(env.truth, axis), compute_uv=False)
            assert np.sum(s > 1e-8) == 3
            # orthonormal factors with a diagonal core give equal singular values
            assert np.allclose(s[:3], 1.0 * 9 ** 1.5)

    def test_rank_exceeds_dim(self):
        with pytest.raises(ValueError):
            synth_env(3, 4, 1.0)

    def test_general_dims(self):
        env = make_tucker_env((4, 3, 5), (2, 2, 2), w=0.5, seed=9)
        assert env.dims == (4, 3, 5)


class TestPull:
    def test_noiseless_exact(self):
        env = synth_env(4, 1, 1.0, noise_std=0.0, seed=0)
        rng = np.random.default_rng(0)
        assert env.pull((1, 1, 1), rng) == env.truth[0, 0, 0]

    def test_seeded_reproducible(self):
        env = synth_env(4, 1, 1.0, noise_std=1.0, seed=0)
        draws_a = [env.pull((2, 2, 2), np.random.default_rng(7)) for _ in range(1)]
        draws_b = [env.pull((2, 2, 2), np.random.default_rng(7)) for _ in range(1)]
        assert draws_a == draws_b

    def test_sample_mean_matches_entry(self):
        env = synth_env(4, 1, 1.0, noise_std=1.0, seed=2)
        rng = np.random.default_rng(3)
        n = 10000
        draws = np.array([env.pull((3, 2, 1), rng) for _ in range(n)])
        assert abs(draws.mean() - env.truth[2, 1, 0]) < 4.0 / np.sqrt(n)

    def test_out_of_range(self):
        env = synth_env(4, 1, 1.0, seed=0)
        with pytest.raises(ValueError):
            env.pull((5, 1, 1), np.random.default_rng(0))


class TestContext:
    def test_uniform_frequencies(self):
        env = make_tucker_env((20, 4, 4), (1, 1, 1), 0.5, context_dim=1, seed=5)
        rng = np.random.default_rng(6)
        counts = np.zeros(20)
        n = 100000
        for _ in range(n):
            (i,) = env.draw_context(rng)
            counts[i - 1] += 1
        freq = counts / n
        assert freq.min() >= 0.04 and freq.max() <= 0.06

    def test_in_range(self):
        env = make_tucker_env((3, 5, 4), (1, 1, 1), 0.5, context_dim=2, seed=7)
        rng = np.random.default_rng(8)
        for _ in range(100):
            c = env.draw_context(rng)
            assert 1 <= c[0] <= 3 and 1 <= c[1] <= 5

    def test_reproducible(self):
        env = make_tucker_env((3, 5, 4), (1, 1, 1), 0.5, context_dim=2, seed=7)
        a = [env.draw_context(np.random.default_rng(9)) for _ in range(1)]
        b = [env.draw_context(np.random.default_rng(9)) for _ in range(1)]
        assert a == b

    def test_requires_context_dim(self):
        env = synth_env(3, 1, 1.0, seed=0)
        with pytest.raises(ValueError):
            env.draw_context(np.random.default_rng(0))


class TestOracle:
    def test_unique_max(self):
        truth = np.zeros((3, 4, 2))
        truth[1, 2, 0] = 5.0
        env = Environment(truth=truth, noise_std=0.0)
        arm, value = env.oracle()
        assert arm == (2, 3, 1) and value == 5.0

    def test_tie_breaks_lowest_offset(self):
        env = Environment(truth=np.ones((2, 2, 2)), noise_std=0.0)
        arm, _ = env.oracle()
        assert arm == (1, 1, 1)

    def test_contextual_matches_slice_scan(self):
        rng = np.random.default_rng(10)
        for _ in range(50):
            truth = rng.standard_normal((4, 3, 5))
            env = Environment(truth=truth, noise_std=0.0, context_dim=1)
            ctx = (int(rng.integers(1, 5)),)
            arm, value = env.oracle(ctx)
            best = None
            for j in range(3):
                for k in range(5):
                    v = truth[ctx[0] - 1, j, k]
                    if best is None or v > best[1]:
                        best = ((ctx[0], j + 1, k + 1), v)
            assert arm == best[0] and np.isclose(value, best[1])


class TestRegret:
    def test_oracle_arm_zero(self):
        env = synth_env(3, 1, 1.0, noise_std=0.0, seed=1)
        trace = RegretTrace()
        arm, _ = env.oracle()
        record_regret(trace, env, None, arm)
        assert trace.instantaneous == [0.0]

    def test_cumulative_sum(self):
        trace = RegretTrace()
        trace.append(1.5)
        trace.append(0.5)
        assert trace.cumulative == [1.5, 2.0]

    def test_nonnegative_on_random_arms(self):
        env = synth_env(4, 2, 0.8, noise_std=1.0, seed=13)
        rng = np.random.default_rng(14)
        trace = RegretTrace()
        for _ in range(1000):
            arm = tuple(int(i) for i in rng.integers(1, 5, 3))
            record_regret(trace, env, None, arm)
        assert min(trace.instantaneous) >= 0.0
        assert np.allclose(np.cumsum(trace.instantaneous), trace.cumulative)


class TestFileFormats:
    def test_load_env_layout(self, tmp_path):
        path = tmp_path / "t.txt"
        path.write_text("dims: 2 2\n1 2 3 4\n")
        env = load_env(path, noise_std=0.0)
        assert env.truth[1, 0] == 3.0

    def test_load_env_bad_header(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("2 2\n1 2 3 4\n")
        with pytest.raises(ValueError, match="line 1"):
            load_env(path)

    def test_save_load_round_trip(self, tmp_path):
        env = synth_env(4, 2, 0.6, seed=21)
        path = tmp_path / "truth.txt"
        save_tensor(path, env.truth)
        loaded = load_env(path, noise_std=1.0)
        assert np.array_equal(loaded.truth, env.truth)

    def test_context_sequence(self, tmp_path):
        path = tmp_path / "ctx.txt"
        path.write_text("1 2\n3 1\n")
        seq = load_context_sequence(path, (3, 2, 4), 2)
        assert seq == [(1, 2), (3, 1)]

    def test_context_sequence_bad_width(self, tmp_path):
        path = tmp_path / "ctx.txt"
        path.write_text("1 2 3\n")
        with pytest.raises(ValueError, match="line 1"):
            load_context_sequence(path, (3, 2, 4), 2)


class TestStreams:
    def test_replication_streams_differ(self):
        a = stream(0, 0, 1).standard_normal(4)
        b = stream(0, 1, 1).standard_normal(4)
        assert not np.allclose(a, b)

    def test_purpose_streams_differ(self):
        a = stream(0, 0, 1).standard_normal(4)
        b = stream(0, 0, 2).standard_normal(4)
        assert not np.allclose(a, b)

    def test_deterministic(self):
        assert np.array_equal(stream(5, 3, 2).standard_normal(8), stream(5, 3, 2).standard_normal(8))
