"""Ensemble sampling: row-update optimality, objective descent, acting."""

import numpy as np

from tensorbandits.environment import make_tucker_env
from tensorbandits.policies.ensemble import (
    EnsemblePrior,
    EnsembleSampling,
    als_row_update,
    map_objective,
)


def random_instance(rng, dims=(4, 3, 5), ranks=(2, 2, 2), t=25):
    idx = np.column_stack([rng.integers(0, p, t) for p in dims])
    ys = rng.standard_normal(t)
    core = rng.standard_normal(ranks)
    factors = [rng.standard_normal((p, r)) for p, r in zip(dims, ranks)]
    priors = [rng.standard_normal((p, r)) for p, r in zip(dims, ranks)]
    return idx, ys, core, factors, priors


def restricted_objective(core, factors, idx, ys, priors, sigma, sigma_k, mode, row, row_vec):
    patched = [f.copy() for f in factors]
    patched[mode] = patched[mode].copy()
    patched[mode][row] = row_vec
    return map_objective(core, patched, idx, ys, priors, sigma, sigma_k, core_ridge=0.0)


class TestRowUpdate:
    def test_no_observations_returns_prior(self):
        rng = np.random.default_rng(0)
        idx, ys, core, factors, priors = random_instance(rng, t=10)
        # row 3 of mode 0 never observed
        idx[:, 0] = 0
        out = als_row_update(core, factors, idx, ys, 0, 3, 1.0, 1.0, priors[0][3])
        assert np.allclose(out, priors[0][3])

    def test_single_observation_scalar_core(self):
        # one observation, scalar core: 1-variable ridge with hand closed form
        core = np.full((1, 1, 1), 2.0)
        factors = [np.full((2, 1), 0.5), np.full((3, 1), 1.5), np.full((2, 1), -1.0)]
        idx = np.array([[0, 1, 1]])
        ys = np.array([3.0])
        sigma, sigma_k = 2.0, 0.7
        prior_row = np.array([0.3])
        # v = core * other rows = 2 * 1.5 * (-1) = -3
        v = -3.0
        expected = (v * ys[0] / sigma ** 2 + prior_row[0] / sigma_k ** 2) / (
            v ** 2 / sigma ** 2 + 1.0 / sigma_k ** 2
        )
        out = als_row_update(core, factors, idx, ys, 0, 0, sigma, sigma_k, prior_row)
        assert abs(out[0] - expected) < 1e-12

    def test_finite_difference_gradient_zero(self):
        rng = np.random.default_rng(1)
        step = 1e-5
        for trial in range(30):
            idx, ys, core, factors, priors = random_instance(rng)
            sigma = 0.8
            sigma_k = [1.0, 1.3, 0.9]
            mode = trial % 3
            row = int(rng.integers(0, factors[mode].shape[0]))
            new_row = als_row_update(
                core, factors, idx, ys, mode, row, sigma, sigma_k[mode], priors[mode][row]
            )
            r = new_row.size
            grad = np.zeros(r)
            for comp in range(r):
                plus = new_row.copy()
                plus[comp] += step
                minus = new_row.copy()
                minus[comp] -= step
                grad[comp] = (
                    restricted_objective(core, factors, idx, ys, priors, sigma, sigma_k, mode, row, plus)
                    - restricted_objective(core, factors, idx, ys, priors, sigma, sigma_k, mode, row, minus)
                ) / (2 * step)
            assert np.max(np.abs(grad)) <= 1e-6


class TestMapFit:
    def _policy(self, dims=(4, 3, 4), ranks=(2, 2, 2), m=3, sigma_tilde=0.5, seed=0):
        prior = EnsemblePrior(sigma=1.0, sigma_k=1.0, sigma_tilde=sigma_tilde, n_models=m)
        return EnsembleSampling(dims, ranks, np.random.default_rng(seed), prior=prior)

    def test_empty_history_returns_initialization(self):
        policy = self._policy()
        before = [u.copy() for u in policy.factors[0]]
        policy.map_fit(0, sweeps=3)
        for u, v in zip(before, policy.factors[0]):
            assert np.array_equal(u, v)

    def test_objective_nonincreasing(self):
        rng = np.random.default_rng(2)
        for seed in range(20):
            policy = self._policy(m=1, sigma_tilde=0.3, seed=seed)
            for _ in range(30):
                arm = tuple(int(rng.integers(1, p + 1)) for p in policy.dims)
                policy.update(arm, float(rng.standard_normal()), "exploit")
            values = policy.map_fit(0, sweeps=5, trace=True)
            diffs = np.diff(values)
            assert np.max(diffs) <= 1e-10

    def test_fixed_point_on_own_data(self):
        # data generated exactly by the current model and a huge prior
        # weight on staying put: one more sweep barely moves the factors
        rng = np.random.default_rng(3)
        dims, ranks = (3, 3, 3), (1, 1, 1)
        prior = EnsemblePrior(sigma=1.0, sigma_k=1.0, sigma_tilde=0.0, n_models=1)
        policy = EnsembleSampling(dims, ranks, np.random.default_rng(4), prior=prior)
        for _ in range(40):
            arm = tuple(int(rng.integers(1, 4)) for _ in range(3))
            idx0 = tuple(i - 1 for i in arm)
            core, factors = policy.cores[0], policy.factors[0]
            value = float(
                core[0, 0, 0] * factors[0][idx0[0], 0] * factors[1][idx0[1], 0] * factors[2][idx0[2], 0]
            )
            policy.update(arm, value, "exploit")
        policy.map_fit(0, sweeps=60)
        before = [u.copy() for u in policy.factors[0]]
        obj_before = policy.objective(0)
        policy.map_fit(0, sweeps=1)
        obj_after = policy.objective(0)
        assert obj_after <= obj_before + 1e-10
        for u, v in zip(before, policy.factors[0]):
            assert np.max(np.abs(u - v)) < 1e-6

    def test_mode_update_matches_row_update(self):
        policy = self._policy(m=1, seed=5)
        rng = np.random.default_rng(6)
        for _ in range(25):
            arm = tuple(int(rng.integers(1, p + 1)) for p in policy.dims)
            policy.update(arm, float(rng.standard_normal()), "exploit")
        idx = policy.history_index()
        ys = policy.perturbed_rewards(0)
        mode = 1
        expected_rows = [
            als_row_update(
                policy.cores[0], policy.factors[0], idx, ys, mode, i,
                policy.sigma, policy.sigma_k[mode], policy.prior_factors[0][mode][i],
            )
            for i in range(policy.dims[mode])
        ]
        policy._mode_update(0, mode)
        assert np.allclose(policy.factors[0][mode], np.vstack(expected_rows), atol=1e-10)


class TestEnsembleMechanics:
    def test_zero_prior_std_collapses_init(self):
        mu = [np.arange(12, dtype=float).reshape(4, 3) + 1.0, np.ones((3, 3))]
        prior = EnsemblePrior(mu=mu, sigma_k=1e-12, sigma=1.0, sigma_tilde=0.0, n_models=4)
        policy = EnsembleSampling((4, 3), (3, 3), np.random.default_rng(7), prior=prior)
        expected = [m / np.linalg.norm(m, axis=0) for m in mu]
        for m in range(4):
            for u, e in zip(policy.factors[m], expected):
                assert np.allclose(u, e, atol=1e-9)

    def test_unit_columns_after_init(self):
        policy = EnsembleSampling((5, 4, 3), (2, 2, 2), np.random.default_rng(8))
        for m in range(policy.n_models):
            for u in policy.factors[m]:
                assert np.allclose(np.linalg.norm(u, axis=0), 1.0, atol=1e-12)

    def test_same_seed_same_ensemble(self):
        a = EnsembleSampling((3, 3), (1, 1), np.random.default_rng(9))
        b = EnsembleSampling((3, 3), (1, 1), np.random.default_rng(9))
        for ua, ub in zip(a.factors[0], b.factors[0]):
            assert np.array_equal(ua, ub)

    def test_zero_perturbation_keeps_histories_shared(self):
        prior = EnsemblePrior(sigma_tilde=0.0, n_models=5)
        policy = EnsembleSampling((3, 3), (1, 1), np.random.default_rng(10), prior=prior)
        rng = np.random.default_rng(11)
        for _ in range(7):
            arm = (int(rng.integers(1, 4)), int(rng.integers(1, 4)))
            policy.update(arm, float(rng.standard_normal()), "exploit")
        pert = policy._pert[: policy.t]
        for m in range(5):
            assert np.array_equal(pert[:, m], policy.shared_rewards)

    def test_perturbation_mean_is_small(self):
        prior = EnsemblePrior(sigma_tilde=0.5, n_models=10000)
        policy = EnsembleSampling((2, 2), (1, 1), np.random.default_rng(12), prior=prior)
        policy.update((1, 1), 2.0, "exploit")
        omega = policy._pert[0] - 2.0
        assert abs(omega.mean()) < 4 * 0.5 / np.sqrt(10000)

    def test_history_lengths_equal(self):
        policy = EnsembleSampling((2, 2), (1, 1), np.random.default_rng(13))
        for i in range(5):
            policy.update((1, 1), float(i), "exploit")
        assert policy._pert[: policy.t].shape == (5, policy.n_models)

    def test_uniform_model_sampling(self):
        m = 8
        prior = EnsemblePrior(n_models=m, sigma_tilde=0.0)
        policy = EnsembleSampling((2, 2), (1, 1), np.random.default_rng(14), prior=prior)
        n = 100000
        draws = np.array([int(policy._rng.integers(m)) for _ in range(n)])
        freq = np.bincount(draws, minlength=m) / n
        bound = 4 * np.sqrt((1 / m) * (1 - 1 / m) / n)
        assert np.max(np.abs(freq - 1 / m)) < bound


class TestAct:
    def test_exact_model_plays_oracle(self):
        env = make_tucker_env((3, 4, 4), (2, 2, 2), w=0.6, noise_std=0.0, context_dim=1, seed=15)
        prior = EnsemblePrior(n_models=1, sigma_tilde=0.0)
        policy = EnsembleSampling(env.dims, (3, 4, 4), np.random.default_rng(16), prior=prior, context_dim=1)
        # plant the truth as the model: full-rank identity factors, core = truth
        policy.factors[0] = [np.eye(p) for p in env.dims]
        policy.cores[0] = env.truth.copy()
        policy.ranks = env.dims
        for ctx in ((1,), (2,), (3,)):
            best, _ = env.oracle(ctx)
            assert policy.act(0, ctx) == best

    def test_act_matches_slice_scan(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            dims, ranks = (3, 4, 3), (2, 2, 2)
            policy = EnsembleSampling(
                dims, ranks, np.random.default_rng(int(rng.integers(1 << 31))),
                prior=EnsemblePrior(n_models=1), context_dim=1,
            )
            ctx = (int(rng.integers(1, 4)),)
            arm = policy.act(0, ctx)
            core, factors = policy.cores[0], policy.factors[0]
            full = np.einsum("abc,ia,jb,kc->ijk", core, *factors, optimize=True)
            view = full[ctx[0] - 1]
            best = np.unravel_index(np.argmax(view), view.shape)
            assert arm == (ctx[0],) + tuple(int(i) + 1 for i in best)

    def test_context_free_act_is_global_argmax(self):
        policy = EnsembleSampling((3, 3, 3), (2, 2, 2), np.random.default_rng(18),
                                  prior=EnsemblePrior(n_models=1))
        core, factors = policy.cores[0], policy.factors[0]
        full = np.einsum("abc,ia,jb,kc->ijk", core, *factors, optimize=True)
        best = tuple(int(i) + 1 for i in np.unravel_index(np.argmax(full), full.shape))
        assert policy.act(0, None) == best

    def test_ensemble_collapse_with_zero_perturbation(self):
        # identical priors and no perturbation: models stay identical after fits
        mu = [np.linspace(1, 2, 6).reshape(3, 2), np.linspace(-1, 1, 8).reshape(4, 2)]
        prior = EnsemblePrior(mu=mu, sigma_k=1e-12, sigma_tilde=0.0, n_models=3)
        policy = EnsembleSampling((3, 4), (2, 2), np.random.default_rng(19), prior=prior)
        rng = np.random.default_rng(20)
        for _ in range(12):
            arm = (int(rng.integers(1, 4)), int(rng.integers(1, 5)))
            policy.update(arm, float(rng.standard_normal()), "exploit")
        for m in range(3):
            policy.map_fit(m, sweeps=2)
        for m in range(1, 3):
            assert np.allclose(policy.cores[0], policy.cores[m], atol=1e-8)
            for ua, ub in zip(policy.factors[0], policy.factors[m]):
                assert np.allclose(ua, ub, atol=1e-8)
