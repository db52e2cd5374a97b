import math

import numpy as np
import pytest

from graphsmc.engine import run_smc
from graphsmc.lattice import double_spiral_blocks, grid_edges, neighbours
from graphsmc.models.gmrf import (
    ChainBlockKernel,
    GMRFModel,
    SiteGibbsKernel,
    adapted_proposal,
    default_decomposition,
    exact_posterior,
    simulate_observations,
    single_site_gibbs,
    tree_sampler,
)

# 2x2 lattice, sigma_obs=1, sigma_pair=0.1, y=(1,0,0,-1); frozen from the
# dense-solve oracle
MEAN_2X2 = np.array([4.97512438e-03, 0.0, 0.0, -4.97512438e-03])
LOGZ_2X2 = -5.619556364515569


def small_model(rows=3, cols=3, seed=0, sigma_pair=0.1):
    y = simulate_observations(rows, cols, 1.0, sigma_pair, np.random.default_rng(seed))
    return GMRFModel(rows, cols, 1.0, sigma_pair, y)


class TestExactPosterior:
    def test_single_site(self):
        m = GMRFModel(1, 1, 2.0, 0.1, np.array([0.7]))
        post = exact_posterior(m)
        assert post.mean[0] == pytest.approx(0.7)
        assert post.cov[0, 0] == pytest.approx(4.0)
        assert post.log_z == pytest.approx(0.5 * math.log(2 * math.pi * 4.0))

    def test_decoupling_limit(self):
        y = np.array([1.0, -2.0, 0.5, 3.0])
        m = GMRFModel(2, 2, 1.0, 1e6, y)
        post = exact_posterior(m)
        np.testing.assert_allclose(post.mean, y, atol=1e-6)

    def test_2x2_regression(self):
        m = GMRFModel(2, 2, 1.0, 0.1, np.array([1.0, 0.0, 0.0, -1.0]))
        post = exact_posterior(m)
        np.testing.assert_allclose(post.mean, MEAN_2X2, atol=1e-10)
        assert post.log_z == pytest.approx(LOGZ_2X2, rel=1e-12)

    def test_samples_match_moments(self):
        m = small_model(2, 2, seed=1)
        post = exact_posterior(m)
        draws = post.sample(np.random.default_rng(2), size=40_000)
        np.testing.assert_allclose(draws.mean(axis=0), post.mean, atol=0.02)
        np.testing.assert_allclose(np.cov(draws.T), post.cov, atol=0.02)

    def test_invalid_sigma(self):
        with pytest.raises(ValueError):
            GMRFModel(2, 2, 0.0, 0.1, np.zeros(4))


class TestAdaptedProposal:
    def test_first_step_without_neighbours(self):
        m = small_model(2, 2, seed=3)
        d = default_decomposition(m)
        prop = adapted_proposal(m, d)
        values = np.full((20_000, 4), np.nan)
        rng = np.random.default_rng(4)
        prop.sample_initial(values, rng)
        first = d.steps[0].new_vars[0]
        x = values[:, first]
        assert x.mean() == pytest.approx(m.y[first], abs=0.03)
        assert x.std() == pytest.approx(m.sigma_obs, abs=0.03)

    def test_full_adaptation_6x6(self):
        m = small_model(6, 6, seed=5)
        d = default_decomposition(m)
        system, _ = run_smc(d, adapted_proposal(m, d), 100, seed=6)
        assert np.abs(system.log_weights).max() <= 1e-8
        assert np.all(np.abs(system.ess - 100.0) <= 1e-6)

    def test_z_estimate_unbiased_2x2(self):
        m = GMRFModel(2, 2, 1.0, 0.1, np.array([1.0, 0.0, 0.0, -1.0]))
        d = default_decomposition(m)
        prop = adapted_proposal(m, d)
        ratios = np.array(
            [
                math.exp(run_smc(d, prop, 50, seed=900 + r)[1].log_z - LOGZ_2X2)
                for r in range(800)
            ]
        )
        se = ratios.std(ddof=1) / math.sqrt(len(ratios))
        assert abs(ratios.mean() - 1.0) <= 3 * se

    def test_z_estimate_unbiased_4x4(self):
        m = small_model(4, 4, seed=7)
        logz = exact_posterior(m).log_z
        d = default_decomposition(m)
        prop = adapted_proposal(m, d)
        ratios = np.array(
            [
                math.exp(run_smc(d, prop, 64, seed=2_000 + r)[1].log_z - logz)
                for r in range(500)
            ]
        )
        se = ratios.std(ddof=1) / math.sqrt(len(ratios))
        assert abs(ratios.mean() - 1.0) <= 3 * se


class TestBlocks:
    @pytest.mark.parametrize("n", [4, 6, 8, 10])
    def test_double_spiral_arms_are_induced_paths(self, n):
        arm_a, arm_b = double_spiral_blocks(n, n)
        assert sorted(arm_a + arm_b) == list(range(n * n))
        adj = neighbours(n, n)
        for arm in (arm_a, arm_b):
            in_arm = set(arm)
            for a, b in zip(arm[:-1], arm[1:]):
                assert b in adj[a], "consecutive arm nodes must be lattice neighbours"
            # induced path: inside the arm, only consecutive nodes are adjacent
            for i, v in enumerate(arm):
                inside = adj[v] & in_arm
                expected = {arm[j] for j in (i - 1, i + 1) if 0 <= j < len(arm)}
                assert inside == expected

    def test_odd_size_rejected(self):
        with pytest.raises(ValueError):
            double_spiral_blocks(5, 5)

    def test_chain_kernel_rejects_non_chain(self):
        m = small_model(2, 2, seed=8)
        with pytest.raises(ValueError):
            ChainBlockKernel(m, [0, 3])  # not adjacent
        with pytest.raises(ValueError):
            ChainBlockKernel(m, [0, 1, 3, 2])  # a 4-cycle, not an induced path


class TestTreeSampler:
    def test_single_site_block_matches_gibbs_kernel(self):
        m = small_model(2, 2, seed=9)
        state = np.array([0.3, -0.2, 0.1, 0.5])
        chain_k = ChainBlockKernel(m, [2])
        site_k = SiteGibbsKernel(m, 2)
        a = chain_k(state.copy(), np.random.default_rng(10))
        b = site_k(state.copy(), np.random.default_rng(10))
        assert a[2] == pytest.approx(b[2], rel=1e-12)
        assert np.all(a[[0, 1, 3]] == state[[0, 1, 3]])

    def test_stationary_means_4x4(self):
        m = small_model(4, 4, seed=11)
        post = exact_posterior(m)
        chain = tree_sampler(m, 6000, np.random.default_rng(12), init=post.mean.copy())
        kept = chain[600:]
        from graphsmc.experiments import mc_standard_error

        for i in range(m.n_sites):
            se = mc_standard_error(kept[:, i], post.mean[i])
            assert abs(kept[:, i].mean() - post.mean[i]) <= 3 * se

    def test_lag1_acf_below_single_site_gibbs(self):
        # the blocking gain needs room to show: at 4x4 both samplers crawl
        m = small_model(10, 10, seed=13)
        post = exact_posterior(m)
        from graphsmc.experiments import compute_acf

        init = post.mean.copy()
        tree = tree_sampler(m, 20_000, np.random.default_rng(14), init=init, track=[81])
        gibbs = single_site_gibbs(m, 20_000, np.random.default_rng(15), init=init, track=[81])
        rho_tree = compute_acf(tree[2000:, 0], post.mean[81], 1)[1]
        rho_gibbs = compute_acf(gibbs[2000:, 0], post.mean[81], 1)[1]
        assert rho_tree < rho_gibbs


class TestGibbs:
    def test_single_site_gibbs_stationary_means(self):
        m = small_model(3, 3, seed=16)
        post = exact_posterior(m)
        chain = single_site_gibbs(m, 20_000, np.random.default_rng(17), init=post.mean.copy())
        kept = chain[2000:]
        from graphsmc.experiments import mc_standard_error

        for i in range(m.n_sites):
            se = mc_standard_error(kept[:, i], post.mean[i])
            assert abs(kept[:, i].mean() - post.mean[i]) <= 3.5 * se

    def test_simulated_observations_shape(self):
        y = simulate_observations(3, 4, 1.0, 0.1, 0)
        assert y.shape == (12,)
