"""GMM-EM and Fisher-vector tests against independent oracles.

Oracles here: closed-form single-Gaussian MLE, extended-precision
(long-double) density ratios for soft assignment, a scalar per-term
re-evaluation of the encoding formula, and compensated summation for pooling.
"""

import math

import numpy as np
import pytest

from mqle.errors import DataError
from mqle.fisher import (
    FisherVector,
    GmmModel,
    average_pool,
    fisher_encode,
    fit_gmm,
    load_gmm,
    pool_and_normalize,
    save_gmm,
    signed_sqrt_normalize,
    soft_assign,
)


def random_gmm(rng, g, d):
    pi = rng.uniform(0.2, 1.0, g)
    pi /= pi.sum()
    return GmmModel(
        pi=pi,
        mu=rng.normal(scale=2.0, size=(g, d)),
        sigma2=rng.uniform(0.5, 2.0, (g, d)),
    )


def longdouble_soft_assign(model, x):
    """Direct density-ratio oracle at extended precision."""
    pi = model.pi.astype(np.longdouble)
    mu = model.mu.astype(np.longdouble)
    sigma2 = model.sigma2.astype(np.longdouble)
    x = x.astype(np.longdouble)
    dens = []
    for g in range(model.n_components):
        diff = x - mu[g]
        expo = np.exp(-0.5 * np.sum(diff * diff / sigma2[g]))
        norm = np.prod(np.sqrt(2 * np.pi * sigma2[g]))
        dens.append(pi[g] * expo / norm)
    dens = np.array(dens, dtype=np.longdouble)
    return (dens / dens.sum()).astype(np.float64)


def scalar_fisher_encode(model, x):
    """Term-by-term scalar evaluation of the encoding formula."""
    gamma = longdouble_soft_assign(model, x).astype(np.float64)
    g, d = model.n_components, model.dim
    out = np.zeros(2 * g * d)
    for gi in range(g):
        for di in range(d):
            sigma = math.sqrt(model.sigma2[gi, di])
            u = (x[di] - model.mu[gi, di]) / sigma
            out[gi * d + di] = gamma[gi] / math.sqrt(model.pi[gi]) * u
            out[g * d + gi * d + di] = (
                gamma[gi] / math.sqrt(2 * model.pi[gi]) * (u * u - 1.0)
            )
    return out


class TestFitGmm:
    def test_single_component_closed_form(self):
        rng = np.random.default_rng(0)
        x = rng.normal(loc=1.5, scale=2.0, size=(500, 3))
        model = fit_gmm(x, 1, seed=0)
        # oracle: closed-form MLE (mean, biased variance, unit weight)
        np.testing.assert_allclose(model.mu[0], x.mean(axis=0), atol=1e-9)
        np.testing.assert_allclose(model.sigma2[0], x.var(axis=0), atol=1e-9)
        assert model.pi[0] == pytest.approx(1.0, abs=1e-9)

    def test_two_far_blobs_recovered(self):
        rng = np.random.default_rng(1)
        # separation 20x the within-blob deviation
        a = rng.normal(loc=0.0, scale=1.0, size=(300, 2))
        b = rng.normal(loc=20.0, scale=1.0, size=(300, 2))
        model = fit_gmm(np.vstack([a, b]), 2, seed=1)
        means = model.mu[np.argsort(model.mu[:, 0])]
        np.testing.assert_allclose(means[0], a.mean(axis=0), atol=0.1)
        np.testing.assert_allclose(means[1], b.mean(axis=0), atol=0.1)

    @pytest.mark.parametrize("g", [1, 2, 8])
    def test_log_likelihood_never_decreases(self, g):
        rng = np.random.default_rng(10 + g)
        centers = rng.normal(scale=5.0, size=(g, 4))
        x = np.vstack([c + rng.normal(size=(60, 4)) for c in centers])
        model = fit_gmm(x, g, seed=g)
        trace = np.array(model.ll_trace)
        assert np.all(np.diff(trace) >= -1e-8)

    def test_weights_sum_to_one(self):
        rng = np.random.default_rng(2)
        model = fit_gmm(rng.normal(size=(200, 3)), 4, seed=2)
        assert model.pi.sum() == pytest.approx(1.0, abs=1e-9)
        assert (model.sigma2 >= 1e-6).all()

    def test_too_many_components_rejected(self):
        with pytest.raises(DataError, match="components"):
            fit_gmm(np.zeros((3, 2)), 5, seed=0)

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(150, 3))
        a = fit_gmm(x, 3, seed=7)
        b = fit_gmm(x.copy(), 3, seed=7)
        assert a.mu.tobytes() == b.mu.tobytes()


class TestSoftAssign:
    def test_single_component_exactly_one(self):
        model = GmmModel(
            pi=np.array([1.0]), mu=np.zeros((1, 3)), sigma2=np.ones((1, 3))
        )
        gamma = soft_assign(model, np.array([5.0, -2.0, 0.1]))
        assert gamma[0] == 1.0

    def test_overwhelming_likelihood_ratio(self):
        # x at the first of two equal components 100 sigma apart
        model = GmmModel(
            pi=np.array([0.5, 0.5]),
            mu=np.array([[0.0], [100.0]]),
            sigma2=np.ones((2, 1)),
        )
        gamma = soft_assign(model, np.array([0.0]))
        assert gamma[0] > 1 - 1e-10

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_longdouble_oracle(self, seed):
        rng = np.random.default_rng(seed)
        model = random_gmm(rng, 3, 4)
        x = rng.normal(scale=2.0, size=4)
        np.testing.assert_allclose(
            soft_assign(model, x), longdouble_soft_assign(model, x), atol=1e-10
        )

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(5)
        model = random_gmm(rng, 6, 3)
        gamma = soft_assign(model, rng.normal(size=(40, 3)))
        np.testing.assert_allclose(gamma.sum(axis=1), 1.0, atol=1e-12)


class TestFisherEncode:
    def test_at_the_mean_first_block_zero_second_constant(self):
        model = GmmModel(
            pi=np.array([1.0]),
            mu=np.array([[1.0, -2.0, 0.5]]),
            sigma2=np.array([[0.7, 1.3, 2.0]]),
        )
        vec = fisher_encode(model, model.mu[0])
        np.testing.assert_allclose(vec[:3], 0.0, atol=1e-15)
        np.testing.assert_allclose(vec[3:], -1.0 / math.sqrt(2.0), atol=1e-12)

    def test_far_component_blocks_vanish(self):
        model = GmmModel(
            pi=np.array([0.5, 0.5]),
            mu=np.array([[0.0, 0.0], [500.0, 500.0]]),
            sigma2=np.ones((2, 2)),
        )
        vec = fisher_encode(model, np.array([0.1, -0.1]))
        np.testing.assert_array_equal(vec[2:4], 0.0)   # far phi block
        np.testing.assert_array_equal(vec[6:8], 0.0)   # far psi block

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_scalar_formula_oracle(self, seed):
        rng = np.random.default_rng(100 + seed)
        model = random_gmm(rng, 4, 3)
        x = rng.normal(size=3)
        np.testing.assert_allclose(
            fisher_encode(model, x), scalar_fisher_encode(model, x), atol=1e-12
        )

    def test_component_permutation_equivariance(self):
        rng = np.random.default_rng(6)
        model = random_gmm(rng, 3, 2)
        perm = [2, 0, 1]
        permuted = GmmModel(
            pi=model.pi[perm], mu=model.mu[perm], sigma2=model.sigma2[perm]
        )
        x = rng.normal(size=2)
        base = fisher_encode(model, x)
        swapped = fisher_encode(permuted, x)
        d = model.dim
        g = model.n_components
        for new_g, old_g in enumerate(perm):
            np.testing.assert_allclose(
                swapped[new_g * d : (new_g + 1) * d],
                base[old_g * d : (old_g + 1) * d],
                atol=1e-12,
            )
            np.testing.assert_allclose(
                swapped[g * d + new_g * d : g * d + (new_g + 1) * d],
                base[g * d + old_g * d : g * d + (old_g + 1) * d],
                atol=1e-12,
            )

    def test_batch_matches_per_row(self):
        rng = np.random.default_rng(7)
        model = random_gmm(rng, 3, 4)
        rows = rng.normal(size=(10, 4))
        batch = fisher_encode(model, rows)
        for i in range(10):
            np.testing.assert_allclose(batch[i], fisher_encode(model, rows[i]), atol=1e-12)


class TestPooling:
    def test_hand_evaluated_example(self):
        # pooled (4, -1): l1 norm 5, so output is (2/sqrt5, -1/sqrt5)
        result = signed_sqrt_normalize(np.array([4.0, -1.0]))
        np.testing.assert_allclose(
            result.values, [2.0 / math.sqrt(5.0), -1.0 / math.sqrt(5.0)], atol=1e-15
        )
        assert result.normalized
        assert np.linalg.norm(result.values) == pytest.approx(1.0, abs=1e-12)

    def test_unit_norm_for_random_vectors(self):
        rng = np.random.default_rng(8)
        for _ in range(200):
            vec = rng.normal(size=rng.integers(1, 40))
            result = signed_sqrt_normalize(vec)
            assert np.linalg.norm(result.values) == pytest.approx(1.0, abs=1e-9)

    def test_two_step_interpretation_equivalent(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            vec = rng.normal(size=20)
            single = signed_sqrt_normalize(vec).values
            two_step = np.sign(vec) * np.sqrt(np.abs(vec))
            two_step = two_step / np.linalg.norm(two_step)
            np.testing.assert_allclose(single, two_step, atol=1e-9)

    def test_zero_vector_flagged_unnormalized(self):
        result = signed_sqrt_normalize(np.zeros(6))
        assert not result.normalized
        np.testing.assert_array_equal(result.values, 0.0)

    def test_singleton_pooling_is_identity_before_normalization(self):
        rng = np.random.default_rng(10)
        model = random_gmm(rng, 2, 3)
        x = rng.normal(size=3)
        pooled = pool_and_normalize(model, x[None, :])
        direct = signed_sqrt_normalize(fisher_encode(model, x))
        np.testing.assert_allclose(pooled.values, direct.values, atol=1e-15)

    def test_pooling_order_invariant(self):
        rng = np.random.default_rng(11)
        model = random_gmm(rng, 3, 4)
        rows = rng.normal(size=(8, 4))
        a = pool_and_normalize(model, rows)
        b = pool_and_normalize(model, rows[::-1])
        np.testing.assert_allclose(a.values, b.values, atol=1e-12)

    def test_empty_set_rejected(self):
        rng = np.random.default_rng(12)
        model = random_gmm(rng, 2, 3)
        with pytest.raises(DataError, match="empty"):
            pool_and_normalize(model, np.zeros((0, 3)))


class TestAveragePool:
    def test_simple_mean(self):
        np.testing.assert_array_equal(
            average_pool(np.array([[1.0, 1.0], [3.0, 3.0]])), [2.0, 2.0]
        )

    def test_singleton_identity(self):
        vec = np.array([0.3, -1.2, 4.0])
        np.testing.assert_array_equal(average_pool(vec[None, :]), vec)

    def test_matches_compensated_sum_oracle(self):
        rng = np.random.default_rng(13)
        rows = rng.normal(scale=100.0, size=(100, 5))
        pooled = average_pool(rows)
        oracle = np.array(
            [math.fsum(rows[:, j]) / 100.0 for j in range(5)]
        )
        np.testing.assert_allclose(pooled, oracle, atol=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(DataError, match="empty"):
            average_pool(np.zeros((0, 2)))


class TestGmmSerialization:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(14)
        model = random_gmm(rng, 4, 5)
        path = tmp_path / "gmm.bin"
        save_gmm(path, model, config_hash="33" * 8)
        loaded = load_gmm(path)
        assert loaded.n_components == 4 and loaded.dim == 5
        np.testing.assert_allclose(loaded.mu, model.mu, atol=1e-6)
        np.testing.assert_allclose(loaded.pi, model.pi, atol=1e-6)
