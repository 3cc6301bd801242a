import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from configgp.errors import StructuralError
from configgp.gp import cholesky_factor
from configgp.kernels import (
    EmulatorKind,
    KernelParams,
    PairwiseTerms,
    aggregate_fidelity,
    composite_kernel,
    cross_covariance,
    diagonal_covariance,
    kernel1_t,
    kernel2_t,
    se_kernel,
    twy_t,
)

unit = st.floats(0.0, 1.0)
positive = st.floats(0.05, 5.0)


def random_params(rng, model, p, q):
    kw = dict(
        gamma=rng.uniform(0.1, 5, p),
        sigma1_sq=float(rng.uniform(0.5, 3)),
        l=float(rng.uniform(1, 3)),
        twy_power=float(rng.uniform(1, 5)),
    )
    if model in ("standard-gp",) or model.startswith("config"):
        kw["theta"] = rng.uniform(0.1, 3, q)
    if model.startswith(("twy", "config")):
        kw["alpha"] = rng.uniform(0.1, 5, p)
        kw["sigma2_sq"] = float(rng.uniform(0.1, 3))
    if model == "config-k2":
        kw["l_r"] = rng.uniform(1, 3, q)
    return KernelParams(**kw)


def as_plain(params):
    d = params.to_dict()
    return {k: v for k, v in d.items() if v is not None}


class TestSquaredExponential:
    def test_identical_points(self):
        assert se_kernel([0.3, 0.7], [0.3, 0.7], [2.0, 5.0]) == 1.0

    def test_unit_distance(self):
        assert se_kernel([0.0], [1.0], [1.0]) == pytest.approx(math.exp(-1), abs=1e-15)

    @given(st.lists(unit, min_size=3, max_size=3), st.lists(unit, min_size=3, max_size=3),
           st.lists(positive, min_size=3, max_size=3))
    def test_symmetric(self, u, v, w):
        assert se_kernel(u, v, w) == se_kernel(v, u, w)

    def test_length_mismatch(self):
        with pytest.raises(StructuralError):
            se_kernel([0.1, 0.2], [0.1], [1.0, 1.0])


class TestKernelOne:
    def test_zero_fidelity(self):
        assert kernel1_t([0.0], [0.7], [1.3]) == 0.0

    def test_unit_point(self):
        assert kernel1_t([1.0], [1.0], [1.0]) == pytest.approx(2 - 2 * math.exp(-1), abs=1e-15)

    @given(st.lists(unit, min_size=2, max_size=2), st.lists(unit, min_size=2, max_size=2),
           st.lists(positive, min_size=2, max_size=2))
    def test_four_term_construction(self, t1, t2, th):
        expected = se_kernel(t1, t2, th) - se_kernel(t1, [0, 0], th) - se_kernel(t2, [0, 0], th) + 1
        assert kernel1_t(t1, t2, th) == expected

    @given(st.lists(st.floats(0.01, 1.0), min_size=3, max_size=3), st.integers(0, 2),
           st.lists(positive, min_size=3, max_size=3))
    def test_diagonal_positive_with_one_zero(self, t, r, th):
        t = list(t)
        t[r] = 0.0
        assert kernel1_t(t, t, th) > 0


class TestKernelTwo:
    def test_zero_fidelity(self):
        assert kernel2_t([0.0, 0.0], [0.5, 0.3], [1.0, 2.0]) == 0.0

    def test_hand_value(self):
        assert kernel2_t([0.3, 0.4], [0.5, 0.2], [1.0, 1.0]) == pytest.approx(0.0169, abs=1e-15)

    @given(unit, unit, st.floats(0.5, 6.0))
    def test_reduces_to_twy(self, a, b, power):
        assert kernel2_t([a], [b], [1.0], [power], 1.0) == twy_t(a, b, power)

    @given(st.lists(st.floats(0.01, 1.0), min_size=3, max_size=3), st.integers(0, 2),
           st.lists(st.floats(0.05, 1.0), min_size=3, max_size=3))
    def test_diagonal_positive_with_one_zero(self, t, r, th):
        t = list(t)
        t[r] = 0.0
        assert kernel2_t(t, t, th) > 0


class TestTwyAndAggregation:
    def test_zero(self):
        assert twy_t(0.0, 0.8, 2.0) == 0.0

    def test_hand_value(self):
        assert twy_t(0.4, 0.6, 2.0) == pytest.approx(0.16, abs=1e-15)

    @given(unit, unit, st.floats(0.5, 5))
    def test_symmetric(self, a, b, l):
        assert twy_t(a, b, l) == twy_t(b, a, l)

    def test_means(self):
        assert aggregate_fidelity([0.2, 0.4], "arith") == pytest.approx(0.3, abs=1e-15)
        assert aggregate_fidelity([0.2, 0.4], "geom") == pytest.approx(math.sqrt(0.08), abs=1e-15)

    @given(st.lists(st.floats(1e-3, 1.0), min_size=1, max_size=5))
    def test_am_gm(self, t):
        assert aggregate_fidelity(t, "geom") <= aggregate_fidelity(t, "arith") * (1 + 1e-12)

    def test_unknown_mode(self):
        with pytest.raises(StructuralError):
            aggregate_fidelity([0.2], "harmonic")


class TestKernelParams:
    def test_rejects_nonpositive_weights(self):
        with pytest.raises(StructuralError):
            KernelParams(gamma=[1.0, 0.0])

    def test_rejects_negative_variance(self):
        with pytest.raises(StructuralError):
            KernelParams(gamma=[1.0], sigma2_sq=-1.0)

    def test_bayes_parametrisation(self):
        params = KernelParams.from_bayes(2.0, 0.25, gamma=[1.0])
        assert params.sigma2_sq == 0.5 and params.lam == 0.25

    def test_dict_round_trip(self):
        params = KernelParams(gamma=[1.5, 2.5], alpha=[0.1, 0.2], theta=[3.0, 4.0], sigma2_sq=0.3, beta=[1.0, 2.0, 3.0])
        again = KernelParams.from_dict(params.to_dict())
        for name in ("gamma", "alpha", "theta", "beta"):
            np.testing.assert_array_equal(getattr(again, name), getattr(params, name))

    def test_missing_block_for_model(self):
        with pytest.raises(StructuralError):
            composite_kernel("config-k2", KernelParams(gamma=[1.0]), ([0.1], [0.2]), ([0.3], [0.4]))


class TestCompositeKernel:
    @pytest.mark.parametrize("model", [m.value for m in EmulatorKind])
    def test_matches_scalar_oracle(self, model, rng):
        for _ in range(100):
            params = random_params(rng, model, 2, 2)
            x1, x2, t1, t2 = (rng.random(2) for _ in range(4))
            got = composite_kernel(model, params, (x1, t1), (x2, t2))
            want = oracles.covariance(model, as_plain(params), x1, t1, x2, t2)
            assert got == pytest.approx(want, rel=1e-12)

    def test_config_at_zero_fidelity_is_phi_part(self):
        params = KernelParams(gamma=[2.0], alpha=[1.0], theta=[1.0], sigma1_sq=1.7, sigma2_sq=0.9)
        got = composite_kernel("config-k2", params, ([0.2], [0.0]), ([0.6], [0.0]))
        assert got == 1.7 * se_kernel([0.2], [0.6], [2.0])

    @pytest.mark.parametrize("model", [m.value for m in EmulatorKind])
    def test_matrix_path_matches_scalar(self, model, rng):
        params = random_params(rng, model, 3, 2)
        X1, T1, X2, T2 = rng.random((6, 3)), rng.random((6, 2)), rng.random((5, 3)), rng.random((5, 2))
        K = cross_covariance(model, params, X1, T1, X2, T2)
        for i in range(6):
            for j in range(5):
                assert K[i, j] == pytest.approx(composite_kernel(model, params, (X1[i], T1[i]), (X2[j], T2[j])),
                                                rel=1e-10, abs=1e-14)

    @pytest.mark.parametrize("model", [m.value for m in EmulatorKind])
    def test_diagonal_matches_matrix(self, model, rng):
        params = random_params(rng, model, 2, 3)
        X, T = rng.random((10, 2)), rng.random((10, 3))
        K = cross_covariance(model, params, X, T, X, T)
        np.testing.assert_allclose(diagonal_covariance(model, params, X, T), np.diag(K), rtol=1e-12, atol=1e-15)

    def test_identical_rows_fully_correlated(self):
        params = KernelParams(gamma=[1.0, 2.0], alpha=[1.0, 1.0], theta=[1.0, 1.0], sigma2_sq=0.5)
        X, T = np.array([[0.3, 0.3], [0.3, 0.3]]), np.array([[0.2, 0.2], [0.2, 0.2]])
        K = cross_covariance("config-k1", params, X, T, X, T)
        assert K[0, 1] == K[0, 0]

    def test_symmetric_matrix(self, rng):
        params = random_params(rng, "config-k1", 2, 2)
        X, T = rng.random((15, 2)), rng.random((15, 2))
        K = PairwiseTerms(X, T, X, T).covariance("config-k1", params)
        np.testing.assert_array_equal(K, K.T)


class TestLimitingConstraint:
    @pytest.mark.parametrize("kernel", [kernel1_t, kernel2_t])
    def test_vanishes_at_zero(self, kernel, rng):
        for t in rng.random((1000, 3)):
            th = rng.uniform(0.1, 3, 3)
            assert abs(kernel(t, np.zeros(3), th)) <= 1e-12
            assert abs(kernel(np.zeros(3), np.zeros(3), th)) <= 1e-12

    @pytest.mark.parametrize("model", ["config-k1", "config-k2"])
    def test_discrepancy_variance_vanishes(self, model, rng):
        params = random_params(rng, model, 2, 3).replace(sigma1_sq=1e-300)
        X = rng.random((1000, 2))
        var = diagonal_covariance(model, params, X, np.zeros((1000, 3)))
        assert np.max(np.abs(var)) <= 1e-12

    def test_prior_sd_identity(self, rng):
        for _ in range(100):
            th, lr, l = rng.uniform(0.1, 2, 3), rng.uniform(1, 3, 3), float(rng.uniform(1, 3))
            s2 = float(rng.uniform(0.1, 4))
            t = rng.random(3)
            params = KernelParams(gamma=[1.0], alpha=[1.0], theta=th, l_r=lr, l=l, sigma1_sq=1e-300, sigma2_sq=s2)
            var = diagonal_covariance("config-k2", params, np.zeros((1, 1)), t[None, :])[0]
            expected = math.sqrt(s2) * float(np.sum(th * t**lr)) ** (l / 2)
            assert math.sqrt(var) == pytest.approx(expected, rel=1e-12)


class TestGramMatrices:
    @pytest.mark.parametrize("kernel", ["config-k1", "config-k2"])
    def test_fifty_point_gram_factors(self, kernel, rng):
        for _ in range(20):
            T = rng.random((50, 2))
            params = KernelParams(gamma=[1.0], alpha=[1.0], theta=rng.uniform(0.1, 3, 2), sigma1_sq=1e-300, sigma2_sq=1.0)
            K = cross_covariance(kernel, params, np.zeros((50, 1)), T, np.zeros((50, 1)), T)
            cholesky_factor(K)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(2, 30), st.integers(1, 4), st.integers(1, 4),
           st.sampled_from([m.value for m in EmulatorKind]))
    def test_random_covariances_factor(self, seed, n, p, q, model):
        rng = np.random.default_rng(seed)
        params = random_params(rng, model, p, q)
        X, T = rng.random((n, p)), rng.uniform(0.01, 1, (n, q))
        cholesky_factor(cross_covariance(model, params, X, T, X, T))
