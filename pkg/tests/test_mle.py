import warnings

import numpy as np
import pytest

from configgp.errors import BasisError, StructuralError
from configgp.gp import BasisSpec, Dataset, GaussianProcess, log_likelihood
from configgp.inference.mle import (
    Layout,
    MleOptions,
    ProfileObjective,
    central_gradient,
    fit_mle,
    init_alpha,
    initial_params,
)
from configgp.kernels import KernelParams
from conftest import currin_dataset


def draw_standard_gp(seed, n=60):
    rng = np.random.default_rng(seed)
    X = rng.random((n, 2))
    T = rng.uniform(0.1, 0.4, (n, 2))
    truth = KernelParams(gamma=[2.0, 2.0], theta=[2.0, 2.0], sigma1_sq=1.0)
    data = Dataset(X, T, np.zeros(n))
    from configgp.gp import assemble_covariance

    S = assemble_covariance(data, truth, "standard-gp")
    y = np.linalg.cholesky(S + 1e-10 * np.eye(n)) @ rng.normal(size=n)
    return Dataset(X, T, y), truth


class TestInitAlpha:
    def test_constant_outputs(self):
        rng = np.random.default_rng(0)
        data = Dataset(rng.random((8, 3)), rng.uniform(0.1, 0.4, (8, 1)), np.full(8, 2.5))
        with pytest.warns(RuntimeWarning):
            init = init_alpha(data)
        assert init.degenerate
        np.testing.assert_array_equal(init.weights, np.ones(3))

    def test_active_input_gets_largest_weight(self):
        rng = np.random.default_rng(1)
        X = rng.random((30, 3))
        y = np.sin(6 * X[:, 0]) + 0.01 * X[:, 1]
        init = init_alpha(Dataset(X, rng.uniform(0.1, 0.4, (30, 1)), y))
        assert not init.degenerate
        assert init.weights.shape == (3,)
        assert np.all(init.weights > 0)
        assert init.weights[0] > init.weights[1:].max()

    def test_too_few_records(self):
        with pytest.raises(StructuralError):
            init_alpha(Dataset([[0.1], [0.2]], [[0.3], [0.3]], [0.0, 1.0]))

    def test_starting_point(self, small_currin):
        p0 = initial_params(small_currin, "config-k2", scale_discrepancy=False)
        v = np.var(small_currin.outputs)
        np.testing.assert_array_equal(p0.gamma, p0.alpha)
        np.testing.assert_array_equal(p0.theta, np.ones(2))
        assert p0.sigma1_sq == pytest.approx(v)
        assert p0.sigma2_sq == pytest.approx(0.1 * v)


class TestFitMle:
    def test_deterministic(self, small_currin):
        a = fit_mle(small_currin, "config-k2", MleOptions(restarts=2, seed=7))
        b = fit_mle(small_currin, "config-k2", MleOptions(restarts=2, seed=7))
        assert a.log_likelihood == b.log_likelihood
        for name in ("gamma", "alpha", "theta", "beta"):
            np.testing.assert_array_equal(getattr(a.params, name), getattr(b.params, name))
        assert a.params.sigma1_sq == b.params.sigma1_sq and a.params.sigma2_sq == b.params.sigma2_sq

    def test_optimum_dominates_truth(self):
        data, truth = draw_standard_gp(3)
        res = fit_mle(data, "standard-gp")
        assert res.log_likelihood >= log_likelihood(data, truth, "standard-gp", res.basis)

    def test_optimum_beats_start(self):
        data = currin_dataset(n=50, seed=11)
        res = fit_mle(data, "config-k2")
        assert res.log_likelihood > res.initial_log_likelihood

    def test_reported_is_best_converged(self, small_currin):
        res = fit_mle(small_currin, "config-k1", MleOptions(restarts=4))
        best = max(d.log_likelihood for d in res.diagnostics if d.converged)
        assert res.log_likelihood >= best
        assert len(res.converged) == 4
        assert res.log_likelihood == pytest.approx(
            log_likelihood(small_currin, res.params, "config-k1", res.basis, res.params.beta), rel=1e-10
        )

    def test_one_dimensional_interpolation(self):
        x = np.linspace(0.1, 0.9, 5)[:, None]
        data = Dataset(x, np.full((5, 1), 0.2), x[:, 0])
        res = fit_mle(data, "config-k2", basis=BasisSpec("constant", 1, 1))
        params = res.params.replace(sigma2_sq=1e-14)
        mean, _ = GaussianProcess(data, params, "config-k2", res.basis).predict_arrays(x)
        np.testing.assert_allclose(mean, x[:, 0], atol=1e-6)

    def test_empty(self):
        with pytest.raises(StructuralError):
            fit_mle(Dataset(np.zeros((0, 1)), np.zeros((0, 1)), []), "config-k2")

    def test_basis_larger_than_data(self):
        data = Dataset([[0.1, 0.2], [0.5, 0.5]], [[0.2], [0.3]], [1.0, 2.0])
        with pytest.raises(BasisError):
            fit_mle(data, "high-fidelity-gp", basis=BasisSpec("linear-in-x", 2, 1))


def richardson_points(model, data, count, seed):
    layout = Layout(model, data.p, data.q, float(np.var(data.outputs)), {})
    objective = ProfileObjective(data, model, BasisSpec("linear-in-x", data.p, data.q), layout)
    rng = np.random.default_rng(seed)
    centre = layout.pack(initial_params(data, model))
    for _ in range(count):
        yield objective, np.clip(centre + rng.normal(0, 0.5, centre.size), layout.lower, layout.upper)


class TestGradient:
    @pytest.mark.parametrize("model", ["config-k1", "config-k2"])
    def test_richardson_step_halving(self, model, small_currin):
        for objective, z in richardson_points(model, small_currin, 10, seed=5):
            g1 = central_gradient(objective, z, 1e-4)
            g2 = central_gradient(objective, z, 5e-5)
            assert np.linalg.norm(g1 - g2) <= 1e-4 * np.linalg.norm(g2)

    def test_central_difference_on_quadratic(self):
        g = central_gradient(lambda z: float(z @ z), np.array([1.0, -2.0]), 1e-3)
        np.testing.assert_allclose(g, [2.0, -4.0], rtol=1e-9)
