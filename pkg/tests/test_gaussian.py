import numpy as np
import pytest

from branchfit.errors import ConfigurationError, IllConditionedKernelError
from branchfit.gaussian import (
    GaussianProcess,
    _chol_with_jitter,
    gp_fit,
    gp_kernel,
    gp_predict,
    kernel_matrix,
    log_marginal_likelihood,
)


class TestKernel:
    def test_zero_distance_gives_signal_variance(self):
        assert gp_kernel([1.0, 2.0], [1.0, 2.0], [0.5, 3.0], 1.7) == pytest.approx(1.7**2)

    def test_decays_to_zero(self):
        assert gp_kernel([0.0], [50.0], [1.0], 1.0) < 1e-300

    def test_unit_scaled_distance(self):
        k = gp_kernel([1.5, 0.0], [0.0, 0.0], [1.5, 2.0], 2.0)
        assert k == pytest.approx(4.0 * np.exp(-0.5))

    def test_rejects_bad_lengthscale(self):
        with pytest.raises(ConfigurationError):
            gp_kernel([0.0], [1.0], [0.0], 1.0)

    def test_matrix_symmetric_and_positive_definite(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            n, m = int(rng.integers(3, 20)), int(rng.integers(1, 4))
            X = rng.normal(size=(n, m)) * rng.uniform(0.1, 5.0)
            ell = rng.uniform(0.2, 4.0, size=m)
            sf = rng.uniform(0.1, 3.0)
            K = kernel_matrix(X, X, ell, sf)
            assert np.allclose(K, K.T, atol=1e-12)
            L, jitter = _chol_with_jitter(K, 0.0)
            assert np.all(np.isfinite(L))

    def test_hopeless_matrix_raises(self):
        with pytest.raises(IllConditionedKernelError):
            _chol_with_jitter(-np.eye(3), 0.0)


class TestPredict:
    def test_interpolates_training_points(self):
        rng = np.random.default_rng(1)
        X = rng.uniform(-2, 2, size=(12, 2))
        Y = np.sin(X[:, 0]) + 0.3 * X[:, 1]
        gp = GaussianProcess(X=X, Y=Y, lengthscales=np.array([1.0, 1.0]),
                             signal_std=1.0, noise_std=1e-10)
        for i in range(len(X)):
            mean, var = gp_predict(gp, X[i])
            assert abs(mean - Y[i]) < 1e-6
            assert var >= 0.0

    def test_reverts_to_prior_far_away(self):
        X = np.linspace(0, 1, 8)[:, None]
        Y = np.cos(3 * X[:, 0])
        gp = GaussianProcess(X=X, Y=Y, lengthscales=np.array([0.3]),
                             signal_std=1.4, noise_std=1e-6)
        mean, var = gp_predict(gp, np.array([40.0]))
        assert abs(mean) < 1e-10
        assert var == pytest.approx(1.4**2, rel=1e-9)

    def test_matches_dense_solve(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(5, 3))
        Y = rng.normal(size=5)
        ell = np.array([0.8, 1.2, 2.0])
        sf, sn = 1.3, 0.05
        gp = GaussianProcess(X=X, Y=Y, lengthscales=ell, signal_std=sf, noise_std=sn)
        xq = rng.normal(size=3)
        K = kernel_matrix(X, X, ell, sf) + sn**2 * np.eye(5)
        ks = kernel_matrix(xq[None, :], X, ell, sf)[0]
        mean_direct = ks @ np.linalg.solve(K, Y)
        var_direct = sf**2 - ks @ np.linalg.solve(K, ks)
        mean, var = gp_predict(gp, xq)
        assert abs(mean - mean_direct) < 1e-10
        assert abs(var - var_direct) < 1e-10

    def test_batch_prediction_shape(self):
        X = np.linspace(0, 1, 6)[:, None]
        gp = GaussianProcess(X=X, Y=X[:, 0], lengthscales=np.array([0.5]),
                             signal_std=1.0, noise_std=0.01)
        mean, var = gp_predict(gp, np.linspace(0, 1, 11)[:, None])
        assert mean.shape == (11,) and var.shape == (11,)
        assert np.all(var >= 0.0)


class TestMarginalLikelihood:
    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        X = rng.uniform(-1, 1, size=(25, 2))
        Y = np.sin(2 * X[:, 0]) * np.cos(X[:, 1]) + 0.05 * rng.normal(size=25)
        log_theta = np.log(np.array([0.7, 1.3, 0.9]))
        _, grad = log_marginal_likelihood(X, Y, log_theta, noise_std=0.05)
        eps = 1e-6
        for j in range(3):
            lp = log_theta.copy()
            lp[j] += eps
            up, _ = log_marginal_likelihood(X, Y, lp, noise_std=0.05)
            lp[j] -= 2 * eps
            down, _ = log_marginal_likelihood(X, Y, lp, noise_std=0.05)
            fd = (up - down) / (2 * eps)
            assert abs(grad[j] - fd) < 1e-5 * max(1.0, abs(fd))

    def test_gradient_with_noise_parameter(self):
        rng = np.random.default_rng(4)
        X = rng.uniform(-1, 1, size=(15, 1))
        Y = X[:, 0] ** 2 + 0.1 * rng.normal(size=15)
        log_theta = np.log(np.array([0.5, 1.0, 0.1]))
        _, grad = log_marginal_likelihood(X, Y, log_theta, noise_std=None,
                                          optimize_noise=True)
        eps = 1e-6
        lp = log_theta.copy()
        lp[2] += eps
        up, _ = log_marginal_likelihood(X, Y, lp, None, optimize_noise=True)
        lp[2] -= 2 * eps
        down, _ = log_marginal_likelihood(X, Y, lp, None, optimize_noise=True)
        assert abs(grad[2] - (up - down) / (2 * eps)) < 1e-5


class TestFit:
    def test_recovers_lengthscale_ratio(self):
        rng = np.random.default_rng(5)
        true_ell = np.array([1.0, 4.0])
        X = rng.uniform(-5, 5, size=(200, 2))
        K = kernel_matrix(X, X, true_ell, 1.0) + 1e-8 * np.eye(200)
        Y = np.linalg.cholesky(K) @ rng.standard_normal(200)
        gp = gp_fit(X, Y, noise_std=1e-3, restarts=3, seed=0)
        ratio = gp.lengthscales[1] / gp.lengthscales[0]
        assert 4.0 / 1.5 < ratio < 4.0 * 1.5

    def test_constant_targets_revert_to_constant(self):
        X = np.linspace(0, 1, 20)[:, None]
        Y = np.full(20, 2.5)
        gp = gp_fit(X, Y, theta0=np.array([0.3, 1.0]), noise_std=0.1, restarts=2, seed=1)
        mean, _ = gp_predict(gp, X)
        assert np.max(np.abs(mean - 2.5)) < 0.1

    def test_stationarity_of_returned_hyperparameters(self):
        rng = np.random.default_rng(6)
        X = rng.uniform(-2, 2, size=(40, 1))
        Y = np.sin(1.5 * X[:, 0]) + 0.02 * rng.normal(size=40)
        gp = gp_fit(X, Y, noise_std=0.02, restarts=2, seed=2)
        log_theta = np.log(np.concatenate([gp.lengthscales, [gp.signal_std]]))
        _, grad = log_marginal_likelihood(X, Y, log_theta, noise_std=0.02)
        assert np.linalg.norm(grad) < 1e-4

    def test_hyperparameter_count(self):
        X = np.random.default_rng(7).normal(size=(10, 3))
        gp = GaussianProcess(X=X, Y=X[:, 0], lengthscales=np.ones(3),
                             signal_std=1.0, noise_std=0.1)
        assert gp.n_hyperparams == 4  # one lengthscale per input plus amplitude

    def test_needs_two_distinct_inputs(self):
        with pytest.raises(ConfigurationError):
            gp_fit(np.zeros((5, 2)), np.zeros(5))
