"""Gaussian process regression with a squared-exponential ARD kernel.

One process per output dimension; hyperparameters (per-input lengthscales
and the signal standard deviation, optionally the noise level) are fitted
by maximizing the log marginal likelihood with its analytic gradient in
log-parameter space.  Predictions condition on the full training set, so
these stay practical only for modest dataset sizes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

from .errors import ConfigurationError, IllConditionedKernelError

# Jitter escalation relative to mean kernel diagonal; the upper end is the
# hard failure threshold.
_JITTER_START = 1e-10
_JITTER_MAX = 1e-6


def gp_kernel(x, x2, lengthscales, signal_std) -> float:
    """SE-ARD covariance between two points."""
    x = np.asarray(x, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    ell = np.asarray(lengthscales, dtype=float)
    if np.any(ell <= 0):
        raise ConfigurationError("lengthscales must be positive")
    r2 = np.sum(((x - x2) / ell) ** 2)
    return signal_std**2 * np.exp(-0.5 * r2)


def kernel_matrix(X1, X2, lengthscales, signal_std) -> np.ndarray:
    Xs1 = np.asarray(X1, dtype=float) / lengthscales
    Xs2 = np.asarray(X2, dtype=float) / lengthscales
    sq = (np.sum(Xs1**2, axis=1)[:, None] + np.sum(Xs2**2, axis=1)[None, :]
          - 2.0 * Xs1 @ Xs2.T)
    np.maximum(sq, 0.0, out=sq)
    return signal_std**2 * np.exp(-0.5 * sq)


def _chol_with_jitter(K: np.ndarray, noise_var: float):
    """Cholesky of K + noise_var*I, escalating a diagonal jitter on failure."""
    n = K.shape[0]
    scale = np.trace(K) / n
    jitter = 0.0
    while True:
        try:
            L = cholesky(K + (noise_var + jitter) * np.eye(n), lower=True)
            return L, jitter
        except np.linalg.LinAlgError:
            if jitter == 0.0:
                jitter = _JITTER_START * scale
            else:
                jitter *= 10.0
            if jitter > _JITTER_MAX * scale:
                raise IllConditionedKernelError(
                    f"kernel matrix not positive definite at maximum jitter "
                    f"{_JITTER_MAX * scale:.3g}")


@dataclass
class GaussianProcess:
    """A fitted zero-mean GP: training set, hyperparameters, cached solve."""

    X: np.ndarray
    Y: np.ndarray
    lengthscales: np.ndarray
    signal_std: float
    noise_std: float
    L: np.ndarray = None
    alpha: np.ndarray = None
    jitter: float = 0.0

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.Y = np.asarray(self.Y, dtype=float).ravel()
        self.lengthscales = np.asarray(self.lengthscales, dtype=float)
        if self.L is None:
            K = kernel_matrix(self.X, self.X, self.lengthscales, self.signal_std)
            self.L, self.jitter = _chol_with_jitter(K, self.noise_std**2)
            self.alpha = cho_solve((self.L, True), self.Y)

    @property
    def n_hyperparams(self) -> int:
        # lengthscale per input plus the signal amplitude
        return self.X.shape[1] + 1


def gp_predict(gp: GaussianProcess, x_star):
    """Posterior mean and variance at one point or a stack of points."""
    x_star = np.asarray(x_star, dtype=float)
    single = x_star.ndim == 1
    Xq = x_star[None, :] if single else x_star
    ks = kernel_matrix(Xq, gp.X, gp.lengthscales, gp.signal_std)
    mean = ks @ gp.alpha
    v = solve_triangular(gp.L, ks.T, lower=True)
    var = gp.signal_std**2 - np.sum(v * v, axis=0)
    np.maximum(var, 0.0, out=var)
    if single:
        return float(mean[0]), float(var[0])
    return mean, var


def log_marginal_likelihood(X, Y, log_theta, noise_std, optimize_noise=False):
    """Log marginal likelihood and its gradient in log-parameter space.

    ``log_theta`` holds ``log(lengthscales)`` then ``log(signal_std)`` and,
    when ``optimize_noise`` is set, ``log(noise_std)`` (the ``noise_std``
    argument is ignored in that case).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float).ravel()
    n, m = X.shape
    ell = np.exp(log_theta[:m])
    sf = np.exp(log_theta[m])
    sn = np.exp(log_theta[m + 1]) if optimize_noise else noise_std
    K = kernel_matrix(X, X, ell, sf)
    L, jitter = _chol_with_jitter(K, sn**2)
    alpha = cho_solve((L, True), Y)
    lml = (-0.5 * float(Y @ alpha)
           - float(np.sum(np.log(np.diag(L))))
           - 0.5 * n * np.log(2.0 * np.pi))
    Kinv = cho_solve((L, True), np.eye(n))
    A = np.outer(alpha, alpha) - Kinv
    grad = np.empty(len(log_theta))
    scaled = X / ell
    for d in range(m):
        diff = scaled[:, d][:, None] - scaled[:, d][None, :]
        grad[d] = 0.5 * np.sum(A * (K * diff * diff))
    grad[m] = 0.5 * np.sum(A * (2.0 * K))
    if optimize_noise:
        grad[m + 1] = 0.5 * np.trace(A) * 2.0 * sn**2
    return lml, grad


def _ascend(X, Y, log_theta0, noise_std, optimize_noise,
            adam_steps=150, adam_rate=0.05, polish_steps=400, grad_tol=1e-5):
    """Adam warm-up followed by backtracking gradient ascent to stationarity."""
    p = np.array(log_theta0, dtype=float)
    lml, grad = log_marginal_likelihood(X, Y, p, noise_std, optimize_noise)
    history = [-lml]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    m1 = np.zeros_like(p)
    m2 = np.zeros_like(p)
    best_p, best_lml = p.copy(), lml
    for step in range(1, adam_steps + 1):
        m1 = beta1 * m1 + (1 - beta1) * grad
        m2 = beta2 * m2 + (1 - beta2) * grad * grad
        p = p + adam_rate * (m1 / (1 - beta1**step)) / (np.sqrt(m2 / (1 - beta2**step)) + eps)
        try:
            lml, grad = log_marginal_likelihood(X, Y, p, noise_std, optimize_noise)
        except IllConditionedKernelError:
            p = best_p.copy()
            break
        history.append(-lml)
        if lml > best_lml:
            best_lml, best_p = lml, p.copy()
    p = best_p.copy()
    lml, grad = log_marginal_likelihood(X, Y, p, noise_std, optimize_noise)
    rate = 0.1
    for _ in range(polish_steps):
        gnorm = np.linalg.norm(grad)
        if gnorm < grad_tol:
            break
        trial = p + rate * grad
        try:
            lml_t, grad_t = log_marginal_likelihood(X, Y, trial, noise_std, optimize_noise)
        except IllConditionedKernelError:
            rate *= 0.5
            continue
        if lml_t > lml:
            p, lml, grad = trial, lml_t, grad_t
            history.append(-lml)
            rate *= 1.2
        else:
            rate *= 0.5
            if rate < 1e-12:
                break
    return p, lml, history


def gp_fit(X, Y, theta0=None, noise_std=None, restarts: int = 5, seed: int = 0,
           optimize_noise: bool = False, adam_steps: int = 150,
           polish_steps: int = 400) -> GaussianProcess:
    """Fit hyperparameters by maximum marginal likelihood with restarts.

    ``theta0`` is ``(lengthscales..., signal_std)``; when omitted it defaults
    to the per-dimension data spread and the target standard deviation.  The
    first restart starts exactly at ``theta0``, the rest at seeded
    multiplicative jitters of it, and the best restart wins.  ``noise_std``
    defaults to 1e-2 of the target standard deviation.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float).ravel()
    n, m = X.shape
    if n < 2 or np.unique(X, axis=0).shape[0] < 2:
        raise ConfigurationError("need at least two distinct training inputs")
    y_std = float(np.std(Y))
    if noise_std is None:
        noise_std = 1e-2 * (y_std if y_std > 0 else 1.0)
    if theta0 is None:
        spreads = np.std(X, axis=0)
        spreads[spreads <= 0] = 1.0
        theta0 = np.concatenate([spreads, [y_std if y_std > 0 else 1.0]])
    theta0 = np.asarray(theta0, dtype=float)
    if theta0.size != m + 1:
        raise ConfigurationError(f"theta0 needs {m + 1} entries, got {theta0.size}")
    log_theta0 = np.log(theta0)
    if optimize_noise:
        log_theta0 = np.concatenate([log_theta0, [np.log(noise_std)]])
    rng = np.random.default_rng(seed)
    best = None
    for r in range(max(1, restarts)):
        start = log_theta0 if r == 0 else log_theta0 + rng.normal(0.0, 0.5, log_theta0.size)
        try:
            p, lml, _ = _ascend(X, Y, start, noise_std, optimize_noise,
                                adam_steps=adam_steps, polish_steps=polish_steps)
        except IllConditionedKernelError:
            continue
        if best is None or lml > best[1]:
            best = (p, lml)
    if best is None:
        raise IllConditionedKernelError("all restarts failed with ill-conditioned kernels")
    p = best[0]
    ell = np.exp(p[:m])
    sf = float(np.exp(p[m]))
    sn = float(np.exp(p[m + 1])) if optimize_noise else noise_std
    return GaussianProcess(X=X, Y=Y, lengthscales=ell, signal_std=sf, noise_std=sn)
