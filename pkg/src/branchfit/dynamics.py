"""Fixed-step time integration and linear analysis for small ODE/SDE plants.

Everything in this module is a pure function of its inputs: the stochastic
integrator draws all randomness from an explicit seed, so any run can be
reproduced bit for bit.  Step sizes are fixed by design; there is no
adaptive control, which keeps simulation-based loss gradients well defined.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import (
    ConfigurationError,
    IntegrationDivergedError,
    NoSignChangeError,
    NotAnEquilibriumError,
)

# Abort integration once any state magnitude passes this bound.
DIVERGENCE_LIMIT = 1e6

# |rhs| below this counts as an equilibrium.
EQUILIBRIUM_TOL = 1e-8

# Default central-difference step for Jacobians.
FD_EPS = 1e-4


@dataclass(frozen=True, eq=False)
class MeasurementPorts:
    """How a scalar feedback force couples to a plant.

    ``position_index`` / ``velocity_index`` locate the controlled coordinate
    and its rate inside the state vector; ``force_channel`` is the state
    derivative produced by a unit control force (typically a mass-matrix
    inverse column routed into the velocity rows).
    """

    position_index: int
    velocity_index: int
    force_channel: np.ndarray


@dataclass(frozen=True, eq=False)
class SystemModel:
    """A parameterized vector field, optionally with additive noise.

    ``rhs(x, t, params)`` must return a length-``dimension`` array.  The
    optional ``diffusion(x, t, params)`` returns the coefficient vector of a
    single scalar Wiener increment.  ``params`` is an immutable record; a new
    parameter set means a new record (caches key off the record, so nothing
    ever goes stale).

    Optional extension points used elsewhere in the package:

    * ``jac``: analytic state Jacobian ``(x, t, params) -> (n, n)``.
    * ``ports``: controller coupling, see :class:`MeasurementPorts`.
    * ``force_response``: ``params -> (n, k)`` matrix mapping a k-vector of
      generalized corrective forces into state-derivative space.
    * ``batch_ops``: ``params_list -> object`` with vectorized ``rhs``/``jac``
      over a stack of states, one parameter record per row.
    * ``vectorized``: whether ``rhs``/``diffusion`` broadcast over leading
      axes (lets ensembles run all paths in lockstep).
    """

    dimension: int
    rhs: Callable
    diffusion: Callable | None = None
    params: object = None
    jac: Callable | None = None
    ports: MeasurementPorts | None = None
    force_response: Callable | None = None
    batch_ops: Callable | None = None
    vectorized: bool = False
    name: str = ""


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Uniformly sampled time series of a state vector."""

    t0: float
    dt: float
    samples: np.ndarray  # (n_samples, dimension)
    param_value: float = 0.0
    seed: int | None = None

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        if self.samples.ndim != 2:
            raise ConfigurationError("samples must be a (n_samples, dimension) array")

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.samples))

    @property
    def final_state(self) -> np.ndarray:
        return self.samples[-1]

    @property
    def dimension(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.dt * (len(self.samples) - 1)


@dataclass(frozen=True, eq=False)
class LinearizationResult:
    """Jacobian and spectrum of a vector field at an equilibrium."""

    jacobian: np.ndarray
    equilibrium: np.ndarray
    eigenvalues: np.ndarray

    @property
    def max_real_part(self) -> float:
        return float(np.max(self.eigenvalues.real))


@dataclass(frozen=True)
class HopfPoint:
    """Parameter value where the leading eigenvalue pair crosses the axis."""

    param: float
    frequency: float


def _check_finite(x, t):
    if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > DIVERGENCE_LIMIT:
        raise IntegrationDivergedError(t, x)


def rk4_step(model: SystemModel, x: np.ndarray, t: float, h: float, params=None) -> np.ndarray:
    """One classical fourth-order Runge-Kutta update."""
    if h <= 0:
        raise ConfigurationError(f"step size must be positive, got {h}")
    p = model.params if params is None else params
    f = model.rhs
    k1 = f(x, t, p)
    k2 = f(x + 0.5 * h * k1, t + 0.5 * h, p)
    k3 = f(x + 0.5 * h * k2, t + 0.5 * h, p)
    k4 = f(x + h * k3, t + h, p)
    out = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    _check_finite(out, t)
    return out


def _grid(t0: float, t1: float, dt: float):
    """Number of steps and the snapped step size covering [t0, t1] exactly.

    ``dt`` must divide the interval within a 1% rounding margin; the actual
    step is stretched to land on ``t1`` exactly (so a request like one full
    revolution at a nominal step hits the endpoint instead of undershooting).
    """
    if t1 <= t0:
        raise ConfigurationError(f"need t1 > t0, got [{t0}, {t1}]")
    if dt <= 0:
        raise ConfigurationError(f"dt must be positive, got {dt}")
    ratio = (t1 - t0) / dt
    n = max(1, int(round(ratio)))
    if abs(ratio - n) > 0.01 * n:
        raise ConfigurationError(
            f"dt={dt} does not divide the interval [{t0}, {t1}] within rounding")
    return n, (t1 - t0) / n


def integrate_ode(model: SystemModel, x0, t0: float, t1: float, dt: float,
                  params=None) -> Trajectory:
    """Integrate the deterministic part with repeated RK4 steps.

    The sample count is ``(t1 - t0)/dt + 1``; ``dt`` must divide the
    interval within rounding.
    """
    p = model.params if params is None else params
    n, h = _grid(t0, t1, dt)
    x = np.asarray(x0, dtype=float)
    out = np.empty((n + 1, x.size))
    out[0] = x
    f = model.rhs
    for k in range(n):
        t = t0 + k * h
        k1 = f(x, t, p)
        k2 = f(x + 0.5 * h * k1, t + 0.5 * h, p)
        k3 = f(x + 0.5 * h * k2, t + 0.5 * h, p)
        k4 = f(x + h * k3, t + h, p)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > DIVERGENCE_LIMIT:
            raise IntegrationDivergedError(t + h, x)
        out[k + 1] = x
    return Trajectory(t0=t0, dt=h, samples=out)


def integrate_sde(model: SystemModel, x0, t0: float, t1: float, dt: float,
                  params=None, seed=0) -> Trajectory:
    """Sample one path of ``dx = rhs dt + diffusion dW`` (single Wiener source).

    The drift substep reuses the RK4 update and the scalar noise increment
    ``sqrt(dt) * xi_k`` is added afterwards, so a model whose diffusion is
    identically zero reproduces :func:`integrate_ode` exactly, seed or not.
    Identical seeds give bit-identical paths.
    """
    if model.diffusion is None:
        raise ConfigurationError("integrate_sde needs a model with a diffusion term")
    p = model.params if params is None else params
    n, h = _grid(t0, t1, dt)
    x = np.asarray(x0, dtype=float)
    out = np.empty((n + 1, x.size))
    out[0] = x
    rng = np.random.default_rng(seed)
    xi = rng.standard_normal(n)
    sqdt = np.sqrt(h)
    f, g = model.rhs, model.diffusion
    for k in range(n):
        t = t0 + k * h
        k1 = f(x, t, p)
        k2 = f(x + 0.5 * h * k1, t + 0.5 * h, p)
        k3 = f(x + 0.5 * h * k2, t + 0.5 * h, p)
        k4 = f(x + h * k3, t + h, p)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4) + g(x, t, p) * (sqdt * xi[k])
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > DIVERGENCE_LIMIT:
            raise IntegrationDivergedError(t + h, x)
        out[k + 1] = x
    return Trajectory(t0=t0, dt=h, samples=out, seed=seed if isinstance(seed, int) else None)


def path_seed(master_seed: int, path_index: int) -> np.random.SeedSequence:
    """Independent per-path seed derived from (master seed, path index)."""
    return np.random.SeedSequence(entropy=master_seed, spawn_key=(path_index,))


def sde_ensemble_final(model: SystemModel, x0, t0: float, t1: float, dt: float,
                       n_paths: int, master_seed: int = 0, params=None) -> np.ndarray:
    """Final states of ``n_paths`` independent SDE paths, shape (n_paths, n).

    Path ``i`` draws from a generator seeded by ``(master_seed, i)``, so the
    result is independent of execution order.  Models flagged ``vectorized``
    are advanced in lockstep; others fall back to one path at a time.
    """
    if model.diffusion is None:
        raise ConfigurationError("sde_ensemble_final needs a model with a diffusion term")
    if not model.vectorized:
        return np.stack([
            integrate_sde(model, x0, t0, t1, dt, params=params,
                          seed=path_seed(master_seed, i)).final_state
            for i in range(n_paths)
        ])
    p = model.params if params is None else params
    n, h = _grid(t0, t1, dt)
    x = np.tile(np.asarray(x0, dtype=float), (n_paths, 1))
    xi = np.stack([np.random.default_rng(path_seed(master_seed, i)).standard_normal(n)
                   for i in range(n_paths)])
    sqdt = np.sqrt(h)
    f, g = model.rhs, model.diffusion
    for k in range(n):
        t = t0 + k * h
        k1 = f(x, t, p)
        k2 = f(x + 0.5 * h * k1, t + 0.5 * h, p)
        k3 = f(x + 0.5 * h * k2, t + 0.5 * h, p)
        k4 = f(x + h * k3, t + h, p)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4) + g(x, t, p) * (sqdt * xi[:, k:k + 1])
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > DIVERGENCE_LIMIT:
            raise IntegrationDivergedError(t + h, x)
    return x


def fd_jacobian(fun: Callable, x: np.ndarray, eps: float = FD_EPS) -> np.ndarray:
    """Central-difference Jacobian of ``fun`` at ``x``."""
    x = np.asarray(x, dtype=float)
    n = x.size
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = eps
        cols.append((np.asarray(fun(x + e)) - np.asarray(fun(x - e))) / (2.0 * eps))
    return np.column_stack(cols)


def linearize(model: SystemModel, x_eq, params=None, fd_eps: float = FD_EPS,
              eq_tol: float = EQUILIBRIUM_TOL) -> LinearizationResult:
    """Finite-difference Jacobian and spectrum at an equilibrium point."""
    p = model.params if params is None else params
    x_eq = np.asarray(x_eq, dtype=float)
    residual = np.max(np.abs(model.rhs(x_eq, 0.0, p)))
    if residual >= eq_tol:
        raise NotAnEquilibriumError(residual, eq_tol)
    if model.jac is not None:
        jac = np.asarray(model.jac(x_eq, 0.0, p), dtype=float)
    else:
        jac = fd_jacobian(lambda x: model.rhs(x, 0.0, p), x_eq, eps=fd_eps)
    eigvals = np.linalg.eigvals(jac)
    return LinearizationResult(jacobian=jac, equilibrium=x_eq, eigenvalues=eigvals)


def _leading_eigenvalue(model: SystemModel) -> complex:
    lin = linearize(model, np.zeros(model.dimension))
    return lin.eigenvalues[int(np.argmax(lin.eigenvalues.real))]


def find_hopf(model_family: Callable[[float], SystemModel], p_lo: float, p_hi: float,
              tol: float = 1e-6) -> HopfPoint:
    """Bisect for the parameter where the leading eigenvalue pair crosses zero.

    The family is linearized at the origin; the bracket endpoints must give
    leading real parts of opposite sign.  Returns the crossing parameter and
    the imaginary part (oscillation frequency) of the leading pair there.
    """
    g_lo = _leading_eigenvalue(model_family(p_lo)).real
    g_hi = _leading_eigenvalue(model_family(p_hi)).real
    if g_lo == 0.0:
        return HopfPoint(p_lo, abs(_leading_eigenvalue(model_family(p_lo)).imag))
    if g_hi == 0.0:
        return HopfPoint(p_hi, abs(_leading_eigenvalue(model_family(p_hi)).imag))
    if np.sign(g_lo) == np.sign(g_hi):
        raise NoSignChangeError(
            f"leading real part has the same sign at both ends of [{p_lo}, {p_hi}] "
            f"({g_lo:.3g} and {g_hi:.3g})")
    lo, hi = p_lo, p_hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        lam = _leading_eigenvalue(model_family(mid))
        if lam.real == 0.0:
            lo = hi = mid
            break
        if np.sign(lam.real) == np.sign(g_lo):
            lo = mid
        else:
            hi = mid
    p_star = 0.5 * (lo + hi)
    freq = abs(_leading_eigenvalue(model_family(p_star)).imag)
    return HopfPoint(p_star, freq)
