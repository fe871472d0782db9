"""Aeroelastic section models: heave/pitch aerofoil with polynomial torsional
stiffness, in two flavours.

* ``unsteady_model``: 2+1 degrees of freedom.  The extra non-physical
  coordinate ``w`` filters the circulatory airloads through the two-pole lag
  approximation with constants ``c0..c4``, so the wake memory is captured by
  one second-order state.  State layout ``(h, alpha, w, h_dot, alpha_dot,
  w_dot)``.
* ``quasisteady_model``: 2 degrees of freedom, airloads taken proportional
  to the instantaneous effective incidence.  State layout
  ``(h, alpha, h_dot, alpha_dot)``.

Both share the structural core: heave spring/damper ``(s, d)``, torsional
damper ``d_t`` and a torsional stiffness with linear, quadratic and cubic
coefficients ``(s_t1, s_t2, s_t3)``.  The quadratic term breaks the pitch
symmetry and is what pushes the loss of stability subcritical for the
default parameter set; the cubic term restabilizes large cycles.

Equations of motion are assembled as ``M y'' + B y' + S y + f_nl(y) = 0``
with the airload contributions included in ``M``, ``B``, ``S``.  Process
noise, when enabled, is a random pitch moment of standard deviation
``sigma`` entering through the inverse mass matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .dynamics import MeasurementPorts, SystemModel
from .errors import ConfigurationError, SingularMassMatrixError

_COND_LIMIT = 1e12


@dataclass(frozen=True)
class FlutterParams:
    """Parameter record for both aerofoil models.

    Units: masses kg, inertia kg m^2, lengths m, stiffnesses N/m or N m,
    dampers N s/m or N m s, air density kg/m^3, airspeed m/s.  ``a`` is the
    dimensionless elastic-axis offset, ``c0..c4`` the airload lag constants,
    ``V`` the airspeed (bifurcation parameter) and ``sigma`` the standard
    deviation of the stochastic pitch moment.
    """

    m: float = 2.5
    m_w: float = 1.2
    I_A: float = 0.008
    b: float = 0.15
    a: float = -0.4
    x_f: float = 0.09
    rho: float = 1.204
    s: float = 2500.0
    d: float = 3.5
    d_t: float = 0.018
    s_t1: float = 14.0
    s_t2: float = 150.0
    s_t3: float = 500.0
    c0: float = 1.0
    c1: float = 0.165
    c2: float = 0.0455
    c3: float = 0.335
    c4: float = 0.3
    V: float = 12.0
    sigma: float = 0.0

    def validate(self):
        if min(self.m, self.I_A, self.b) <= 0 or self.rho < 0:
            raise ConfigurationError("m, I_A, b must be positive and rho nonnegative")
        if self.V < 0:
            raise ConfigurationError("airspeed V must be nonnegative")
        if self.sigma < 0:
            raise ConfigurationError("noise level sigma must be nonnegative")

    def at(self, V: float, sigma: float | None = None) -> "FlutterParams":
        """Copy with a new airspeed (and optionally noise level)."""
        return replace(self, V=float(V), **({} if sigma is None else {"sigma": float(sigma)}))


def assemble_unsteady_matrices(p: FlutterParams):
    """Mass, damping and stiffness matrices of the 2+1 DoF model."""
    p.validate()
    pi = math.pi
    m_st = np.array([
        [p.m, p.m_w * (p.b - p.x_f), 0.0],
        [p.m_w * (p.b - p.x_f), p.I_A, 0.0],
        [0.0, 0.0, 0.0],
    ])
    m_ae = np.array([
        [p.rho * p.b**2 * pi, -p.rho * p.b**3 * pi * p.a, 0.0],
        [-p.rho * p.b**3 * pi * p.a, p.rho * p.b**4 * pi * (0.125 + p.a**2), 0.0],
        [0.0, 0.0, 1.0],
    ])

    lag = p.c0 - p.c1 - p.c3
    cc = p.c1 * p.c2 + p.c3 * p.c4
    b_st = np.diag([p.d, p.d_t, 0.0])
    b_ae = np.array([
        [2 * pi * p.rho * p.b * p.V * lag,
         p.rho * p.b**2 * pi * p.V + 2 * pi * p.rho * p.b**2 * p.V * (0.5 - p.a) * lag,
         2 * pi * p.rho * p.V**2 * p.b * cc],
        [-2 * pi * p.rho * p.b**2 * p.V * (p.a + 0.5) * lag,
         p.rho * p.b**3 * pi * p.V * (0.5 - p.a)
         - 2 * p.rho * p.b**3 * p.V * pi * (0.5 - p.a) * (0.5 + p.a) * lag,
         -2 * pi * p.rho * p.b**2 * p.V**2 * (p.a + 0.5) * cc],
        [-1.0 / p.b, -(0.5 - p.a), (p.c2 + p.c4) * p.V / p.b],
    ])

    s_st = np.diag([p.s, p.s_t1, 0.0])
    s_ae = np.array([
        [0.0, 2 * pi * p.rho * p.b * p.V**2 * lag,
         2 * pi * p.rho * p.V**3 * p.c2 * p.c4 * (p.c1 + p.c3)],
        [0.0, -2 * pi * p.rho * p.b**2 * p.V**2 * (0.5 + p.a) * lag,
         -2 * pi * p.rho * p.b**2 * p.V**3 * (0.5 + p.a) * p.c2 * p.c4 * (p.c3 + p.c1)],
        [0.0, -p.V / p.b, p.c2 * p.c4 * p.V**2 / p.b**2],
    ])
    return m_st + m_ae, b_st + b_ae, s_st + s_ae


def assemble_quasisteady_matrices(p: FlutterParams):
    """Mass, damping and stiffness matrices of the 2 DoF reduction."""
    p.validate()
    pi = math.pi
    m_red = np.array([
        [p.m + p.rho * p.b**2 * pi, p.m_w * (p.b - p.x_f) - p.rho * p.b**3 * pi * p.a],
        [p.m_w * (p.b - p.x_f) - p.rho * p.b**3 * pi * p.a,
         p.I_A + p.rho * p.b**4 * pi * (0.125 + p.a**2)],
    ])
    b_red = np.array([
        [p.d + 2 * pi * p.rho * p.b * p.V, 2 * pi * p.rho * p.b**2 * p.V * (1.0 - p.a)],
        [-2 * pi * p.rho * p.b**2 * p.V * (p.a + 0.5),
         p.d_t - 2 * p.a * p.rho * p.b**3 * p.V * pi * (0.5 - p.a)],
    ])
    s_red = np.array([
        [p.s, 2 * pi * p.rho * p.b * p.V**2],
        [0.0, p.s_t1 - 2 * pi * p.rho * p.b**2 * p.V**2 * (0.5 + p.a)],
    ])
    return m_red, b_red, s_red


class _Assembled:
    """Precomputed mass-matrix solves for one parameter record."""

    __slots__ = ("M", "B", "S", "Minv", "MB", "MS", "minv_pitch", "noise", "force")

    def __init__(self, M, B, S, sigma):
        cond = np.linalg.cond(M)
        if not np.isfinite(cond) or cond > _COND_LIMIT:
            raise SingularMassMatrixError(f"mass matrix condition estimate {cond:.3g}")
        self.M, self.B, self.S = M, B, S
        self.Minv = np.linalg.inv(M)
        self.MB = self.Minv @ B
        self.MS = self.Minv @ S
        self.minv_pitch = self.Minv[:, 1].copy()
        k = M.shape[0]
        noise = np.zeros(2 * k)
        noise[k:] = -sigma * self.minv_pitch
        self.noise = noise
        force = np.zeros(2 * k)
        force[k:] = self.Minv[:, 0]
        self.force = force


@lru_cache(maxsize=512)
def _unsteady(p: FlutterParams) -> _Assembled:
    M, B, S = assemble_unsteady_matrices(p)
    return _Assembled(M, B, S, p.sigma)


@lru_cache(maxsize=512)
def _quasisteady(p: FlutterParams) -> _Assembled:
    M, B, S = assemble_quasisteady_matrices(p)
    return _Assembled(M, B, S, p.sigma)


def _pitch_moment(p: FlutterParams, alpha):
    return p.s_t2 * alpha * alpha + p.s_t3 * alpha**3


def _pitch_moment_slope(p: FlutterParams, alpha):
    return 2.0 * p.s_t2 * alpha + 3.0 * p.s_t3 * alpha * alpha


def _second_order_rhs(asm: _Assembled, p: FlutterParams, x):
    k = asm.M.shape[0]
    y, v = x[:k], x[k:]
    out = np.empty(2 * k)
    out[:k] = v
    out[k:] = -(asm.MB @ v + asm.MS @ y + asm.minv_pitch * _pitch_moment(p, x[1]))
    return out


def _second_order_jac(asm: _Assembled, p: FlutterParams, x):
    k = asm.M.shape[0]
    jac = np.zeros((2 * k, 2 * k))
    jac[:k, k:] = np.eye(k)
    jac[k:, :k] = -asm.MS
    jac[k:, 1] -= asm.minv_pitch * _pitch_moment_slope(p, x[1])
    jac[k:, k:] = -asm.MB
    return jac


def flutter_diffusion(p: FlutterParams, reduced: bool = False) -> np.ndarray:
    """Noise coefficient vector: a pitch moment of std ``sigma`` routed
    through the inverse mass matrix into the velocity rows."""
    asm = _quasisteady(p) if reduced else _unsteady(p)
    return asm.noise.copy()


def unsteady_model(p: FlutterParams) -> SystemModel:
    """The 2+1 DoF plant as a :class:`SystemModel` (6 states)."""
    asm = _unsteady(p)

    def rhs(x, t, params):
        return _second_order_rhs(_unsteady(params), params, x)

    def jac(x, t, params):
        return _second_order_jac(_unsteady(params), params, x)

    def diffusion(x, t, params):
        return _unsteady(params).noise

    return SystemModel(
        dimension=6, rhs=rhs, jac=jac, diffusion=diffusion, params=p,
        ports=MeasurementPorts(position_index=0, velocity_index=3,
                               force_channel=asm.force.copy()),
        name="flutter3",
    )


def quasisteady_model(p: FlutterParams) -> SystemModel:
    """The 2 DoF reduction as a :class:`SystemModel` (4 states)."""
    asm = _quasisteady(p)

    def rhs(x, t, params):
        return _second_order_rhs(_quasisteady(params), params, x)

    def jac(x, t, params):
        return _second_order_jac(_quasisteady(params), params, x)

    def diffusion(x, t, params):
        return _quasisteady(params).noise

    def force_response(params):
        g = np.zeros((4, 2))
        g[2:, :] = -_quasisteady(params).Minv
        return g

    return SystemModel(
        dimension=4, rhs=rhs, jac=jac, diffusion=diffusion, params=p,
        ports=MeasurementPorts(position_index=0, velocity_index=2,
                               force_channel=asm.force.copy()),
        force_response=force_response,
        batch_ops=_QuasisteadyBatch,
        name="flutter2",
    )


def unsteady_family(p: FlutterParams):
    """Airspeed-indexed family of the 2+1 DoF plant."""
    return lambda V: unsteady_model(p.at(V))


def quasisteady_family(p: FlutterParams):
    """Airspeed-indexed family of the 2 DoF reduction."""
    return lambda V: quasisteady_model(p.at(V))


class _QuasisteadyBatch:
    """Vectorized quasi-steady evaluation over per-trajectory parameters.

    Stacks the cached per-parameter matrices once so that a whole batch of
    states (one row per trajectory) is advanced with a handful of array
    operations; used by the simulation-loss training loop.
    """

    def __init__(self, params_list):
        asms = [_quasisteady(p) for p in params_list]
        self.MB = np.stack([a.MB for a in asms])          # (B, 2, 2)
        self.MS = np.stack([a.MS for a in asms])          # (B, 2, 2)
        self.minv_pitch = np.stack([a.minv_pitch for a in asms])  # (B, 2)
        self.s_t2 = np.array([p.s_t2 for p in params_list])
        self.s_t3 = np.array([p.s_t3 for p in params_list])
        self.dimension = 4

    def rhs(self, X, t):
        # X: (B, 4) -> (B, 4)
        y, v = X[:, :2], X[:, 2:]
        alpha = X[:, 1]
        nl = alpha * alpha * (self.s_t2 + self.s_t3 * alpha)
        out = np.empty_like(X)
        out[:, :2] = v
        out[:, 2:] = -(np.einsum("bij,bj->bi", self.MB, v)
                       + np.einsum("bij,bj->bi", self.MS, y)
                       + self.minv_pitch * nl[:, None])
        return out

    def jac(self, X, t):
        # (B, 4, 4) state Jacobians
        B = X.shape[0]
        alpha = X[:, 1]
        slope = alpha * (2.0 * self.s_t2 + 3.0 * self.s_t3 * alpha)
        jac = np.zeros((B, 4, 4))
        jac[:, 0, 2] = 1.0
        jac[:, 1, 3] = 1.0
        jac[:, 2:, :2] = -self.MS
        jac[:, 2:, 1] -= self.minv_pitch * slope[:, None]
        jac[:, 2:, 2:] = -self.MB
        return jac
