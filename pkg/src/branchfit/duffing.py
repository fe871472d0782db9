"""Base-excited oscillator with up to seventh-order stiffness.

State layout ``(x, y)`` with ``x`` the deformation and ``y`` its rate:

    x' = y
    y' = -b*y - alpha^2*x - c3*x^3 - c5*x^5 - c7*x^7 + A*cos(omega*t + phi0)

The forcing amplitude is expressed through the base-acceleration amplitude
``Phi`` as ``A = c_A * omega_n**2 * Phi``.  The forcing amplitude ``A`` is
the bifurcation parameter when tracing forced response curves.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dynamics import MeasurementPorts, SystemModel
from .errors import ConfigurationError


@dataclass(frozen=True)
class DuffingParams:
    b: float = 0.3             # viscous damping, 1/s
    alpha: float = 6.0         # natural frequency parameter, rad/s
    c3: float = 400.0          # cubic stiffness coefficient
    c5: float = 150.0          # quintic stiffness coefficient
    c7: float = 40.0           # seventh-order stiffness coefficient
    c_A: float = 1.0           # base-acceleration transfer coefficient
    omega_n: float = 6.0       # linear natural angular frequency, rad/s
    Phi: float = 0.05          # base-acceleration amplitude, m/s^2
    omega: float = 6.9         # forcing angular frequency, rad/s
    phi0: float = 0.0          # forcing phase, rad

    @property
    def forcing_amplitude(self) -> float:
        return self.c_A * self.omega_n**2 * self.Phi

    def validate(self):
        if self.forcing_amplitude > 0 and self.omega <= 0:
            raise ConfigurationError("forcing requires omega > 0")
        if self.forcing_amplitude < 0:
            raise ConfigurationError("forcing amplitude must be nonnegative")

    def at_forcing(self, A: float) -> "DuffingParams":
        """Copy with the forcing amplitude set to ``A`` (via ``Phi``)."""
        scale = self.c_A * self.omega_n**2
        if scale <= 0:
            raise ConfigurationError("c_A * omega_n^2 must be positive to set A")
        return replace(self, Phi=float(A) / scale)


def _restoring_force(p: DuffingParams, x):
    x2 = x * x
    return x * (p.alpha**2 + x2 * (p.c3 + x2 * (p.c5 + x2 * p.c7)))


def _restoring_slope(p: DuffingParams, x):
    x2 = x * x
    return p.alpha**2 + x2 * (3.0 * p.c3 + x2 * (5.0 * p.c5 + 7.0 * p.c7 * x2))


def duffing_rhs(x: np.ndarray, t: float, p: DuffingParams) -> np.ndarray:
    pos, vel = x[0], x[1]
    acc = -p.b * vel - _restoring_force(p, pos) \
        + p.forcing_amplitude * np.cos(p.omega * t + p.phi0)
    return np.array([vel, acc])


def duffing_model(p: DuffingParams) -> SystemModel:
    p.validate()

    def rhs(x, t, params):
        return duffing_rhs(x, t, params)

    def jac(x, t, params):
        return np.array([[0.0, 1.0],
                         [-_restoring_slope(params, x[0]), -params.b]])

    def force_response(params):
        return np.array([[0.0], [1.0]])

    return SystemModel(
        dimension=2, rhs=rhs, jac=jac, params=p,
        ports=MeasurementPorts(position_index=0, velocity_index=1,
                               force_channel=np.array([0.0, 1.0])),
        force_response=force_response,
        batch_ops=_DuffingBatch,
        name="duffing",
    )


def forcing_family(p: DuffingParams):
    """Forcing-amplitude-indexed family of the oscillator."""
    return lambda A: duffing_model(p.at_forcing(A))


class _DuffingBatch:
    """Vectorized evaluation over per-trajectory parameter records."""

    def __init__(self, params_list):
        self.b = np.array([p.b for p in params_list])
        self.alpha2 = np.array([p.alpha**2 for p in params_list])
        self.c3 = np.array([p.c3 for p in params_list])
        self.c5 = np.array([p.c5 for p in params_list])
        self.c7 = np.array([p.c7 for p in params_list])
        self.amp = np.array([p.forcing_amplitude for p in params_list])
        self.omega = np.array([p.omega for p in params_list])
        self.phi0 = np.array([p.phi0 for p in params_list])
        self.dimension = 2

    def rhs(self, X, t):
        # X: (B, 2), t: (B,) -> (B, 2)
        pos, vel = X[:, 0], X[:, 1]
        x2 = pos * pos
        restoring = pos * (self.alpha2 + x2 * (self.c3 + x2 * (self.c5 + x2 * self.c7)))
        acc = -self.b * vel - restoring + self.amp * np.cos(self.omega * t + self.phi0)
        return np.stack([vel, acc], axis=1)

    def jac(self, X, t):
        B = X.shape[0]
        x2 = X[:, 0] * X[:, 0]
        slope = self.alpha2 + x2 * (3.0 * self.c3 + x2 * (5.0 * self.c5 + 7.0 * self.c7 * x2))
        jac = np.zeros((B, 2, 2))
        jac[:, 0, 1] = 1.0
        jac[:, 1, 0] = -slope
        jac[:, 1, 1] = -self.b
        return jac
