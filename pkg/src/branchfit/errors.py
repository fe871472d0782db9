"""Exception types shared across the package."""

import numpy as np


class BranchfitError(Exception):
    """Base class for every failure raised by this package."""


class ConfigurationError(BranchfitError):
    """Invalid user input: malformed config, bad arguments, missing pieces."""


class IntegrationDivergedError(BranchfitError):
    """A trajectory left the finite / bounded region during integration."""

    def __init__(self, t, state):
        self.t = float(t)
        self.state = np.asarray(state)
        peak = float(np.max(np.abs(self.state[np.isfinite(self.state)]))) \
            if np.any(np.isfinite(self.state)) else float("nan")
        super().__init__(f"integration diverged at t={self.t:.6g} (largest finite |x| = {peak:.3g})")


class NotAnEquilibriumError(BranchfitError):
    """Linearization requested at a point where the vector field is not zero."""

    def __init__(self, residual, tol):
        self.residual = float(residual)
        super().__init__(f"point is not an equilibrium: |rhs| = {residual:.3g} exceeds {tol:.3g}")


class NoSignChangeError(BranchfitError):
    """A bisection bracket does not actually bracket a sign change."""


class SingularMassMatrixError(BranchfitError):
    """The assembled mass matrix is numerically singular."""


class UndefinedPhaseError(BranchfitError):
    """Instantaneous phase requested at the origin of the (h, h_dot) plane."""


class NotSettledError(BranchfitError):
    """Controlled run did not reach a steady oscillation within tolerance."""


class NoBracketError(BranchfitError):
    """Target amplitude is not bracketed by the responses over the mesh."""


class SurrogateRootError(BranchfitError):
    """Polynomial surrogate has no usable root inside the mesh interval."""


class NewtonConvergenceError(BranchfitError):
    """Newton iteration for a periodic orbit failed to converge."""


class ConvergedToEquilibriumError(BranchfitError):
    """Periodic-orbit solver collapsed onto an equilibrium point."""


class TrainingDivergedError(BranchfitError):
    """Optimizer hit a non-finite objective value."""

    def __init__(self, step, message=""):
        self.step = int(step)
        super().__init__(message or f"training objective became non-finite at step {step}")


class IllConditionedKernelError(BranchfitError):
    """Kernel matrix stayed non-positive-definite even at maximum jitter."""


class NotHurwitzError(BranchfitError):
    """Stationary covariance requested for an unstable linearization."""


class NoCrossingError(BranchfitError):
    """Two curves that were expected to intersect do not, in range."""


class InsufficientDataError(BranchfitError):
    """A record is too short for the requested analysis."""


class NoOverlapError(BranchfitError):
    """Two branches share no parameter range to compare over."""
