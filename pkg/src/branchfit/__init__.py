"""Limit-cycle branch tracing and hybrid mechanistic/machine-learnt models.

The package simulates nonlinear plants (an aeroelastic section and a
stiffening oscillator), traces their stable and unstable limit cycles with
control-based continuation, trains hybrid models that add a neural network
or Gaussian process correction to a mechanistic core, and quantifies how
much the hybrid improves the predicted bifurcation diagram.
"""

__version__ = "0.1.0"

from .dynamics import (
    HopfPoint,
    LinearizationResult,
    MeasurementPorts,
    SystemModel,
    Trajectory,
    find_hopf,
    integrate_ode,
    integrate_sde,
    linearize,
    rk4_step,
    sde_ensemble_final,
)
from .duffing import DuffingParams, duffing_model, forcing_family
from .flutter import (
    FlutterParams,
    assemble_quasisteady_matrices,
    assemble_unsteady_matrices,
    flutter_diffusion,
    quasisteady_family,
    quasisteady_model,
    unsteady_family,
    unsteady_model,
)
from .gaussian import GaussianProcess, gp_fit, gp_kernel, gp_predict
from .neural import (
    NeuralNet,
    TrainConfig,
    adam_then_gd,
    init_net,
    nn_forward,
    nn_param_gradient,
)
