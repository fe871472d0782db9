"""Feed-forward sigmoid networks with hand-rolled exact derivatives.

Hidden layers use the logistic sigmoid; the output layer is linear so the
network can produce unbounded force corrections.  Besides the forward pass
the module provides reverse-mode parameter gradients and, batched, full
Jacobians with respect to both the input and the flattened parameter
vector.  Those feed the simulation-sensitivity training loop.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import ConfigurationError, TrainingDivergedError


@dataclass
class NeuralNet:
    """Weights and biases of a fully connected network.

    ``layer_sizes = (N_0, ..., N_L)``; ``weights[k]`` has shape
    ``(N_{k+1}, N_k)``.  The flattened parameter vector concatenates each
    layer's weights (row major) followed by its biases.
    """

    layer_sizes: tuple
    weights: list = field(repr=False)
    biases: list = field(repr=False)

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_params(self) -> int:
        sizes = self.layer_sizes
        return int(sum(sizes[k + 1] * (sizes[k] + 1) for k in range(len(sizes) - 1)))

    def flatten_params(self) -> np.ndarray:
        parts = []
        for W, b in zip(self.weights, self.biases):
            parts.append(W.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def set_params(self, flat: np.ndarray):
        flat = np.asarray(flat, dtype=float)
        if flat.size != self.n_params:
            raise ConfigurationError(
                f"parameter vector has {flat.size} entries, expected {self.n_params}")
        pos = 0
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            nw = W.size
            self.weights[k] = flat[pos:pos + nw].reshape(W.shape).copy()
            pos += nw
            self.biases[k] = flat[pos:pos + b.size].copy()
            pos += b.size

    def copy(self) -> "NeuralNet":
        return NeuralNet(self.layer_sizes,
                         [W.copy() for W in self.weights],
                         [b.copy() for b in self.biases])


def init_net(layer_sizes, seed: int = 0, init_scale: float = 1.0) -> NeuralNet:
    """Seeded uniform(-init_scale, init_scale)/sqrt(fan_in) weights, zero biases."""
    sizes = tuple(int(n) for n in layer_sizes)
    if len(sizes) < 2 or min(sizes) < 1:
        raise ConfigurationError(f"need at least input and output layers, got {sizes}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for k in range(len(sizes) - 1):
        span = init_scale / np.sqrt(sizes[k])
        weights.append(rng.uniform(-span, span, size=(sizes[k + 1], sizes[k])))
        biases.append(np.zeros(sizes[k + 1]))
    return NeuralNet(sizes, weights, biases)


def _forward_cached(net: NeuralNet, Y0: np.ndarray):
    """Batched forward pass keeping activations and sigmoid slopes."""
    acts = [Y0]
    slopes = []
    a = Y0
    last = len(net.weights) - 1
    for k, (W, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ W.T + b
        if k < last:
            a = expit(z)
            slopes.append(a * (1.0 - a))
        else:
            a = z
            slopes.append(np.ones_like(z))
        acts.append(a)
    return acts, slopes


def nn_forward(net: NeuralNet, y0) -> np.ndarray:
    """Network output for a single input vector."""
    y0 = np.asarray(y0, dtype=float)
    if y0.shape != (net.n_inputs,):
        raise ConfigurationError(
            f"input has shape {y0.shape}, expected ({net.n_inputs},)")
    acts, _ = _forward_cached(net, y0[None, :])
    return acts[-1][0]


def nn_forward_batch(net: NeuralNet, Y0: np.ndarray) -> np.ndarray:
    Y0 = np.asarray(Y0, dtype=float)
    if Y0.ndim != 2 or Y0.shape[1] != net.n_inputs:
        raise ConfigurationError(
            f"batch has shape {Y0.shape}, expected (*, {net.n_inputs})")
    acts, _ = _forward_cached(net, Y0)
    return acts[-1]


def nn_param_gradient(net: NeuralNet, y0, upstream) -> np.ndarray:
    """Reverse-mode gradient of ``upstream . output`` over flat parameters."""
    y0 = np.asarray(y0, dtype=float)
    upstream = np.asarray(upstream, dtype=float)
    acts, slopes = _forward_cached(net, y0[None, :])
    delta = upstream[None, :] * slopes[-1]
    grads_w = [None] * len(net.weights)
    grads_b = [None] * len(net.weights)
    for k in range(len(net.weights) - 1, -1, -1):
        grads_w[k] = delta.T @ acts[k]
        grads_b[k] = delta[0]
        if k > 0:
            delta = (delta @ net.weights[k]) * slopes[k - 1]
    parts = []
    for gw, gb in zip(grads_w, grads_b):
        parts.append(gw.ravel())
        parts.append(gb)
    return np.concatenate(parts)


def nn_jacobians_batch(net: NeuralNet, Y0: np.ndarray, wrt_params: bool = True):
    """Output, input Jacobian and (optionally) parameter Jacobian, batched.

    Returns ``(out (B, No), d_out/d_in (B, No, Ni), d_out/d_params (B, No, P))``
    with the last entry ``None`` when ``wrt_params`` is false.
    """
    Y0 = np.asarray(Y0, dtype=float)
    acts, slopes = _forward_cached(net, Y0)
    B = Y0.shape[0]
    no = net.n_outputs
    nlayers = len(net.weights)
    # G[k] = d output / d z_k, shape (B, No, N_{k+1})
    G = np.broadcast_to(np.eye(no), (B, no, no)).copy()
    G *= slopes[-1][:, None, :]
    gs = [None] * nlayers
    gs[-1] = G
    for k in range(nlayers - 1, 0, -1):
        G = (G @ net.weights[k]) * slopes[k - 1][:, None, :]
        gs[k - 1] = G
    d_in = gs[0] @ net.weights[0]
    if not wrt_params:
        return acts[-1], d_in, None
    d_par = np.empty((B, no, net.n_params))
    pos = 0
    for k in range(nlayers):
        nw = net.weights[k].size
        # d out / d W_k = G_k outer a_{k-1}
        d_par[:, :, pos:pos + nw] = (
            gs[k][:, :, :, None] * acts[k][:, None, None, :]).reshape(B, no, nw)
        pos += nw
        nb = net.biases[k].size
        d_par[:, :, pos:pos + nb] = gs[k]
        pos += nb
    return acts[-1], d_in, d_par


@dataclass(frozen=True)
class TrainConfig:
    """Two-stage optimizer schedule: Adam first, plain gradient descent after."""

    adam_steps: int = 500
    adam_rate: float = 0.05
    gd_steps: int = 500
    gd_rate: float = 0.01
    seed: int = 0
    init_scale: float = 1.0

    def validate(self):
        if min(self.adam_steps, self.gd_steps) < 0:
            raise ConfigurationError("step counts must be nonnegative")
        if min(self.adam_rate, self.gd_rate) <= 0:
            raise ConfigurationError("learning rates must be positive")


@dataclass
class OptimResult:
    params: np.ndarray
    loss: float
    history: list


def adam_then_gd(objective_with_grad, p0, cfg: TrainConfig) -> OptimResult:
    """Minimize ``objective_with_grad(p) -> (loss, grad)``.

    Runs Adam (beta1=0.9, beta2=0.999, eps=1e-8) for ``adam_steps``, then
    plain gradient descent for ``gd_steps``.  Tracks and returns the best
    iterate seen; a non-finite loss aborts with the step index.
    """
    cfg.validate()
    p = np.array(p0, dtype=float)
    loss, grad = objective_with_grad(p)
    if not np.isfinite(loss):
        raise TrainingDivergedError(0, "objective not finite at the initial point")
    best_p, best_loss = p.copy(), float(loss)
    history = [float(loss)]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    m = np.zeros_like(p)
    v = np.zeros_like(p)
    step = 0
    for i in range(cfg.adam_steps):
        step += 1
        m = beta1 * m + (1.0 - beta1) * grad
        v = beta2 * v + (1.0 - beta2) * grad * grad
        mhat = m / (1.0 - beta1**step)
        vhat = v / (1.0 - beta2**step)
        p = p - cfg.adam_rate * mhat / (np.sqrt(vhat) + eps)
        loss, grad = objective_with_grad(p)
        if not np.isfinite(loss):
            raise TrainingDivergedError(step)
        history.append(float(loss))
        if loss < best_loss:
            best_loss, best_p = float(loss), p.copy()
    for _ in range(cfg.gd_steps):
        step += 1
        p = p - cfg.gd_rate * grad
        loss, grad = objective_with_grad(p)
        if not np.isfinite(loss):
            raise TrainingDivergedError(step)
        history.append(float(loss))
        if loss < best_loss:
            best_loss, best_p = float(loss), p.copy()
    return OptimResult(params=best_p, loss=best_loss, history=history)
