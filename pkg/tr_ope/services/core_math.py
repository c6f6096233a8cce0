"""
Dense numerical kernel: a small fully connected network with manual
backpropagation, plain SGD and spectral normalization of weight matrices.

Nets are immutable values. Every operation returns a new net, so a trained
net can be shared between threads without locking. All arithmetic is float64.
"""
import logging
import numbers
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..exceptions import RejectedInputError, TrainingFaultError
from ..utils import check_scalar

_logger = logging.getLogger(__name__)

ACTIVATIONS = ("relu", "identity")

# A dense matrix is a 2D float64 ndarray with finite entries.
DenseMatrix = np.ndarray
Gradients = List[Tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True, eq=False)
class Layer:
    """Affine map followed by an activation; weight has shape (out, in)."""

    weight: np.ndarray
    bias: np.ndarray
    activation: str = "identity"
    # persistent left singular vector estimate used by spectral normalization
    power_vector: Optional[np.ndarray] = None

    def __post_init__(self):
        weight = np.asarray(self.weight, dtype=np.float64)
        bias = np.asarray(self.bias, dtype=np.float64)
        if weight.ndim != 2 or bias.shape != (weight.shape[0],):
            raise RejectedInputError(
                f"layer weight {weight.shape} and bias {bias.shape} do not match"
            )
        if self.activation not in ACTIVATIONS:
            raise RejectedInputError(f"unknown activation {self.activation!r}")
        if not (np.all(np.isfinite(weight)) and np.all(np.isfinite(bias))):
            raise RejectedInputError("layer parameters must be finite")
        object.__setattr__(self, "weight", weight)
        object.__setattr__(self, "bias", bias)

    @property
    def input_dim(self):
        return self.weight.shape[1]

    @property
    def output_dim(self):
        return self.weight.shape[0]


@dataclass(frozen=True, eq=False)
class FeedForwardNet:
    layers: Tuple[Layer, ...]

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise RejectedInputError("a net needs at least one layer")
        for previous, current in zip(layers, layers[1:]):
            if previous.output_dim != current.input_dim:
                raise RejectedInputError(
                    f"layer dimensions do not chain: {previous.output_dim} -> {current.input_dim}"
                )
        if layers[-1].activation != "identity":
            raise RejectedInputError("the final layer must use the identity activation")
        object.__setattr__(self, "layers", layers)

    @property
    def input_dim(self):
        return self.layers[0].input_dim

    @property
    def output_dim(self):
        return self.layers[-1].output_dim


@dataclass(frozen=True)
class NetShape:
    """Depth and width of every net the package trains (4 x 64 by default)."""

    n_layers: int = 4
    hidden_width: int = 64

    def __post_init__(self):
        check_scalar(self.n_layers, "n_layers", numbers.Integral, min_val=1)
        check_scalar(self.hidden_width, "hidden_width", numbers.Integral, min_val=1)

    def layer_sizes(self, input_dim, output_dim):
        return [input_dim] + [self.hidden_width] * (self.n_layers - 1) + [output_dim]


@dataclass(frozen=True)
class SgdConfig:
    """
    Plain minibatch SGD settings.

    epochs=0 is allowed and means "return the initialized model".
    """

    learning_rate: float = 1e-4
    epochs: int = 20
    batch_size: int = 1
    seed: int = 0
    spectral_norm: bool = field(default=True)

    def __post_init__(self):
        check_scalar(self.learning_rate, "learning_rate", numbers.Real, min_val=0.0,
                     include_boundaries="neither")
        check_scalar(self.epochs, "epochs", numbers.Integral, min_val=0)
        check_scalar(self.batch_size, "batch_size", numbers.Integral, min_val=1)
        check_scalar(self.seed, "seed", numbers.Integral, min_val=0)


def init_net(layer_sizes: Sequence[int], seed=0) -> FeedForwardNet:
    """
    Relu hidden layers, identity output, weights uniform in +-1/sqrt(fan_in).
    """
    if len(layer_sizes) < 2:
        raise RejectedInputError("layer_sizes needs an input and an output size")
    rng = np.random.default_rng(seed)
    layers = []
    n_layers = len(layer_sizes) - 1
    for index, (fan_in, fan_out) in enumerate(zip(layer_sizes, layer_sizes[1:])):
        bound = 1.0 / np.sqrt(fan_in)
        layers.append(Layer(
            weight=rng.uniform(-bound, bound, size=(fan_out, fan_in)),
            bias=rng.uniform(-bound, bound, size=fan_out),
            activation="identity" if index == n_layers - 1 else "relu",
        ))
    return FeedForwardNet(tuple(layers))


def _as_batch(net, inputs):
    inputs = np.asarray(inputs, dtype=np.float64)
    single = inputs.ndim == 1
    batch = inputs[None, :] if single else inputs
    if batch.ndim != 2 or batch.shape[1] != net.input_dim:
        raise RejectedInputError(
            f"input of shape {inputs.shape} does not match net input dimension {net.input_dim}"
        )
    return batch, single


def _forward_cache(net, batch):
    activations = [batch]
    pre_activations = []
    for layer in net.layers:
        z = activations[-1] @ layer.weight.T + layer.bias
        pre_activations.append(z)
        activations.append(np.maximum(z, 0.0) if layer.activation == "relu" else z)
    return pre_activations, activations


def forward(net: FeedForwardNet, inputs) -> np.ndarray:
    """Evaluate the net on one input vector or a (n, input_dim) batch."""
    batch, single = _as_batch(net, inputs)
    _, activations = _forward_cache(net, batch)
    return activations[-1][0] if single else activations[-1]


def backward(net: FeedForwardNet, inputs, output_gradient) -> Tuple[Gradients, np.ndarray]:
    """
    Chain rule through the net.

    For a batch the parameter gradients are summed over rows; the input
    gradient keeps one row per input.
    Returns ([(dW, db) per layer], d_input).
    """
    batch, single = _as_batch(net, inputs)
    grad = np.asarray(output_gradient, dtype=np.float64)
    grad = grad[None, :] if grad.ndim == 1 else grad
    if grad.shape != (batch.shape[0], net.output_dim):
        raise RejectedInputError(
            f"output gradient of shape {np.shape(output_gradient)} does not match "
            f"net output dimension {net.output_dim}"
        )
    pre_activations, activations = _forward_cache(net, batch)
    gradients = [None] * len(net.layers)
    for index in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[index]
        if layer.activation == "relu":
            grad = grad * (pre_activations[index] > 0.0)
        gradients[index] = (grad.T @ activations[index], grad.sum(axis=0))
        grad = grad @ layer.weight
    return gradients, (grad[0] if single else grad)


def sgd_step(net: FeedForwardNet, gradients: Gradients, config: SgdConfig) -> FeedForwardNet:
    """p <- p - lr * grad(p) for every weight and bias."""
    if len(gradients) != len(net.layers):
        raise RejectedInputError("one (weight, bias) gradient pair per layer is required")
    layers = []
    for layer, (grad_w, grad_b) in zip(net.layers, gradients):
        if np.shape(grad_w) != layer.weight.shape or np.shape(grad_b) != layer.bias.shape:
            raise RejectedInputError("gradient shapes do not match the net")
        if not (np.all(np.isfinite(grad_w)) and np.all(np.isfinite(grad_b))):
            raise TrainingFaultError("non-finite gradient")
        weight = layer.weight - config.learning_rate * grad_w
        bias = layer.bias - config.learning_rate * grad_b
        if not (np.all(np.isfinite(weight)) and np.all(np.isfinite(bias))):
            raise TrainingFaultError("parameters overflowed")
        layers.append(Layer(
            weight=weight,
            bias=bias,
            activation=layer.activation,
            power_vector=layer.power_vector,
        ))
    return FeedForwardNet(tuple(layers))


def _start_vector(size):
    return np.random.default_rng(0).standard_normal(size)


def power_iteration(weights: DenseMatrix, power_iterations: int, u=None):
    """
    Estimate the largest singular value of `weights`.

    Returns (sigma, u, v); sigma is 0.0 for a zero matrix.
    """
    check_scalar(power_iterations, "power_iterations", numbers.Integral, min_val=1)
    weights = np.asarray(weights, dtype=np.float64)
    if u is None or not np.any(u):
        u = _start_vector(weights.shape[0])
    u = u / np.linalg.norm(u)
    v = np.zeros(weights.shape[1])
    for _ in range(power_iterations):
        v = weights.T @ u
        v_norm = np.linalg.norm(v)
        if v_norm == 0.0:
            return 0.0, u, v
        v = v / v_norm
        u = weights @ v
        u_norm = np.linalg.norm(u)
        if u_norm == 0.0:
            return 0.0, _start_vector(weights.shape[0]), v
        u = u / u_norm
    return float(u @ weights @ v), u, v


def spectral_normalize(weights: DenseMatrix, power_iterations: int = 30, u=None) -> DenseMatrix:
    """
    weights / sigma_hat with sigma_hat the power-iteration spectral norm.

    A zero matrix is returned unchanged.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim != 2:
        raise RejectedInputError("spectral_normalize expects a 2D matrix")
    sigma, _, _ = power_iteration(weights, power_iterations, u)
    if sigma <= 0.0:
        _logger.warning("Spectral normalization skipped for a zero matrix of shape %s", weights.shape)
        return weights.copy()
    return weights / sigma


def spectral_normalize_net(net: FeedForwardNet, power_iterations: int = 1) -> FeedForwardNet:
    """Normalize every weight matrix, reusing and refreshing each layer's power vector."""
    layers = []
    for layer in net.layers:
        sigma, u, _ = power_iteration(layer.weight, power_iterations, layer.power_vector)
        weight = layer.weight / sigma if sigma > 0.0 else layer.weight
        layers.append(Layer(weight=weight, bias=layer.bias, activation=layer.activation,
                            power_vector=u))
    return FeedForwardNet(tuple(layers))


def iterate_minibatches(n_rows, batch_size, rng):
    """Yield index arrays covering a fresh permutation of range(n_rows)."""
    order = rng.permutation(n_rows)
    for start in range(0, n_rows, batch_size):
        yield order[start:start + batch_size]


def train_step(net, inputs, output_gradient, config):
    """Backprop, SGD step and (optionally) spectral normalization in one call."""
    gradients, _ = backward(net, inputs, output_gradient)
    net = sgd_step(net, gradients, config)
    if config.spectral_norm:
        net = spectral_normalize_net(net)
    return net
