"""Dense feed-forward networks with hand-derived backward passes.

Every learned component (feature extractor, invariant and specific heads,
classifier, statistic networks, policy generator) is an ``MlpNetwork``:
tanh hidden layers and one of three output activations. Matrices are plain
float64 numpy arrays with rows as samples.
"""
import logging
from dataclasses import dataclass
from typing import List

import numpy as np

from utils.errors import ConfigurationError, DimensionError, NumericalError
from utils.seeding import make_rng

logger = logging.getLogger('core.numerics')

ACTIVATIONS = ('identity', 'sigmoid', 'softmax')
ASCENT = 'ascent'
DESCENT = 'descent'


def as_matrix(values, name='input'):
    """Coerce ``values`` to a 2-D float64 array (a vector becomes one row)."""
    matrix = np.asarray(values, dtype=np.float64)
    if matrix.ndim == 1:
        matrix = matrix.reshape(1, -1)
    if matrix.ndim != 2:
        raise DimensionError(f"{name} must be a matrix, got {matrix.ndim} dimensions")
    return matrix


def sigmoid(z):
    """Logistic function without overflow for large negative inputs."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    positive = z >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-z[positive]))
    exp_z = np.exp(z[~positive])
    out[~positive] = exp_z / (1.0 + exp_z)
    return out


def softmax(z):
    """Row-wise softmax with max subtraction."""
    shifted = z - z.max(axis=1, keepdims=True)
    exp_z = np.exp(shifted)
    return exp_z / exp_z.sum(axis=1, keepdims=True)


def _output_activation(z, activation):
    if activation == 'sigmoid':
        return sigmoid(z)
    if activation == 'softmax':
        return softmax(z)
    return z


@dataclass
class MlpNetwork:
    """Fully connected network; ``weights[l]`` has shape (fan_in, fan_out)."""

    weights: List[np.ndarray]
    biases: List[np.ndarray]
    output_activation: str = 'identity'

    def __post_init__(self):
        if self.output_activation not in ACTIVATIONS:
            raise ConfigurationError(
                f"Unknown output activation '{self.output_activation}', expected one of {ACTIVATIONS}")
        if not self.weights or len(self.weights) != len(self.biases):
            raise DimensionError("Network needs one bias vector per weight matrix")
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64).reshape(-1) for b in self.biases]
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape[0] != w.shape[1]:
                raise DimensionError(f"Layer {layer}: weight {w.shape} and bias {b.shape} disagree")
            if layer > 0 and self.weights[layer - 1].shape[1] != w.shape[0]:
                raise DimensionError(
                    f"Layer {layer}: expects {w.shape[0]} inputs, previous layer emits "
                    f"{self.weights[layer - 1].shape[1]}")

    @property
    def layer_dims(self):
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def input_dim(self):
        return self.weights[0].shape[0]

    @property
    def output_dim(self):
        return self.weights[-1].shape[1]

    @property
    def n_params(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self):
        return MlpNetwork([w.copy() for w in self.weights],
                          [b.copy() for b in self.biases],
                          self.output_activation)

    def predict(self, x):
        """Output of the last layer for input rows ``x``."""
        return forward(self, x)[-1]


@dataclass
class GradientSet:
    """Per-parameter gradients mirroring an ``MlpNetwork``."""

    weights: List[np.ndarray]
    biases: List[np.ndarray]

    @classmethod
    def zeros_like(cls, net):
        return cls([np.zeros_like(w) for w in net.weights],
                   [np.zeros_like(b) for b in net.biases])

    def __add__(self, other):
        if len(self.weights) != len(other.weights):
            raise DimensionError("Cannot add gradient sets of different depth")
        return GradientSet([a + b for a, b in zip(self.weights, other.weights)],
                           [a + b for a, b in zip(self.biases, other.biases)])

    def scaled(self, factor):
        return GradientSet([factor * w for w in self.weights],
                           [factor * b for b in self.biases])

    def max_abs(self):
        return max(max(float(np.max(np.abs(w))) if w.size else 0.0,
                       float(np.max(np.abs(b))) if b.size else 0.0)
                   for w, b in zip(self.weights, self.biases))

    def norm(self):
        return float(np.sqrt(sum(np.sum(w * w) + np.sum(b * b)
                                 for w, b in zip(self.weights, self.biases))))

    def check_congruent(self, net):
        if len(self.weights) != len(net.weights):
            raise DimensionError(
                f"Gradient set has {len(self.weights)} layers, network has {len(net.weights)}")
        for layer, (gw, gb, w, b) in enumerate(zip(self.weights, self.biases, net.weights, net.biases)):
            if gw.shape != w.shape or gb.shape != b.shape:
                raise DimensionError(f"Layer {layer}: gradient shape does not match parameters")


def xavier_init(layer_dims, seed, output_activation='identity'):
    """Create a network with Xavier-uniform weights and zero biases.

    Args:
        layer_dims: Layer sizes, input first
        seed: Integer seed; identical seeds give identical parameters
        output_activation: 'identity', 'sigmoid' or 'softmax'

    Returns:
        MlpNetwork
    """
    if not layer_dims:
        raise ConfigurationError("layer_dims must not be empty")
    dims = [int(d) for d in layer_dims]
    if len(dims) < 2:
        raise ConfigurationError(f"Need input and output dims, got {dims}")
    if any(d < 1 for d in dims):
        raise ConfigurationError(f"All layer dims must be >= 1, got {dims}")

    rng = make_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpNetwork(weights, biases, output_activation)


def forward(net, x):
    """Run the network and keep every layer output.

    Returns:
        list: [input, hidden_1, ..., output]
    """
    x = as_matrix(x)
    if x.shape[1] != net.input_dim:
        raise DimensionError(f"Input has {x.shape[1]} columns, network expects {net.input_dim}")

    activations = [x]
    last = len(net.weights) - 1
    for layer, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = activations[-1] @ w + b
        if layer < last:
            activations.append(np.tanh(z))
        else:
            activations.append(_output_activation(z, net.output_activation))
    return activations


def backward(net, activations, output_grad):
    """Back-propagate a gradient on the network output.

    Args:
        net: Network that produced ``activations``
        activations: Result of ``forward(net, x)``
        output_grad: d loss / d output, same shape as the output

    Returns:
        tuple: (GradientSet, d loss / d input)
    """
    if len(activations) != len(net.weights) + 1:
        raise DimensionError("Activations were not produced by this network")
    out = activations[-1]
    grad = as_matrix(output_grad, 'output_grad')
    if grad.shape != out.shape:
        raise DimensionError(f"Output gradient {grad.shape} does not match output {out.shape}")

    if net.output_activation == 'sigmoid':
        grad = grad * out * (1.0 - out)
    elif net.output_activation == 'softmax':
        grad = out * (grad - np.sum(grad * out, axis=1, keepdims=True))

    n_layers = len(net.weights)
    weight_grads = [None] * n_layers
    bias_grads = [None] * n_layers
    for layer in reversed(range(n_layers)):
        weight_grads[layer] = activations[layer].T @ grad
        bias_grads[layer] = grad.sum(axis=0)
        grad = grad @ net.weights[layer].T
        if layer > 0:
            # tanh'(z) = 1 - tanh(z)^2
            grad = grad * (1.0 - activations[layer] ** 2)
    return GradientSet(weight_grads, bias_grads), grad


def apply_update(net, grads, rate, direction):
    """Plain gradient step: theta <- theta +/- rate * grad.

    Returns a new network; ``net`` is left untouched.
    """
    if direction not in (ASCENT, DESCENT):
        raise ConfigurationError(f"direction must be '{ASCENT}' or '{DESCENT}', got '{direction}'")
    grads.check_congruent(net)
    step = float(rate) if direction == ASCENT else -float(rate)

    weights, biases = [], []
    for layer, (w, b, gw, gb) in enumerate(zip(net.weights, net.biases, grads.weights, grads.biases)):
        if not (np.all(np.isfinite(gw)) and np.all(np.isfinite(gb))):
            raise NumericalError(f"Non-finite gradient in layer {layer}", layer=layer)
        new_w = w + step * gw
        new_b = b + step * gb
        if not (np.all(np.isfinite(new_w)) and np.all(np.isfinite(new_b))):
            raise NumericalError(f"Update produced non-finite parameters in layer {layer}", layer=layer)
        weights.append(new_w)
        biases.append(new_b)
    return MlpNetwork(weights, biases, net.output_activation)


def finite_diff_check(loss_fn, net, analytic, h=1e-5):
    """Compare analytic gradients with central differences.

    Args:
        loss_fn: Deterministic function MlpNetwork -> float
        net: Point at which the gradient is taken
        analytic: GradientSet claimed for ``loss_fn`` at ``net``
        h: Finite-difference step

    Returns:
        float: max over parameters of |analytic - numeric| / max(1, |numeric|)
    """
    if h <= 0:
        raise ConfigurationError(f"Finite-difference step must be positive, got {h}")
    analytic.check_congruent(net)

    perturbed = net.copy()
    worst = 0.0
    for layer in range(len(perturbed.weights)):
        for params, grads in ((perturbed.weights[layer], analytic.weights[layer]),
                              (perturbed.biases[layer], analytic.biases[layer])):
            for idx in np.ndindex(params.shape):
                original = params[idx]
                params[idx] = original + h
                loss_plus = float(loss_fn(perturbed))
                params[idx] = original - h
                loss_minus = float(loss_fn(perturbed))
                params[idx] = original

                numeric = (loss_plus - loss_minus) / (2.0 * h)
                error = abs(float(grads[idx]) - numeric) / max(1.0, abs(numeric))
                worst = max(worst, error)
    return worst
