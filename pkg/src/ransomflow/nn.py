"""Dense layers, losses, Adam, and finite-difference gradient checking.

Everything runs in float64. Weights use the (out_dim, in_dim) convention so a
forward pass is ``x @ w.T + b`` on row-major batches. Initialization is
Glorot-uniform with bound sqrt(6 / (fan_in + fan_out)) drawn from the seeded
stream in :mod:`ransomflow.rng`; biases start at zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import LabelOutOfRange, ShapeMismatch

ACTIVATIONS = ("linear", "relu", "sigmoid", "tanh", "softmax")


def softmax(z: np.ndarray) -> np.ndarray:
    """Row-wise stabilized softmax."""
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    expz = np.exp(shifted)
    return expz / expz.sum(axis=-1, keepdims=True)


def sigmoid(z: np.ndarray) -> np.ndarray:
    # Split by sign so exp never overflows.
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "linear":
        return z
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        return sigmoid(z)
    if name == "tanh":
        return np.tanh(z)
    if name == "softmax":
        return softmax(z)
    raise ValueError(f"unknown activation {name!r}")


@dataclass
class DenseLayer:
    """Fully connected layer: out = act(x @ weights.T + biases)."""

    weights: np.ndarray
    biases: np.ndarray
    activation: str = "linear"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ShapeMismatch(f"weights must be 2-d, got {self.weights.shape}")
        if self.biases.shape != (self.weights.shape[0],):
            raise ShapeMismatch(
                f"biases shape {self.biases.shape} does not match "
                f"{self.weights.shape[0]} output units"
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @classmethod
    def create(cls, in_dim: int, out_dim: int, activation: str = "linear",
               seed: int = 0) -> "DenseLayer":
        bound = np.sqrt(6.0 / (in_dim + out_dim))
        weights = rng.uniform_signed(seed, (out_dim, in_dim), bound)
        return cls(weights, np.zeros(out_dim), activation)

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def param_count(self) -> int:
        return self.weights.size + self.biases.size

    def params(self) -> list:
        return [self.weights, self.biases]


@dataclass
class BatchCache:
    """Values a backward pass needs from the matching forward pass."""

    inputs: np.ndarray
    pre_activation: np.ndarray
    output: np.ndarray


def dense_forward(layer: DenseLayer, x: np.ndarray):
    """Forward pass on a (m, in_dim) batch. Returns (output, cache)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeMismatch(f"expected 2-d batch, got shape {x.shape}")
    if x.shape[1] != layer.in_dim:
        raise ShapeMismatch(
            f"batch width {x.shape[1]} does not match layer input {layer.in_dim}"
        )
    z = x @ layer.weights.T + layer.biases
    out = _activate(layer.activation, z)
    return out, BatchCache(inputs=x, pre_activation=z, output=out)


def _grad_pre_activation(layer: DenseLayer, cache: BatchCache,
                         grad_output: np.ndarray) -> np.ndarray:
    """Chain grad wrt output through the activation to grad wrt z."""
    act = layer.activation
    if act == "linear":
        return grad_output
    if act == "relu":
        return grad_output * (cache.pre_activation > 0.0)
    if act == "sigmoid":
        a = cache.output
        return grad_output * a * (1.0 - a)
    if act == "tanh":
        a = cache.output
        return grad_output * (1.0 - a * a)
    if act == "softmax":
        p = cache.output
        inner = (grad_output * p).sum(axis=1, keepdims=True)
        return p * (grad_output - inner)
    raise ValueError(f"unknown activation {act!r}")


def dense_backward(layer: DenseLayer, cache: BatchCache, grad_output: np.ndarray):
    """Backprop through one layer.

    Returns (grad_input, grad_weights, grad_biases) for the batch the cache
    was built from. ``grad_output`` is the loss gradient wrt the layer output.
    """
    grad_output = np.asarray(grad_output, dtype=np.float64)
    if grad_output.shape != cache.output.shape:
        raise ShapeMismatch(
            f"grad shape {grad_output.shape} does not match output "
            f"{cache.output.shape}"
        )
    grad_z = _grad_pre_activation(layer, cache, grad_output)
    return _backward_from_pre_activation(layer, cache, grad_z)


def dense_backward_preact(layer: DenseLayer, cache: BatchCache,
                          grad_pre_activation: np.ndarray):
    """Backprop entry point for fused losses that differentiate wrt z directly.

    The softmax cross-entropy pairing produces (p - y) / n as the gradient at
    the pre-activation, so the softmax Jacobian must not be applied again.
    """
    grad_pre_activation = np.asarray(grad_pre_activation, dtype=np.float64)
    if grad_pre_activation.shape != cache.pre_activation.shape:
        raise ShapeMismatch(
            f"grad shape {grad_pre_activation.shape} does not match "
            f"pre-activation {cache.pre_activation.shape}"
        )
    return _backward_from_pre_activation(layer, cache, grad_pre_activation)


def _backward_from_pre_activation(layer, cache, grad_z):
    grad_weights = grad_z.T @ cache.inputs
    grad_biases = grad_z.sum(axis=0)
    grad_input = grad_z @ layer.weights
    return grad_input, grad_weights, grad_biases


# ---------------------------------------------------------------------------
# Losses


def mse_loss(predicted: np.ndarray, target: np.ndarray):
    """Batch-mean squared reconstruction error.

    loss = (1/m) * sum over the batch of the squared error of each row; the
    divisor is the row count m only, not the feature dimension.
    """
    predicted = np.asarray(predicted, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if predicted.shape != target.shape:
        raise ShapeMismatch(
            f"predicted {predicted.shape} vs target {target.shape}"
        )
    if predicted.ndim != 2 or predicted.shape[0] == 0:
        raise ShapeMismatch(f"expected non-empty 2-d batch, got {predicted.shape}")
    m = predicted.shape[0]
    diff = predicted - target
    loss = float((diff * diff).sum() / m)
    grad = (2.0 / m) * diff
    return loss, grad


def cross_entropy_loss(probs: np.ndarray, labels: np.ndarray):
    """Mean categorical cross-entropy over integer labels.

    Returns (loss, grad_logits) where grad_logits = (probs - onehot) / n is
    the gradient wrt the softmax pre-activations, ready to feed into
    :func:`dense_backward_preact`. Probabilities are clamped at 1e-12 inside
    the log only.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    if probs.ndim != 2 or probs.shape[0] == 0:
        raise ShapeMismatch(f"expected non-empty 2-d probabilities, got {probs.shape}")
    if labels.ndim != 1 or labels.shape[0] != probs.shape[0]:
        raise ShapeMismatch(
            f"labels shape {labels.shape} does not match batch {probs.shape[0]}"
        )
    if not np.issubdtype(labels.dtype, np.integer):
        cast = labels.astype(np.int64)
        if not np.array_equal(cast, labels):
            raise LabelOutOfRange(-1, probs.shape[1])
        labels = cast
    n, k = probs.shape
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        bad = int(labels[(labels < 0) | (labels >= k)][0])
        raise LabelOutOfRange(bad, k)
    row_sums = probs.sum(axis=1)
    if not np.allclose(row_sums, 1.0, atol=1e-6):
        raise ShapeMismatch("probability rows must sum to 1 within 1e-6")
    picked = probs[np.arange(n), labels]
    loss = float(-np.log(np.maximum(picked, 1e-12)).mean())
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    grad /= n
    return loss, grad


# ---------------------------------------------------------------------------
# Optimizer


class Adam:
    """Adam with bias correction; updates parameters in place."""

    def __init__(self, params, learning_rate: float = 0.001, beta1: float = 0.9,
                 beta2: float = 0.999, epsilon: float = 1e-8):
        if not 0.0 <= beta1 < 1.0 or not 0.0 <= beta2 < 1.0:
            raise ValueError("betas must lie in [0, 1)")
        if learning_rate <= 0.0:
            raise ValueError("learning rate must be positive")
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self.m = [np.zeros_like(np.asarray(p, dtype=np.float64)) for p in params]
        self.v = [np.zeros_like(np.asarray(p, dtype=np.float64)) for p in params]

    def step(self, params, grads) -> None:
        if len(params) != len(self.m) or len(grads) != len(self.m):
            raise ShapeMismatch(
                f"optimizer tracks {len(self.m)} tensors, got "
                f"{len(params)} params and {len(grads)} grads"
            )
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            g = np.asarray(g, dtype=np.float64)
            if g.shape != p.shape:
                raise ShapeMismatch(
                    f"grad shape {g.shape} does not match param {p.shape}"
                )
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / correction1
            v_hat = v / correction2
            p -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon)


# ---------------------------------------------------------------------------
# Introspection and verification


def param_count(dims) -> int:
    """Total weights + biases of a dense chain with the given layer widths."""
    dims = list(dims)
    if len(dims) < 2:
        raise ValueError("need at least an input and an output width")
    return sum(dims[i] * dims[i + 1] + dims[i + 1] for i in range(len(dims) - 1))


def grad_check(loss_fn, params, eps: float = 1e-5) -> float:
    """Worst relative error between analytic and central-difference gradients.

    ``loss_fn()`` evaluates the model at the current parameter values and
    returns (loss, grads) with grads aligned to ``params``. Each scalar entry
    is perturbed in place by +/- eps. The relative error for one entry is
    |a - n| / max(|a|, |n|, 1e-8).
    """
    _, analytic = loss_fn()
    worst = 0.0
    for p, g in zip(params, analytic):
        flat = p.reshape(-1)
        gflat = np.asarray(g, dtype=np.float64).reshape(-1)
        if flat.shape != gflat.shape:
            raise ShapeMismatch(
                f"grad shape {np.asarray(g).shape} does not match param {p.shape}"
            )
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + eps
            loss_plus = loss_fn()[0]
            flat[i] = saved - eps
            loss_minus = loss_fn()[0]
            flat[i] = saved
            numeric = (loss_plus - loss_minus) / (2.0 * eps)
            analytic_value = gflat[i]
            denom = max(abs(analytic_value), abs(numeric), 1e-8)
            worst = max(worst, abs(analytic_value - numeric) / denom)
    return worst


# ---------------------------------------------------------------------------
# Serialization


def layer_to_dict(layer: DenseLayer) -> dict:
    from .serialize import float_list

    return {
        "activation": layer.activation,
        "in_dim": layer.in_dim,
        "out_dim": layer.out_dim,
        "weights": float_list(layer.weights),
        "biases": float_list(layer.biases),
    }


def layer_from_dict(doc: dict) -> DenseLayer:
    layer = DenseLayer(
        np.asarray(doc["weights"], dtype=np.float64),
        np.asarray(doc["biases"], dtype=np.float64),
        doc["activation"],
    )
    if layer.in_dim != doc["in_dim"] or layer.out_dim != doc["out_dim"]:
        raise ShapeMismatch(
            f"stored dims ({doc['in_dim']}, {doc['out_dim']}) disagree with "
            f"matrix shape {layer.weights.shape}"
        )
    return layer
