"""Minimal dense-network engine: layers, exact reverse-mode gradients, Adam.

Conventions
-----------
* All arithmetic is float64.
* A weight matrix is (out_dim, in_dim); inputs are row vectors, a batch is
  an (n, in_dim) array.
* ``backward`` returns gradients of the scalar loss whose output-gradient
  is ``grad_output``; over a batch the per-row contributions are summed, so
  mini-batch means are obtained by scaling ``grad_output`` by 1/n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ShapeError, TrainingError

RELU = "relu"
IDENTITY = "identity"
_ACTIVATIONS = (RELU, IDENTITY)


@dataclass
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = RELU

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2:
            raise ShapeError(f"layer weight must be 2-D, got {self.weight.shape}")
        if self.bias.shape != (self.weight.shape[0],):
            raise ShapeError(
                f"bias shape {self.bias.shape} does not match weight rows "
                f"{self.weight.shape[0]}"
            )
        if self.activation not in _ACTIVATIONS:
            raise ShapeError(f"unknown activation {self.activation!r}")


@dataclass
class DenseNet:
    layers: list[Layer]

    def __post_init__(self):
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if nxt.weight.shape[1] != prev.weight.shape[0]:
                raise ShapeError(
                    f"layer dims do not chain: {prev.weight.shape} -> {nxt.weight.shape}"
                )

    @property
    def in_dim(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].weight.shape[0]

    def parameters(self) -> list[np.ndarray]:
        """Flat parameter list [W0, b0, W1, b1, ...]; arrays are live views."""
        out: list[np.ndarray] = []
        for layer in self.layers:
            out.append(layer.weight)
            out.append(layer.bias)
        return out


def glorot_init(
    dims: list[int], rng: np.random.Generator, hidden_activation: str = RELU
) -> DenseNet:
    """Build a net with uniform(+-sqrt(6/(fan_in+fan_out))) weights.

    Hidden layers use ``hidden_activation``; the last layer is linear.
    """
    if len(dims) < 2:
        raise ShapeError("need at least input and output dims")
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(dims, dims[1:])):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        # tiny random bias keeps ReLU preactivations off the exact kink
        b = rng.uniform(-1e-2, 1e-2, size=fan_out)
        act = hidden_activation if i < len(dims) - 2 else IDENTITY
        layers.append(Layer(w, b, act))
    return DenseNet(layers)


def forward(net: DenseNet, x: np.ndarray) -> tuple[np.ndarray, list]:
    """Run the net; returns (output, cache) with cache usable by backward."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    a = x[None, :] if single else x
    if a.shape[1] != net.in_dim:
        raise ShapeError(f"input width {a.shape[1]} != net input {net.in_dim}")
    cache = []
    for layer in net.layers:
        z = a @ layer.weight.T + layer.bias
        cache.append((a, z))
        a = np.maximum(z, 0.0) if layer.activation == RELU else z
    return (a[0] if single else a), cache


def backward(
    net: DenseNet, cache: list, grad_output: np.ndarray
) -> tuple[list[np.ndarray], np.ndarray]:
    """Exact gradients for the forward pass recorded in ``cache``.

    Returns (param_grads aligned with net.parameters(), grad_input).
    """
    if len(cache) != len(net.layers):
        raise ShapeError("cache does not match net depth")
    g = np.asarray(grad_output, dtype=np.float64)
    single = g.ndim == 1
    g = g[None, :] if single else g
    if g.shape != (cache[-1][1].shape[0], net.out_dim):
        raise ShapeError(f"grad_output shape {g.shape} does not match forward pass")
    param_grads: list[np.ndarray] = [np.empty(0)] * (2 * len(net.layers))
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        x_in, z = cache[i]
        if layer.activation == RELU:
            g = g * (z > 0.0)
        param_grads[2 * i] = g.T @ x_in
        param_grads[2 * i + 1] = g.sum(axis=0)
        g = g @ layer.weight
    return param_grads, (g[0] if single else g)


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: list[np.ndarray], lr: float = 1e-3) -> "AdamState":
        return cls(
            lr=lr,
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
        )


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState) -> None:
    """One in-place Adam update with bias correction."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError("params/grads/state lengths differ")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for k, (p, g) in enumerate(zip(params, grads)):
        if g.shape != p.shape:
            raise ShapeError(f"grad shape {g.shape} != param shape {p.shape} at index {k}")
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for parameter {k} (shape {p.shape})")
        state.m[k] = b1 * state.m[k] + (1 - b1) * g
        state.v[k] = b2 * state.v[k] + (1 - b2) * g * g
        m_hat = state.m[k] / bc1
        v_hat = state.v[k] / bc2
        p -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


# ---------------------------------------------------------------------------
# Distribution helpers
# ---------------------------------------------------------------------------

_LOG_2PI = math.log(2.0 * math.pi)


def gaussian_log_pdf(x, mu, sigma):
    """log N(x; mu, sigma^2), elementwise. sigma must be > 0."""
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma <= 0.0):
        raise DomainError("sigma must be positive")
    z = (np.asarray(x, dtype=np.float64) - mu) / sigma
    return -0.5 * z * z - np.log(sigma) - 0.5 * _LOG_2PI


def log_softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise log softmax with max subtraction."""
    logits = np.asarray(logits, dtype=np.float64)
    m = logits.max(axis=-1, keepdims=True)
    shifted = logits - m
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def categorical_log_pmf(j, logits: np.ndarray):
    """log softmax(logits)[j]; j may be an int or an index array per row."""
    logits = np.asarray(logits, dtype=np.float64)
    ls = log_softmax(logits)
    if logits.ndim == 1:
        if not 0 <= int(j) < logits.shape[0]:
            raise DomainError(f"class index {j} out of range {logits.shape[0]}")
        return ls[int(j)]
    return ls[np.arange(ls.shape[0]), np.asarray(j, dtype=int)]


def kl_to_standard_normal(mu: np.ndarray, logvar: np.ndarray):
    """KL(N(mu, e^logvar) || N(0, I)) = 0.5 * sum(mu^2 + e^lv - 1 - lv).

    Summed over the last axis; batched inputs give one value per row.
    """
    mu = np.asarray(mu, dtype=np.float64)
    logvar = np.asarray(logvar, dtype=np.float64)
    return 0.5 * np.sum(mu * mu + np.exp(logvar) - 1.0 - logvar, axis=-1)


def softplus(x):
    x = np.asarray(x, dtype=np.float64)
    return np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)


SIGMA_FLOOR = 1e-3


def sigma_from_raw(raw):
    """Standard-deviation head: softplus(raw) + floor, never degenerate."""
    return softplus(raw) + SIGMA_FLOOR


# ---------------------------------------------------------------------------
# Finite-difference oracle
# ---------------------------------------------------------------------------


def numerical_gradient(loss_fn, params: list[np.ndarray], step: float = 1e-5):
    """Central finite differences of ``loss_fn()`` w.r.t. each array in params.

    Mutates entries in place and restores them; loss_fn must read the same
    live arrays.
    """
    grads = []
    for p in params:
        g = np.zeros_like(p)
        flat_p = p.reshape(-1)
        flat_g = g.reshape(-1)
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + step
            hi = loss_fn()
            flat_p[i] = orig - step
            lo = loss_fn()
            flat_p[i] = orig
            flat_g[i] = (hi - lo) / (2.0 * step)
        grads.append(g)
    return grads


def max_gradient_error(analytic: list[np.ndarray], numeric: list[np.ndarray]) -> float:
    """max over parameters of |a - n| / max(1, |n|)."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(1.0, np.abs(n))
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def net_to_dict(net: DenseNet) -> dict:
    return {
        "layers": [
            {
                "weight": layer.weight.tolist(),
                "bias": layer.bias.tolist(),
                "activation": layer.activation,
            }
            for layer in net.layers
        ]
    }


def net_from_dict(d: dict) -> DenseNet:
    return DenseNet(
        [
            Layer(
                np.asarray(item["weight"], dtype=np.float64),
                np.asarray(item["bias"], dtype=np.float64),
                item["activation"],
            )
            for item in d["layers"]
        ]
    )
