"""Dense-network numerics in plain NumPy.

A three-layer perceptron (tanh, tanh, identity) with an explicit reverse
pass, orthogonal initialization, Adam, and the diagonal Gaussian policy
built on top of the perceptron.

Weights are stored ``(fan_in, fan_out)`` so a batch ``x`` of shape
``(n, fan_in)`` maps through ``x @ W + b``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

HIDDEN = 256
LOG_2PI = math.log(2.0 * math.pi)


class ShapeError(ValueError):
    """Raised when array shapes do not line up."""


class NonFiniteError(FloatingPointError):
    """Raised when a NaN or inf reaches a place that must stay finite."""


@dataclass
class Mlp:
    """Parameters of a three-layer perceptron.

    ``weights[k]`` has shape ``(fan_in, fan_out)`` and ``biases[k]`` shape
    ``(fan_out,)``. The first two layers use tanh, the last is linear.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != 3 or len(self.biases) != 3:
            raise ShapeError("an Mlp has exactly three layers")
        for k in range(3):
            w, b = self.weights[k], self.biases[k]
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ShapeError(f"layer {k}: weight {w.shape} / bias {b.shape}")
            if k and w.shape[0] != self.weights[k - 1].shape[1]:
                raise ShapeError(f"layer {k} fan-in does not match layer {k - 1}")

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[2].shape[1]

    def arrays(self) -> list[np.ndarray]:
        """Parameter arrays in the fixed order W1, b1, W2, b2, W3, b3."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "Mlp":
        return Mlp([w.copy() for w in self.weights], [b.copy() for b in self.biases])


def orthogonal_init(shape: tuple[int, int], gain: float, rng: np.random.Generator) -> np.ndarray:
    """Random matrix with orthonormal columns (tall) or rows (wide), scaled by ``gain``.

    Parameters
    ----------
    shape : (rows, cols)
    gain : float
        Scale; the result satisfies ``M.T @ M = gain**2 I`` when rows >= cols
        and ``M @ M.T = gain**2 I`` otherwise.
    rng : numpy.random.Generator
    """
    rows, cols = shape
    if rows < 1 or cols < 1:
        raise ShapeError(f"orthogonal_init needs positive dims, got {shape}")
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    # sign fix makes the draw uniform (Haar) over orthogonal matrices
    q *= np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    # C order keeps matmul summation order identical to a reloaded copy
    return np.ascontiguousarray(gain * q)


def init_mlp(
    in_dim: int,
    out_dim: int,
    rng: np.random.Generator,
    hidden: int = HIDDEN,
    hidden_gain: float = math.sqrt(2.0),
    out_gain: float = 1.0,
) -> Mlp:
    """Orthogonally initialized perceptron with zero biases."""
    dims = [in_dim, hidden, hidden, out_dim]
    gains = [hidden_gain, hidden_gain, out_gain]
    weights = [orthogonal_init((dims[k], dims[k + 1]), gains[k], rng) for k in range(3)]
    biases = [np.zeros(dims[k + 1]) for k in range(3)]
    return Mlp(weights, biases)


def _check_input(params: Mlp, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != params.in_dim:
        raise ShapeError(f"input shape {x.shape} does not match fan-in {params.in_dim}")
    return x


def mlp_forward(params: Mlp, x: np.ndarray) -> np.ndarray:
    """Evaluate ``W3 . tanh(W2 . tanh(W1 . x + b1) + b2) + b3``.

    ``x`` may be a single vector or a ``(batch, in_dim)`` array.
    """
    x = _check_input(params, x)
    (w1, w2, w3), (b1, b2, b3) = params.weights, params.biases
    h1 = np.tanh(x @ w1 + b1)
    h2 = np.tanh(h1 @ w2 + b2)
    return h2 @ w3 + b3


def mlp_forward_cached(params: Mlp, x: np.ndarray):
    """Forward pass that also returns the activations needed by :func:`mlp_backward`."""
    x = _check_input(params, x)
    (w1, w2, w3), (b1, b2, b3) = params.weights, params.biases
    h1 = np.tanh(x @ w1 + b1)
    h2 = np.tanh(h1 @ w2 + b2)
    return h2 @ w3 + b3, (x, h1, h2)


def mlp_backward(params: Mlp, cache, output_grad: np.ndarray):
    """Reverse pass from a cached forward.

    Returns ``(grads, input_grad)`` where ``grads`` follows the order of
    :meth:`Mlp.arrays`. Batched inputs have their gradients summed over the
    batch axis.
    """
    x, h1, h2 = cache
    g = np.asarray(output_grad, dtype=np.float64)
    if g.shape != x.shape[:-1] + (params.out_dim,):
        raise ShapeError(f"output_grad shape {g.shape} does not match output")
    w1, w2, w3 = params.weights
    batched = x.ndim == 2

    def outer(a, b):
        return a.T @ b if batched else np.outer(a, b)

    def colsum(a):
        return a.sum(axis=0) if batched else a

    gw3, gb3 = outer(h2, g), colsum(g)
    dz2 = (g @ w3.T) * (1.0 - h2 * h2)
    gw2, gb2 = outer(h1, dz2), colsum(dz2)
    dz1 = (dz2 @ w2.T) * (1.0 - h1 * h1)
    gw1, gb1 = outer(x, dz1), colsum(dz1)
    return [gw1, gb1, gw2, gb2, gw3, gb3], dz1 @ w1.T


def mlp_gradient(params: Mlp, x: np.ndarray, output_grad: np.ndarray):
    """Gradients of ``sum(output_grad * mlp_forward(params, x))``.

    Returns ``(param_grads, input_grad)``; see :func:`mlp_backward`.
    """
    _, cache = mlp_forward_cached(params, x)
    return mlp_backward(params, cache, output_grad)


@dataclass
class AdamState:
    """Adam moment accumulators for a fixed list of parameter arrays."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0

    @classmethod
    def for_params(cls, params: list[np.ndarray], lr: float = 3e-4, **kw) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], lr=lr, **kw)


def adam_step(state: AdamState, params: list[np.ndarray], grads: list[np.ndarray]) -> list[np.ndarray]:
    """Apply one bias-corrected Adam update to ``params`` in place.

    Non-finite gradients are rejected before anything is touched.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError("params, grads and optimizer state differ in length")
    for p, g, m in zip(params, grads, state.m):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeError(f"gradient shape {g.shape} vs parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError("non-finite gradient; Adam update rejected")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    step_size = state.lr / c1
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m += (1.0 - b1) * (g - m)
        v += (1.0 - b2) * (g * g - v)
        denom = np.sqrt(v)
        denom *= 1.0 / math.sqrt(c2)
        denom += state.eps
        p -= step_size * m / denom
    return params


@dataclass
class GaussianPolicy:
    """Diagonal Gaussian whose mean comes from an :class:`Mlp`.

    The spread is state independent and stored as its logarithm.
    """

    mean_net: Mlp
    log_spread: np.ndarray = field(default_factory=lambda: np.full(6, math.log(0.5)))

    def __post_init__(self):
        self.log_spread = np.asarray(self.log_spread, dtype=np.float64)
        if self.log_spread.shape != (self.mean_net.out_dim,):
            raise ShapeError("log_spread must have one entry per action dimension")

    @property
    def spread(self) -> np.ndarray:
        return np.exp(self.log_spread)

    def mean(self, state: np.ndarray) -> np.ndarray:
        return mlp_forward(self.mean_net, state)

    def arrays(self) -> list[np.ndarray]:
        return self.mean_net.arrays() + [self.log_spread]


def diag_gaussian_log_prob(mean: np.ndarray, log_spread: np.ndarray, action: np.ndarray) -> np.ndarray:
    """Log-density of a diagonal Gaussian, summed over the last axis."""
    z = (np.asarray(action) - mean) * np.exp(-log_spread)
    return np.sum(-0.5 * z * z - log_spread - 0.5 * LOG_2PI, axis=-1)


def gaussian_log_prob(policy: GaussianPolicy, state: np.ndarray, action: np.ndarray):
    """Log-density of ``action`` under the policy at ``state``."""
    return diag_gaussian_log_prob(policy.mean(state), policy.log_spread, action)
