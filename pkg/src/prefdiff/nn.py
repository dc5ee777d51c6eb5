"""Minimal dense-network stack used by every learned component.

Everything runs in float64 on numpy arrays. Gradients are hand-derived
reverse mode, checked against central finite differences in the tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class NumericError(RuntimeError):
    """A non-finite value reached an optimizer update."""


class RngStream:
    """Deterministic random stream.

    Identical seed plus identical call sequence reproduces the exact same
    bits. Derived streams (spawn) are keyed by (seed, ..., index) so
    per-sample work can run in any order, or on any number of threads,
    without changing the draws each sample sees.
    """

    def __init__(self, seed: int, _key: tuple[int, ...] | None = None):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed
        self._key = (seed,) if _key is None else _key
        self.gen = np.random.default_rng(self._key)

    def spawn(self, index: int) -> "RngStream":
        """Independent child stream keyed by this stream's key plus index."""
        index = int(index)
        if index < 0:
            raise ValueError(f"spawn index must be non-negative, got {index}")
        return RngStream(self.seed, self._key + (index,))

    def __repr__(self) -> str:  # pragma: no cover
        return f"RngStream(key={self._key})"


def rng_gaussian(rng: RngStream, shape: list[int]) -> np.ndarray:
    """Standard normal draws of the given shape."""
    shape = tuple(int(s) for s in shape)
    if len(shape) == 0 or any(s <= 0 for s in shape):
        raise ValueError(f"shape must be non-empty with positive entries, got {list(shape)}")
    return rng.gen.standard_normal(shape)


@dataclass
class Mlp:
    """Fully connected net, tanh hidden activations, identity output.

    weights[i] has shape (layer_sizes[i], layer_sizes[i+1]); forward is
    x @ w + b per layer. Hidden activations are tanh on purpose: scores
    built on this net get differentiated, and a smooth activation keeps
    those gradients defined everywhere.
    """

    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def d_in(self) -> int:
        return self.layer_sizes[0]

    @property
    def d_out(self) -> int:
        return self.layer_sizes[-1]


def make_mlp(layer_sizes: list[int], rng: RngStream) -> Mlp:
    """Xavier-uniform weights, zero biases."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2 or any(s <= 0 for s in sizes):
        raise ValueError(f"layer_sizes needs >= 2 positive entries, got {layer_sizes}")
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.gen.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Mlp(sizes, weights, biases)


def mlp_params(net: Mlp) -> list[np.ndarray]:
    """Parameter arrays in a fixed flat order: w0, b0, w1, b1, ..."""
    out: list[np.ndarray] = []
    for w, b in zip(net.weights, net.biases):
        out.append(w)
        out.append(b)
    return out


def _check_batch(net: Mlp, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != net.d_in:
        raise ValueError(f"expected input of shape (batch, {net.d_in}), got {x.shape}")
    return x


def mlp_forward(net: Mlp, x: np.ndarray) -> np.ndarray:
    """Forward pass on a batch, shape (batch, d_in) -> (batch, d_out)."""
    h = _check_batch(net, x)
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w + b
        if i != last:
            h = np.tanh(h)
    return h


def mlp_backward(
    net: Mlp, x: np.ndarray, upstream: np.ndarray
) -> tuple[list[np.ndarray], np.ndarray]:
    """Gradients of sum(upstream * f(x)) w.r.t. parameters and input.

    Runs its own forward pass so the cached activations always belong to
    this x. Returns (param_grads ordered like mlp_params, input_grad).
    """
    x = _check_batch(net, x)
    upstream = np.asarray(upstream, dtype=float)
    if upstream.shape != (x.shape[0], net.d_out):
        raise ValueError(
            f"expected upstream of shape ({x.shape[0]}, {net.d_out}), got {upstream.shape}"
        )

    last = len(net.weights) - 1
    acts = [x]  # acts[i] is the input to layer i
    h = x
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w + b
        if i != last:
            h = np.tanh(h)
        acts.append(h)

    grads: list[np.ndarray] = [np.empty(0)] * (2 * len(net.weights))
    delta = upstream
    for i in range(last, -1, -1):
        # delta is d(loss)/d(pre-activation output of layer i); for hidden
        # layers fold in tanh' using the stored activation tanh(z) = acts[i+1]
        if i != last:
            delta = delta * (1.0 - acts[i + 1] ** 2)
        grads[2 * i] = acts[i].T @ delta
        grads[2 * i + 1] = delta.sum(axis=0)
        delta = delta @ net.weights[i].T
    return grads, delta


@dataclass
class AdamwState:
    """Adam with decoupled weight decay; step counts completed updates."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def make_adamw(
    params: list[np.ndarray],
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 0.01,
) -> AdamwState:
    if not lr > 0:
        raise ValueError(f"lr must be positive, got {lr}")
    if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
        raise ValueError(f"betas must lie in [0, 1), got ({beta1}, {beta2})")
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if weight_decay < 0:
        raise ValueError(f"weight_decay must be non-negative, got {weight_decay}")
    return AdamwState(
        lr=lr,
        beta1=beta1,
        beta2=beta2,
        eps=eps,
        weight_decay=weight_decay,
        m=[np.zeros_like(p) for p in params],
        v=[np.zeros_like(p) for p in params],
    )


def adamw_step(state: AdamwState, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
    """One in-place update. Weight decay is decoupled: p -= lr * wd * p."""
    if len(params) != len(state.m) or len(grads) != len(params):
        raise ValueError(
            f"expected {len(state.m)} parameter/gradient arrays, "
            f"got {len(params)} params and {len(grads)} grads"
        )
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise ValueError(f"parameter {i}: shape {p.shape} vs gradient shape {g.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {i}")
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        if state.weight_decay != 0.0:
            update = update + state.weight_decay * p
        p -= state.lr * update


def warmup_lr(base_lr: float, step: int, total_steps: int) -> float:
    """Linear ramp to base_lr across the first 5% of steps, constant after.

    step is 1-indexed; the ramp length is at least one step.
    """
    warm = max(1, math.ceil(0.05 * total_steps))
    return base_lr * min(1.0, step / warm)
