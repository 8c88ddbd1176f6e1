"""Elementary numeric operations: dense layers, masked softmax, losses, Adam.

Everything here is plain numpy working on float64 arrays.  The fused training
kernels (`fused_numpy`, `fused_numba`) replicate this arithmetic for speed;
tests assert the two stay in agreement.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import prng

PROB_FLOOR = 1e-12

IDENTITY = "identity"
RELU = "relu"


@dataclass
class DenseLayer:
    """Affine map ``x @ weights + bias`` with an optional ReLU."""

    weights: np.ndarray  # (d_in, d_out)
    bias: np.ndarray  # (d_out,)
    activation: str = IDENTITY

    def __post_init__(self) -> None:
        if self.activation not in (IDENTITY, RELU):
            raise ValueError(f"unknown activation: {self.activation!r}")
        if self.weights.shape[1] != self.bias.shape[0]:
            raise ValueError("bias width does not match weight columns")


def dense_forward(layer: DenseLayer, x: np.ndarray) -> np.ndarray:
    """Apply a dense layer to a vector (d_in,) or a batch (n, d_in)."""
    z = x @ layer.weights + layer.bias
    if layer.activation == RELU:
        z = np.maximum(z, 0.0)
    return z


def glorot_uniform(d_in: int, d_out: int, seed: int, start: int = 0) -> np.ndarray:
    """Glorot-uniform weight draw on the package PRNG stream ``seed``."""
    limit = np.sqrt(6.0 / (d_in + d_out))
    u = prng.uniforms(seed, start, d_in * d_out)
    return ((2.0 * u - 1.0) * limit).reshape(d_in, d_out)


def softmax(scores: np.ndarray, avail: np.ndarray | None = None) -> np.ndarray:
    """Availability-masked softmax over the last axis.

    Unavailable entries get probability exactly 0; the max of the available
    scores is subtracted before exponentiation for stability.  Raises if a
    row has no available alternative.
    """
    was_1d = np.asarray(scores).ndim == 1
    scores = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    if avail is None:
        avail = np.ones_like(scores)
    else:
        avail = np.atleast_2d(np.asarray(avail, dtype=np.float64))
    if not (avail.sum(axis=1) > 0).all():
        raise ValueError("row with no available alternative")
    masked = np.where(avail > 0, scores, -np.inf)
    shifted = masked - masked.max(axis=1, keepdims=True)
    e = np.exp(shifted) * (avail > 0)
    p = e / e.sum(axis=1, keepdims=True)
    return p[0] if was_1d else p


def cross_entropy(probs: np.ndarray, chosen: np.ndarray) -> float:
    """Mean negative log probability of the chosen alternatives.

    ``chosen`` holds alternative indices.  Probabilities are floored at
    PROB_FLOOR inside the log only, so a zero-probability choice yields a
    large finite loss instead of inf.
    """
    probs = np.atleast_2d(probs)
    chosen = np.atleast_1d(chosen)
    p = probs[np.arange(probs.shape[0]), chosen]
    return float(-np.log(np.maximum(p, PROB_FLOOR)).mean())


def dropout_mask(shape: tuple[int, ...], rate: float, seed: int, start: int = 0) -> np.ndarray:
    """Inverted dropout mask: entries are 0 or 1/(1-rate), mean ~ 1.

    ``rate`` is the drop probability.  Rate 0 returns all ones, so applying
    the mask is exactly the identity.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must be in [0, 1)")
    n = int(np.prod(shape))
    if rate == 0.0:
        return np.ones(shape)
    u = prng.uniforms(seed, start, n)
    return (u >= rate).astype(np.float64).reshape(shape) / (1.0 - rate)


@dataclass
class TrainConfig:
    """Settings for one fit: fixed epoch count, no early stopping."""

    epochs: int = 200
    batch_size: int = 50
    dropout: float = 0.2
    l2: float = 0.0
    seed: int = 0
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7

    def __post_init__(self) -> None:
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.l2 < 0.0:
            raise ValueError("l2 must be non-negative")


@dataclass
class AdamState:
    """First/second-moment accumulators for a set of named tensors."""

    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray], config: TrainConfig) -> "AdamState":
        state = cls(config.learning_rate, config.beta1, config.beta2, config.eps)
        for name, p in params.items():
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        return state


def adam_step(state: AdamState, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
    """One Adam update, in place, with bias correction.

    Raises on non-finite gradients; a diverging fit should fail loudly here
    rather than silently poison the parameters.
    """
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for {name!r} at step {state.step}")
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        mhat = m / bc1
        vhat = v / bc2
        params[name] -= state.learning_rate * mhat / (np.sqrt(vhat) + state.eps)
