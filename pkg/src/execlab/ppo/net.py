"""Two-hidden-layer tanh MLP with hand-derived gradients and Adam.

The whole package trains networks of exactly this shape (64x64 tanh trunk),
so forward, backward and the optimizer are written out explicitly instead of
pulling in an autodiff framework.  `gradcheck` verifies the algebra.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HIDDEN = 64


@dataclass
class MlpParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray

    @property
    def arrays(self) -> tuple[np.ndarray, ...]:
        return (self.w1, self.b1, self.w2, self.b2, self.w3, self.b3)

    @property
    def size(self) -> int:
        return sum(a.size for a in self.arrays)

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays])

    def copy(self) -> "MlpParams":
        return MlpParams(*(a.copy() for a in self.arrays))

    def set_flat(self, flat: np.ndarray) -> None:
        i = 0
        for a in self.arrays:
            a[...] = flat[i : i + a.size].reshape(a.shape)
            i += a.size


def init_mlp(
    rng: np.random.Generator, n_in: int, n_out: int, out_scale: float = 0.01
) -> MlpParams:
    """He-style scaled normal init; the output layer starts near zero so the
    policy begins close to uniform and the value head close to zero."""

    def layer(fan_in: int, fan_out: int, scale: float) -> np.ndarray:
        return rng.standard_normal((fan_in, fan_out)) * scale / np.sqrt(fan_in)

    return MlpParams(
        w1=layer(n_in, HIDDEN, 1.0),
        b1=np.zeros(HIDDEN),
        w2=layer(HIDDEN, HIDDEN, 1.0),
        b2=np.zeros(HIDDEN),
        w3=layer(HIDDEN, n_out, out_scale),
        b3=np.zeros(n_out),
    )


@dataclass
class ForwardCache:
    x: np.ndarray
    h1: np.ndarray
    h2: np.ndarray
    out: np.ndarray


def mlp_forward(params: MlpParams, x: np.ndarray) -> ForwardCache:
    h1 = np.tanh(x @ params.w1 + params.b1)
    h2 = np.tanh(h1 @ params.w2 + params.b2)
    out = h2 @ params.w3 + params.b3
    return ForwardCache(x=x, h1=h1, h2=h2, out=out)


def mlp_backward(params: MlpParams, cache: ForwardCache, grad_out: np.ndarray) -> MlpParams:
    """Gradients of a scalar loss given dL/d(out); returns an MlpParams of grads."""
    g3 = grad_out
    dw3 = cache.h2.T @ g3
    db3 = g3.sum(axis=0)
    g2 = (g3 @ params.w3.T) * (1.0 - cache.h2 * cache.h2)
    dw2 = cache.h1.T @ g2
    db2 = g2.sum(axis=0)
    g1 = (g2 @ params.w2.T) * (1.0 - cache.h1 * cache.h1)
    dw1 = cache.x.T @ g1
    db1 = g1.sum(axis=0)
    return MlpParams(dw1, db1, dw2, db2, dw3, db3)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(m=np.zeros(n), v=np.zeros(n), t=0)


def adam_step(
    params: MlpParams,
    grads: MlpParams,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """In-place Adam update on the flattened parameter vector."""
    g = grads.flatten()
    state.t += 1
    state.m = beta1 * state.m + (1.0 - beta1) * g
    state.v = beta2 * state.v + (1.0 - beta2) * g * g
    m_hat = state.m / (1.0 - beta1**state.t)
    v_hat = state.v / (1.0 - beta2**state.t)
    flat = params.flatten()
    flat -= lr * m_hat / (np.sqrt(v_hat) + eps)
    params.set_flat(flat)
