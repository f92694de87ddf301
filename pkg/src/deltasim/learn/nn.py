"""Minimal dense-network substrate with hand-written backprop.

Everything trains through explicit forward/backward passes over numpy
arrays; no autograd framework. Layers cache their forward activations, so
a model instance is single-threaded during training. Gradients accumulate
into per-parameter buffers and are validated against central finite
differences in the test suite (64-bit mode).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeMismatch

__all__ = ["Param", "Linear", "Mlp", "AdamW", "relu", "gradient_check"]


@dataclass
class Param:
    name: str
    value: np.ndarray
    grad: np.ndarray

    @classmethod
    def zeros_like(cls, name: str, value: np.ndarray) -> "Param":
        return cls(name, value, np.zeros_like(value))


class Linear:
    """Affine layer y = x @ W + b with cached input for backward."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, name: str, dtype=np.float32):
        limit = 1.0 / np.sqrt(n_in)
        self.W = Param.zeros_like(f"{name}.W", rng.uniform(-limit, limit, (n_in, n_out)).astype(dtype))
        self.b = Param.zeros_like(f"{name}.b", np.zeros(n_out, dtype=dtype))
        self._x: np.ndarray | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.W.value.shape[0]:
            raise ShapeMismatch(f"{self.W.name}: got {x.shape}, need (*, {self.W.value.shape[0]})")
        self._x = x
        return x @ self.W.value + self.b.value

    def backward(self, dy: np.ndarray) -> np.ndarray:
        self.W.grad += self._x.T @ dy
        self.b.grad += dy.sum(axis=0)
        return dy @ self.W.value.T

    def params(self) -> list[Param]:
        return [self.W, self.b]


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


class Mlp:
    """Dense stack with ReLU hidden activations and identity output."""

    def __init__(self, widths: tuple[int, ...], rng: np.random.Generator, name: str = "mlp", dtype=np.float32):
        if len(widths) < 2:
            raise ValueError("need at least input and output widths")
        self.widths = tuple(widths)
        self.layers = [
            Linear(widths[i], widths[i + 1], rng, f"{name}.{i}", dtype) for i in range(len(widths) - 1)
        ]
        self._pre: list[np.ndarray] = []

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._pre = []
        for i, layer in enumerate(self.layers):
            x = layer.forward(x)
            if i < len(self.layers) - 1:
                self._pre.append(x)
                x = relu(x)
        return x

    def backward(self, dy: np.ndarray) -> np.ndarray:
        for i in reversed(range(len(self.layers))):
            if i < len(self.layers) - 1:
                dy = dy * (self._pre[i] > 0)
            dy = self.layers[i].backward(dy)
        return dy

    def params(self) -> list[Param]:
        return [p for layer in self.layers for p in layer.params()]


class AdamW:
    """Adaptive moments with decoupled weight decay."""

    def __init__(self, params: list[Param], lr: float = 1e-4, weight_decay: float = 1e-6,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in params]
        self.v = [np.zeros_like(p.value) for p in params]

    def zero_grad(self):
        for p in self.params:
            p.grad[...] = 0.0

    def step(self):
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad**2
            update = (m / b1t) / (np.sqrt(v / b2t) + self.eps)
            # Decay is decoupled: applied to the weights, not the moments.
            p.value -= self.lr * (update + self.weight_decay * p.value)


def gradient_check(params: list[Param], loss_fn, eps: float = 1e-5) -> float:
    """Max relative error between backprop grads and central differences.

    ``loss_fn()`` must recompute the loss from scratch (forward only) using
    the current parameter values. Call backward once beforehand so grads
    are populated. Checks every entry of every parameter.
    """
    worst = 0.0
    for p in params:
        flat = p.value.ravel()
        grad = p.grad.ravel()
        for idx in range(flat.size):
            old = flat[idx]
            flat[idx] = old + eps
            lp = loss_fn()
            flat[idx] = old - eps
            lm = loss_fn()
            flat[idx] = old
            num = (lp - lm) / (2.0 * eps)
            denom = max(abs(num), abs(grad[idx]), 1e-8)
            worst = max(worst, abs(num - grad[idx]) / denom)
    return worst
