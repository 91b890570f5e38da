"""Minimal numpy MLP heads, AdamW and learning-rate schedules."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erf

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(x):
    return 0.5 * x * (1.0 + erf(x / _SQRT2))


def gelu_grad(x):
    return 0.5 * (1.0 + erf(x / _SQRT2)) + x * _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def fan_in_uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class MLP:
    """``x -> W2 gelu(W1 x + b1) + b2``, optionally added to ``x`` and L2-normalized."""

    def __init__(self, params: dict[str, np.ndarray], residual: bool = False, normalize: bool = True):
        self.params = params
        self.residual = residual
        self.normalize = normalize

    @classmethod
    def init(cls, rng: np.random.Generator, d_in: int, d_hidden: int, d_out: int, residual=False, zero_out=False):
        params = {
            "W1": fan_in_uniform(rng, d_in, (d_in, d_hidden)),
            "b1": fan_in_uniform(rng, d_in, (d_hidden,)),
            "W2": fan_in_uniform(rng, d_hidden, (d_hidden, d_out)),
            "b2": fan_in_uniform(rng, d_hidden, (d_out,)),
        }
        if zero_out:
            params["W2"][:] = 0.0
            params["b2"][:] = 0.0
        return cls(params, residual=residual)

    def forward(self, x: np.ndarray, cache: bool = False):
        p = self.params
        pre = x @ p["W1"] + p["b1"]
        hid = gelu(pre)
        out = hid @ p["W2"] + p["b2"]
        if self.residual:
            out = out + x
        if self.normalize:
            norm = np.linalg.norm(out, axis=-1, keepdims=True)
            y = out / norm
        else:
            norm, y = None, out
        if cache:
            return y, (x, pre, hid, out, norm, y)
        return y

    __call__ = forward

    def backward(self, grad_y: np.ndarray, cache) -> dict[str, np.ndarray]:
        x, pre, hid, out, norm, y = cache
        p = self.params
        if self.normalize:
            # Jacobian of v / |v| applied to grad_y
            grad_out = (grad_y - y * np.sum(grad_y * y, axis=-1, keepdims=True)) / norm
        else:
            grad_out = grad_y
        grads = {
            "W2": hid.T @ grad_out,
            "b2": grad_out.sum(axis=0),
        }
        grad_pre = (grad_out @ p["W2"].T) * gelu_grad(pre)
        grads["W1"] = x.T @ grad_pre
        grads["b1"] = grad_pre.sum(axis=0)
        return grads

    def copy(self) -> "MLP":
        return MLP({k: v.copy() for k, v in self.params.items()}, self.residual, self.normalize)


class AdamW:
    """Adam with decoupled weight decay, applied to every parameter."""

    def __init__(self, params: dict[str, np.ndarray], lr: float, weight_decay: float = 0.01,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray], lr: float | None = None) -> None:
        lr = self.lr if lr is None else lr
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, p in self.params.items():
            g = grads[k]
            self.m[k] = self.b1 * self.m[k] + (1.0 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1.0 - self.b2) * g * g
            p *= 1.0 - lr * self.weight_decay
            p -= lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def cosine_lr(base: float, step: int, total: int) -> float:
    if total <= 0:
        return base
    return 0.5 * base * (1.0 + math.cos(math.pi * min(step, total) / total))


def linear_warmup_lr(base: float, step: int, total: int, warmup_frac: float = 0.1) -> float:
    """Linear warmup over ``warmup_frac`` of the steps, then linear decay to zero."""
    warm = int(math.ceil(warmup_frac * total))
    if warm > 0 and step < warm:
        return base * (step + 1) / warm
    if total <= warm:
        return base
    return base * max(0.0, (total - step) / (total - warm))
