"""Named parameters and the bias-corrected Adam update."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


class MissingGradError(RuntimeError):
    pass


class Parameter:
    """A trainable tensor with a name path and per-parameter Adam state."""

    __slots__ = ("name", "tensor", "adam_m", "adam_v", "step_count", "trainable")

    def __init__(self, name: str, data, trainable: bool = True):
        self.name = name
        self.tensor = Tensor(np.asarray(data, dtype=np.float64), requires_grad=trainable)
        self.adam_m = np.zeros_like(self.tensor.data)
        self.adam_v = np.zeros_like(self.tensor.data)
        self.step_count = 0
        self.trainable = trainable

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    @property
    def grad(self):
        return self.tensor.grad

    def assign(self, values) -> None:
        arr = np.asarray(values, dtype=np.float64)
        if arr.shape != self.tensor.data.shape:
            raise ValueError(f"parameter '{self.name}' shape {self.tensor.data.shape} cannot take {arr.shape}")
        self.tensor.data = arr

    def freeze(self) -> None:
        self.trainable = False
        self.tensor.requires_grad = False
        self.tensor.grad = None

    def unfreeze(self) -> None:
        self.trainable = True
        self.tensor.requires_grad = True

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.tensor.shape}, trainable={self.trainable})"


def adam_step(params, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One bias-corrected Adam update over the given parameters; grads are then zeroed."""
    params = list(params)
    for p in params:
        if p.tensor.grad is None:
            raise MissingGradError(f"adam_step: parameter '{p.name}' has no gradient")
    for p in params:
        g = p.tensor.grad
        t = p.step_count + 1
        p.adam_m = beta1 * p.adam_m + (1.0 - beta1) * g
        p.adam_v = beta2 * p.adam_v + (1.0 - beta2) * (g * g)
        m_hat = p.adam_m / (1.0 - beta1 ** t)
        v_hat = p.adam_v / (1.0 - beta2 ** t)
        p.tensor.data = p.tensor.data - lr * m_hat / (np.sqrt(v_hat) + eps)
        p.step_count = t
        p.tensor.grad = None


def global_grad_norm(params) -> float:
    total = 0.0
    for p in params:
        g = p.tensor.grad
        if g is not None:
            total += float(np.sum(g * g))
    return float(np.sqrt(total))


def clip_gradients(params, max_norm: float) -> float:
    """Scale all gradients so their global norm is at most max_norm; returns the pre-clip norm."""
    params = list(params)
    norm = global_grad_norm(params)
    if norm > max_norm > 0:
        factor = max_norm / norm
        for p in params:
            if p.tensor.grad is not None:
                p.tensor.grad = p.tensor.grad * factor
    return norm


def xavier_uniform(rng: np.random.Generator, shape) -> np.ndarray:
    shape = tuple(shape)
    fan_in = shape[0] if len(shape) > 1 else shape[0]
    fan_out = shape[-1]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def normal_init(rng: np.random.Generator, shape, std: float = 0.1) -> np.ndarray:
    return rng.normal(0.0, std, size=tuple(shape))
