"""Minimal parameter container and shared layer math (64-bit numpy).

Every trainable array is a Param pairing a value with an accumulating
gradient buffer. Layers are plain functions with explicit backward passes so
gradients stay exact and finite-difference checkable.
"""

from __future__ import annotations

import numpy as np


class Param:
    """A weight array with a paired gradient accumulation buffer."""

    __slots__ = ("value", "grad")

    def __init__(self, value: np.ndarray):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad.fill(0.0)


def named_params(obj, prefix: str = "") -> dict[str, Param]:
    """Collect Param attributes of a params dataclass, prefixed by field name."""
    out: dict[str, Param] = {}
    for name, value in vars(obj).items():
        key = f"{prefix}{name}" if not prefix else f"{prefix}.{name}"
        if isinstance(value, Param):
            out[key] = value
        elif hasattr(value, "__dict__"):
            out.update(named_params(value, key))
    return out


def gauss_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> Param:
    return Param(rng.standard_normal(shape) / np.sqrt(max(1, fan_in)))


def zeros_init(shape: tuple[int, ...]) -> Param:
    return Param(np.zeros(shape))


def linear(x: np.ndarray, w: Param, b: Param) -> np.ndarray:
    """x [..., Din] @ w [Din, Dout] + b [Dout]."""
    return x @ w.value + b.value


def linear_backward(dout: np.ndarray, x: np.ndarray, w: Param, b: Param) -> np.ndarray:
    """Accumulate dW, db; return dx. Handles leading batch axes."""
    x2 = x.reshape(-1, x.shape[-1])
    d2 = dout.reshape(-1, dout.shape[-1])
    w.grad += x2.T @ d2
    b.grad += d2.sum(axis=0)
    return (d2 @ w.value.T).reshape(x.shape)


def conv1d_same(x: np.ndarray, w: Param, b: Param) -> np.ndarray:
    """1-D convolution along the first axis, stride 1, zero same-padding.

    x [L, Cin], w [k, Cin, Cout] with odd k, b [Cout] -> [L, Cout].
    """
    k = w.value.shape[0]
    off = k // 2
    length = x.shape[0]
    xpad = np.pad(x, ((off, k - 1 - off), (0, 0)))
    out = np.broadcast_to(b.value, (length, b.value.shape[0])).copy()
    for j in range(k):
        out += xpad[j:j + length] @ w.value[j]
    return out


def conv1d_same_backward(dout: np.ndarray, x: np.ndarray, w: Param, b: Param) -> np.ndarray:
    """Accumulate dW, db for conv1d_same; return dx."""
    k = w.value.shape[0]
    off = k // 2
    length = x.shape[0]
    xpad = np.pad(x, ((off, k - 1 - off), (0, 0)))
    dxpad = np.zeros_like(xpad)
    b.grad += dout.sum(axis=0)
    for j in range(k):
        w.grad[j] += xpad[j:j + length].T @ dout
        dxpad[j:j + length] += dout @ w.value[j].T
    return dxpad[off:off + length]


def silu(x: np.ndarray) -> np.ndarray:
    return x / (1.0 + np.exp(-x))


def silu_backward(dout: np.ndarray, x: np.ndarray) -> np.ndarray:
    sig = 1.0 / (1.0 + np.exp(-x))
    return dout * sig * (1.0 + x * (1.0 - sig))
