"""Reverse-mode differentiation for the classical parts of the network.

The networks here are chains, so a tape is just an ordered list of backward
closures. Each closure takes the gradient of its op's output, accumulates
parameter gradients into a :class:`ParamStore`, and returns the gradient of
its input. All ops are batched over the leading axis.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

ACTIVATIONS = ("qrelu", "relu", "leaky_relu", "identity")
SINE_CONVENTIONS = ("literal", "siren")

QRELU_SLOPE = 0.01
LEAKY_SLOPE = 0.01


class NumericalError(ArithmeticError):
    """Non-finite value met during training."""


class ParamStore:
    """Flat parameter vector with named slices and a matching gradient buffer."""

    def __init__(self, layout: list[tuple[str, tuple[int, ...]]], values=None):
        self.slices: dict[str, slice] = {}
        self.shapes: dict[str, tuple[int, ...]] = {}
        offset = 0
        for name, shape in layout:
            if name in self.slices:
                raise ValueError(f"duplicate parameter slice {name!r}")
            size = int(np.prod(shape, dtype=int))
            self.slices[name] = slice(offset, offset + size)
            self.shapes[name] = tuple(shape)
            offset += size
        if values is None:
            self.values = np.zeros(offset)
        else:
            self.values = np.array(values, dtype=float).reshape(-1)
            if self.values.size != offset:
                raise ValueError(f"layout needs {offset} values, got {self.values.size}")
        self.grads = np.zeros(offset)

    def __len__(self) -> int:
        return self.values.size

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[self.slices[name]].reshape(self.shapes[name])

    def __setitem__(self, name: str, value) -> None:
        self.values[self.slices[name]] = np.asarray(value, dtype=float).reshape(-1)

    def grad(self, name: str) -> np.ndarray:
        return self.grads[self.slices[name]].reshape(self.shapes[name])

    def zero_grad(self) -> None:
        self.grads[:] = 0.0

    def layout(self) -> list[tuple[str, tuple[int, ...]]]:
        return [(name, self.shapes[name]) for name in self.slices]

    def copy(self) -> "ParamStore":
        return ParamStore(self.layout(), self.values.copy())


class Tape:
    def __init__(self):
        self._backward: list[Callable[[np.ndarray], np.ndarray]] = []

    def __len__(self) -> int:
        return len(self._backward)

    def push(self, fn: Callable[[np.ndarray], np.ndarray]) -> None:
        self._backward.append(fn)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        """Run the recorded closures in reverse; returns the input gradient."""
        for fn in reversed(self._backward):
            grad = fn(grad)
        return grad


def linear_sine(
    x: np.ndarray,
    store: ParamStore,
    w_name: str,
    b_name: str,
    omega0: float,
    convention: str = "literal",
    tape: Tape | None = None,
) -> np.ndarray:
    """``sin(omega0 * W x + b)`` (literal) or ``sin(omega0 * (W x + b))`` (siren)."""
    W, b = store[w_name], store[b_name]
    if x.shape[-1] != W.shape[1]:
        raise ValueError(f"input width {x.shape[-1]} does not match W of shape {W.shape}")
    if convention == "literal":
        z = omega0 * (x @ W.T) + b
        b_scale = 1.0
    elif convention == "siren":
        z = omega0 * (x @ W.T + b)
        b_scale = omega0
    else:
        raise ValueError(f"unknown sine convention {convention!r}")
    if tape is not None:
        cos_z = np.cos(z)

        def backward(gh):
            gz = gh * cos_z
            store.grad(w_name)[...] += omega0 * (gz.T @ x)
            store.grad(b_name)[...] += b_scale * gz.sum(axis=0)
            return omega0 * (gz @ W)

        tape.push(backward)
    return np.sin(z)


def linear_sine_forward(W, b, x, omega0: float, convention: str = "literal") -> np.ndarray:
    """Unbatched convenience form of :func:`linear_sine`."""
    W = np.atleast_2d(np.asarray(W, dtype=float))
    store = ParamStore([("W", W.shape), ("b", (W.shape[0],))])
    store["W"], store["b"] = W, b
    return linear_sine(np.atleast_2d(x), store, "W", "b", omega0, convention)[0]


def linear(x, store: ParamStore, w_name: str, b_name: str, tape: Tape | None = None):
    W, b = store[w_name], store[b_name]
    if tape is not None:
        def backward(gy):
            store.grad(w_name)[...] += gy.T @ x
            store.grad(b_name)[...] += gy.sum(axis=0)
            return gy @ W

        tape.push(backward)
    return x @ W.T + b


def affine_head(p, store: ParamStore, scale_name: str, bias_name: str, tape: Tape | None = None):
    """Per-channel ``scale * p + bias``."""
    scale, bias = store[scale_name], store[bias_name]
    if tape is not None:
        def backward(gy):
            store.grad(scale_name)[...] += (gy * p).sum(axis=0)
            store.grad(bias_name)[...] += gy.sum(axis=0)
            return gy * scale

        tape.push(backward)
    return scale * p + bias


def qrelu(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, x, QRELU_SLOPE * x - x)


def activation(x, kind: str = "qrelu", tape: Tape | None = None) -> np.ndarray:
    """Output activation. At exactly 0 the negative-branch slope is used."""
    x = np.asarray(x, dtype=float)
    pos = x > 0
    if kind == "qrelu":
        slope = QRELU_SLOPE - 1.0
    elif kind == "relu":
        slope = 0.0
    elif kind == "leaky_relu":
        slope = LEAKY_SLOPE
    elif kind == "identity":
        slope = 1.0
    else:
        raise ValueError(f"unknown activation {kind!r}")
    if tape is not None:
        tape.push(lambda gy: gy * np.where(pos, 1.0, slope))
    return np.where(pos, x, slope * x)


def mse_loss(pred, target) -> tuple[float, np.ndarray]:
    """Mean squared error over all entries and its gradient with respect to ``pred``."""
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs target {target.shape}")
    if pred.size == 0:
        raise ValueError("mse_loss of an empty input")
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


class Adam:
    """Adam with bias correction. Moment buffers live here, one per parameter entry."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: np.ndarray | None = None
        self.v: np.ndarray | None = None

    def step(self, store: ParamStore) -> None:
        g = store.grads
        if not np.all(np.isfinite(g)):
            bad = [name for name, sl in store.slices.items() if not np.all(np.isfinite(g[sl]))]
            raise NumericalError(f"non-finite gradient in parameter slice(s): {', '.join(bad)}")
        if self.m is None:
            self.m = np.zeros_like(store.values)
            self.v = np.zeros_like(store.values)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * g
        self.v = self.beta2 * self.v + (1 - self.beta2) * g * g
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        store.values -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        store.zero_grad()

