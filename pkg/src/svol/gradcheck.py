"""Finite-difference verification of reverse-mode gradients."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import NumericError, ShapeError
from .tensor import Tape, Tensor


def analytic_grad(f: Callable[[Tensor], Tensor], x: Tensor) -> np.ndarray:
    probe = Tensor(x.data.copy(), requires_grad=True)
    with Tape() as tape:
        out = f(probe)
        tape.backward(out)
    if probe.grad is None:
        return np.zeros_like(probe.data)
    return probe.grad


def numeric_grad(f: Callable[[Tensor], Tensor], x: Tensor, h: float = 1e-6,
                 indices: Sequence[int] | None = None) -> np.ndarray:
    """Central differences; only the flat ``indices`` are filled when given (others stay 0)."""
    base = x.data.astype(np.float64).copy()
    flat = base.reshape(-1)
    grad = np.zeros_like(flat)
    def value(arr):
        out = f(Tensor(arr)).data
        if out.size != 1:
            raise ShapeError(f"grad check needs a scalar function, got shape {out.shape}")
        return float(out.reshape(()))

    for i in (range(flat.size) if indices is None else indices):
        orig = flat[i]
        flat[i] = orig + h
        fp = value(base)
        flat[i] = orig - h
        fm = value(base)
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericError(f"non-finite function value at component {i}")
        grad[i] = (fp - fm) / (2.0 * h)
    return grad.reshape(base.shape)


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, h: float = 1e-6,
               indices: Sequence[int] | None = None) -> float:
    """Max component-wise relative error between reverse-mode and central differences.

    The relative error of each component uses ``max(|analytic|, |numeric|, 1e-8)``
    as its denominator. ``indices`` restricts the comparison to those flat
    components, which keeps checks of large parameter tensors affordable.
    """
    a = analytic_grad(f, x)
    if not np.isfinite(a).all():
        raise NumericError("non-finite analytic gradient")
    n = numeric_grad(f, x, h, indices)
    if indices is not None:
        a = a.reshape(-1)[list(indices)]
        n = n.reshape(-1)[list(indices)]
    return relative_error(a, n)


def relative_error(a: np.ndarray, n: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
    return float(np.max(np.abs(a - n) / denom, initial=0.0))
