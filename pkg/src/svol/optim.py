"""AdamW with decoupled weight decay and a step learning-rate schedule."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .tensor import Tensor


@dataclass
class OptimizerState:
    lr: float = 1e-4
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adamw_step(params: dict[str, Tensor], grads: dict[str, np.ndarray | None],
               state: OptimizerState) -> OptimizerState:
    """Apply one AdamW update in place.

    The decay term ``w <- w - lr * wd * w`` is applied to the weights before,
    and independently of, the bias-corrected adaptive step. Parameters whose
    gradient is ``None`` are treated as having a zero gradient.
    """
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        elif g.shape != p.data.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter {p.data.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        elif m.shape != p.data.shape:
            raise ShapeError(f"optimizer moment for {name} has shape {m.shape}")
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        w = p.data
        if state.weight_decay:
            w = w - state.lr * state.weight_decay * w
        p.data = w - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return state


def step_decay_lr(base_lr: float, iteration: int, decay_step: int, factor: float = 10.0) -> float:
    """Learning rate after dividing by ``factor`` at every multiple of ``decay_step``."""
    if decay_step <= 0:
        return base_lr
    return base_lr / factor ** (iteration // decay_step)
