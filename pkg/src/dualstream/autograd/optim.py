"""Momentum SGD."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor import Tensor


@dataclass
class OptimizerState:
    learning_rate: float = 0.01
    momentum: float = 0.9
    velocity: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")


def sgd_momentum_step(
    params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: OptimizerState
) -> tuple[list[np.ndarray], OptimizerState]:
    """One update ``v <- m*v + g; p <- p - lr*v``.

    Pure: returns new parameter arrays and a new state; inputs are untouched.
    Missing velocity buffers start at zero.
    """
    if len(params) != len(grads):
        raise ValueError("params and grads differ in length")
    velocity = state.velocity or [np.zeros_like(p) for p in params]
    if len(velocity) != len(params):
        raise ValueError("velocity buffers do not match params")
    new_params, new_velocity = [], []
    for p, g, v in zip(params, grads, velocity):
        if p.shape != g.shape or p.shape != v.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}, velocity {v.shape}")
        m = p.dtype.type(state.momentum)
        lr = p.dtype.type(state.learning_rate)
        v_new = m * v + g.astype(p.dtype, copy=False)
        new_velocity.append(v_new)
        new_params.append(p - lr * v_new)
    return new_params, OptimizerState(state.learning_rate, state.momentum, new_velocity)


class SGD:
    """In-place momentum SGD over a list of parameter tensors."""

    def __init__(self, params: Sequence[Tensor], lr: float = 0.01, momentum: float = 0.9):
        self.params = list(params)
        self.state = OptimizerState(lr, momentum)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        new, self.state = sgd_momentum_step([p.data for p in self.params], grads, self.state)
        for p, data in zip(self.params, new):
            p.data = data
