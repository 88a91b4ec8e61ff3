"""Stochastic gradient descent with momentum and coupled L2 weight decay."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeError


@dataclass
class SGDState:
    """Optimizer hyperparameters plus one velocity buffer per parameter."""

    learning_rate: float
    momentum: float = 0.9
    weight_decay: float = 0.0
    velocities: list[np.ndarray] = field(default_factory=list)

    def init_velocities(self, params: list[np.ndarray]) -> None:
        self.velocities = [np.zeros_like(p) for p in params]


def sgd_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    state: SGDState,
    decay: list[bool] | None = None,
) -> None:
    """One in-place update: v <- m*v - lr*(g + wd*w); w <- w + v.

    Weight decay is added into the gradient (coupled L2); ``decay`` masks it
    off for parameters such as biases. Velocities start at zero.
    """
    if not state.velocities:
        state.init_velocities(params)
    if len(params) != len(grads) or len(params) != len(state.velocities):
        raise ShapeError("params, grads and velocities must align one-to-one")
    if decay is None:
        decay = [True] * len(params)
    lr = state.learning_rate
    for w, g, v, d in zip(params, grads, state.velocities, decay):
        if w.shape != g.shape:
            raise ShapeError(f"gradient {g.shape} does not match parameter {w.shape}")
        eff = g + state.weight_decay * w if (d and state.weight_decay) else g
        v *= state.momentum
        v -= lr * eff
        w += v
