"""AdamW at full precision, with explicit serializable state."""
from __future__ import annotations

import numpy as np

from .autograd import Var


class AdamWState:
    """First/second moment buffers plus the shared step counter."""

    def __init__(self, names: list[str], params: dict[str, Var]):
        self.step = 0
        self.m = {n: np.zeros_like(params[n].data) for n in names}
        self.v = {n: np.zeros_like(params[n].data) for n in names}

    @property
    def names(self) -> list[str]:
        return sorted(self.m)


def adamw_step(
    params: dict[str, Var],
    grads: dict[str, np.ndarray],
    state: AdamWState,
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    weight_decay: float = 0.01,
) -> None:
    """One decoupled-weight-decay Adam update over `state`'s parameters.

    Parameters without a gradient entry still receive the decay term;
    the moment update treats a missing gradient as zero.
    """
    b1, b2 = betas
    state.step += 1
    t = state.step
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    for name in state.m:
        p = params[name]
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        m = state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        v = state.v[name] = b2 * state.v[name] + (1.0 - b2) * (g * g)
        update = (m / bc1) / (np.sqrt(v / bc2) + eps)
        p.data = p.data - lr * weight_decay * p.data - lr * update.astype(p.data.dtype)
