"""Bias-corrected Adam, one state object per parameter tensor."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeError
from .ops import require_finite

__all__ = ["AdamState", "adam_step", "Adam"]


@dataclass
class AdamState:
    """First/second moment accumulators plus the shared hyperparameters."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_param(
        cls,
        param: np.ndarray,
        lr: float = 1e-6,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> "AdamState":
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        return cls(
            m=np.zeros_like(param),
            v=np.zeros_like(param),
            lr=lr,
            beta1=beta1,
            beta2=beta2,
            eps=eps,
        )


def adam_step(param: np.ndarray, grad: np.ndarray, state: AdamState) -> np.ndarray:
    """One in-place Adam update; increments the step counter.

    m_t = b1*m + (1-b1)*g, v_t = b2*v + (1-b2)*g^2, both bias-corrected
    before the update. A zero gradient leaves the parameter untouched
    but still advances t.
    """
    grad = np.asarray(grad)
    if param.shape != grad.shape or param.shape != state.m.shape:
        raise ShapeError(
            f"adam shapes disagree: param {param.shape}, grad {grad.shape}, state {state.m.shape}"
        )
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    state.m *= b1
    state.m += (1.0 - b1) * grad
    state.v *= b2
    state.v += (1.0 - b2) * np.square(grad)
    m_hat = state.m / (1.0 - b1 ** state.t)
    v_hat = state.v / (1.0 - b2 ** state.t)
    param -= (state.lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(
        param.dtype, copy=False
    )
    require_finite(param, "adam-updated parameter")
    return param


class Adam:
    """Keeps one AdamState per named parameter and applies grouped updates."""

    def __init__(self, params: dict[str, np.ndarray], lr: float = 1e-6, **hyper):
        self.params = params
        self.states = {
            name: AdamState.for_param(p, lr=lr, **hyper) for name, p in params.items()
        }

    def step(self, grads: dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(grads)
        if missing:
            raise ShapeError(f"gradients missing for parameters: {sorted(missing)}")
        for name, param in self.params.items():
            adam_step(param, grads[name], self.states[name])
