"""Adam with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import DimensionError, TrainingAbort
from .tensor import Tensor


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: np.ndarray | None = None
    v: np.ndarray | None = None

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")


def adam_step(param: Tensor, grad, state: AdamState, name: str | None = None) -> Tensor:
    """Apply one Adam update to ``param`` in place and return it.

    Moments are created lazily on the first call.  A zero gradient leaves the
    parameter unchanged but still advances ``state.step``.
    """
    g = np.asarray(grad, dtype=np.float64)
    if g.size != param.data.size:
        raise DimensionError(
            f"adam_step: gradient has {g.size} elements, parameter {name or ''} has {param.data.size}"
        )
    g = g.reshape(param.data.shape)
    if not np.all(np.isfinite(g)):
        raise TrainingAbort(f"non-finite gradient for parameter {name!r}", param=name)
    if state.m is None:
        state.m = np.zeros_like(param.data)
        state.v = np.zeros_like(param.data)
    if state.m.shape != param.data.shape:
        raise DimensionError(f"adam_step: state moments {state.m.shape} do not match {param.data.shape}")
    state.step += 1
    state.m = state.beta1 * state.m + (1 - state.beta1) * g
    state.v = state.beta2 * state.v + (1 - state.beta2) * g * g
    m_hat = state.m / (1 - state.beta1 ** state.step)
    v_hat = state.v / (1 - state.beta2 ** state.step)
    param.data = param.data - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return param


@dataclass
class Adam:
    """Adam over a named parameter dict; parameters without ``requires_grad`` are skipped."""

    params: Mapping[str, Tensor]
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    states: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, p in self.params.items():
            if p.requires_grad:
                self.states[name] = AdamState(self.lr, self.beta1, self.beta2, self.eps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        # validate everything first so a bad gradient never leaves a half-updated model
        for name, state in self.states.items():
            g = self.params[name].grad
            if g is not None and not np.all(np.isfinite(g)):
                raise TrainingAbort(f"non-finite gradient for parameter {name!r}", param=name)
        for name, state in self.states.items():
            p = self.params[name]
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            adam_step(p, g, state, name=name)
