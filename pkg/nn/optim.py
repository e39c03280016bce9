"""
Adam optimizer over named parameter tensors.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from nn.tensor import Tensor
from utils.exceptions import NumericalError, ShapeError

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """First/second moments per parameter plus the step counter and hyperparameters."""
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray],
              state: AdamState) -> Tuple[Dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update; returns new arrays and a new state."""
    if state.lr <= 0:
        raise ValueError(f"adam_step: learning rate must be positive, got {state.lr}")
    for name, grad in grads.items():
        if name not in params:
            raise KeyError(f"adam_step: gradient for unknown parameter {name!r}")
        if grad.shape != params[name].shape:
            raise ShapeError(f"adam_step: gradient shape {grad.shape} != parameter shape "
                             f"{params[name].shape} for {name!r}")
        if not np.all(np.isfinite(grad)):
            bad = int(np.size(grad) - np.count_nonzero(np.isfinite(grad)))
            raise NumericalError(f"adam_step: {bad} non-finite gradient entries in {name!r}; step aborted")

    step = state.step + 1
    new_params, new_m, new_v = {}, {}, {}
    for name, value in params.items():
        grad = grads.get(name)
        if grad is None:
            new_params[name] = value
            if name in state.m:
                new_m[name], new_v[name] = state.m[name], state.v[name]
            continue
        m = state.m.get(name, np.zeros_like(value))
        v = state.v.get(name, np.zeros_like(value))
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        m_hat = m / (1.0 - state.beta1 ** step)
        v_hat = v / (1.0 - state.beta2 ** step)
        new_params[name] = value - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        new_m[name], new_v[name] = m, v

    new_state = AdamState(lr=state.lr, beta1=state.beta1, beta2=state.beta2, eps=state.eps,
                          step=step, m=new_m, v=new_v)
    return new_params, new_state


class Adam:
    """Stateful wrapper applying ``adam_step`` to live parameter tensors."""

    def __init__(self, params: Dict[str, Tensor], lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.state = AdamState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self) -> None:
        grads = {name: p.grad for name, p in self.params.items() if p.grad is not None}
        values = {name: p.data for name, p in self.params.items()}
        updated, self.state = adam_step(values, grads, self.state)
        for name, p in self.params.items():
            p.data = updated[name]
