"""Adam optimizer for engine tensors."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from .autodiff import Tensor


@dataclass
class AdamState:
    """Per-parameter Adam accumulators."""

    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_param(cls, param: Tensor, lr: float = 0.001, beta1: float = 0.9,
                  beta2: float = 0.999, epsilon: float = 1e-8) -> "AdamState":
        return cls(first_moment=np.zeros_like(param.data),
                   second_moment=np.zeros_like(param.data),
                   lr=lr, beta1=beta1, beta2=beta2, epsilon=epsilon)


def adam_init(params: Sequence[Tensor], lr: float = 0.001, beta1: float = 0.9,
              beta2: float = 0.999, epsilon: float = 1e-8) -> List[AdamState]:
    return [AdamState.for_param(p, lr, beta1, beta2, epsilon) for p in params]


def adam_step(params: Sequence[Tensor], states: Sequence[AdamState]) -> None:
    """One in-place Adam update; clears gradients and bumps step_count.

    Every parameter must carry a populated gradient.
    """
    if len(params) != len(states):
        raise ValueError(f"{len(params)} params vs {len(states)} states")
    for p, s in zip(params, states):
        if p.grad is None:
            raise ValueError(f"adam_step: parameter {p!r} has no gradient")
        if s.first_moment.shape != p.data.shape:
            raise ValueError(
                f"adam_step: state shape {s.first_moment.shape} does not track "
                f"parameter shape {p.data.shape}")
    for p, s in zip(params, states):
        g = p.grad
        s.step_count += 1
        s.first_moment = s.beta1 * s.first_moment + (1.0 - s.beta1) * g
        s.second_moment = s.beta2 * s.second_moment + (1.0 - s.beta2) * (g * g)
        m_hat = s.first_moment / (1.0 - s.beta1 ** s.step_count)
        v_hat = s.second_moment / (1.0 - s.beta2 ** s.step_count)
        p.data -= s.lr * m_hat / (np.sqrt(v_hat) + s.epsilon)
        p.grad = None
