from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from src.autodiff.tensor import Tensor
from src.errors import ConfigError, DimensionError

ADAM_BETA1 = 0.5
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class AdamState:
    """First/second moments for one parameter list, in the same order as the parameters."""

    m: List[np.ndarray]
    v: List[np.ndarray]
    step: int = 0
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS

    @classmethod
    def for_params(cls, params: Sequence[Tensor], **kwargs) -> "AdamState":
        return cls(
            m=[np.zeros_like(p.data) for p in params],
            v=[np.zeros_like(p.data) for p in params],
            **kwargs,
        )

    def copy(self) -> "AdamState":
        return AdamState(
            m=[a.copy() for a in self.m],
            v=[a.copy() for a in self.v],
            step=self.step,
            beta1=self.beta1,
            beta2=self.beta2,
            eps=self.eps,
        )


def adam_step(
    params: Sequence[Tensor],
    grads: Sequence[np.ndarray],
    state: AdamState,
    lr: float,
) -> AdamState:
    """
    One bias-corrected Adam update, applied in place to `params`.

    The update is -lr * m_hat / (sqrt(v_hat) + eps). Returns the advanced state;
    the moment arrays are replaced, never mutated, so earlier snapshots stay valid.
    """
    if lr <= 0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    if not (len(params) == len(grads) == len(state.m) == len(state.v)):
        raise DimensionError(
            f"adam_step: {len(params)} params, {len(grads)} grads, {len(state.m)} moments"
        )

    t = state.step + 1
    correction1 = 1.0 - state.beta1**t
    correction2 = 1.0 - state.beta2**t
    new_m: List[np.ndarray] = []
    new_v: List[np.ndarray] = []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.shape or m.shape != p.shape:
            raise DimensionError(f"adam_step: gradient {g.shape} / moment {m.shape} vs parameter {p.shape}")
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        m_hat = m / correction1
        v_hat = v / correction2
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + state.eps)
        new_m.append(m)
        new_v.append(v)

    return AdamState(m=new_m, v=new_v, step=t, beta1=state.beta1, beta2=state.beta2, eps=state.eps)
