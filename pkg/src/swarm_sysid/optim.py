"""SGD and Adam on flat parameter vectors."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np


@dataclass(frozen=True, eq=False)
class OptimizerState:
    kind: str
    learning_rate: float
    m: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning rate must be positive, got {self.learning_rate}")


def make_optimizer(kind: str, learning_rate: float, n_params: int) -> OptimizerState:
    kind = kind.lower()
    if kind == "adam":
        return OptimizerState(kind, learning_rate, np.zeros(n_params), np.zeros(n_params))
    return OptimizerState(kind, learning_rate)


def optimizer_step(state: OptimizerState, params: np.ndarray, grads: np.ndarray) -> Tuple[np.ndarray, OptimizerState]:
    """Return updated parameters and optimiser state; inputs are not modified."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape:
        raise ValueError(f"parameter shape {params.shape} does not match gradient shape {grads.shape}")
    lr = state.learning_rate
    if state.kind == "sgd":
        return params - lr * grads, replace(state, step=state.step + 1)
    if state.m is None or state.m.shape != params.shape:
        raise ValueError(f"Adam moments shaped {None if state.m is None else state.m.shape}, "
                         f"parameters {params.shape}")
    t = state.step + 1
    m = state.beta1 * state.m + (1 - state.beta1) * grads
    v = state.beta2 * state.v + (1 - state.beta2) * grads * grads
    m_hat = m / (1 - state.beta1 ** t)
    v_hat = v / (1 - state.beta2 ** t)
    new = params - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new, replace(state, m=m, v=v, step=t)
