"""Ground-truth right-hand side of the planar swarm model.

Each agent obeys

    r_i' = v_i
    v_i' = (1 - |v_i|^2) v_i - (a / N) * sum_j (r_i - r_j) + eta_i

The noise term is added by the integrator, not here.
"""
from __future__ import annotations

import numpy as np

from .state import StateDerivative, SwarmParams, SwarmState


def intrinsic_accel(v) -> np.ndarray:
    """Self-propulsion term ``(1 - |v|^2) v``; works row-wise on ``(..., 2)`` input."""
    v = np.asarray(v, dtype=np.float64)
    return (1.0 - np.sum(v * v, axis=-1, keepdims=True)) * v


def interaction_accel(i: int, state: SwarmState, params: SwarmParams) -> np.ndarray:
    n = state.n_agents
    if not 0 <= i < n:
        raise IndexError(f"agent index {i} out of range for {n} agents")
    r = state.positions
    # j == i contributes a zero difference
    return -(params.coupling / n) * np.sum(r[i] - r, axis=0)


def accelerations(positions: np.ndarray, velocities: np.ndarray, coupling: float) -> np.ndarray:
    """Vectorised deterministic acceleration for ``(..., N, 2)`` arrays."""
    centre = positions.mean(axis=-2, keepdims=True)
    return intrinsic_accel(velocities) - coupling * (positions - centre)


def swarm_rhs(state: SwarmState, params: SwarmParams) -> StateDerivative:
    return StateDerivative(state.velocities.copy(),
                           accelerations(state.positions, state.velocities, params.coupling))


def swarm_rhs_array(x: np.ndarray, coupling: float) -> np.ndarray:
    """Same field on a raw ``(..., N, 4)`` array, returned in the same layout."""
    pos, vel = x[..., :2], x[..., 2:]
    return np.concatenate([vel, accelerations(pos, vel, coupling)], axis=-1)
