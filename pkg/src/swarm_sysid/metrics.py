"""Mean Field Error and steady-state descriptors."""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .state import SwarmState, Trajectory


@dataclass(frozen=True, eq=False)
class MfeSeries:
    values: np.ndarray
    dt: float
    t0: float = 0.0
    truncated: bool = False

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.size and (not np.isfinite(vals).all() or vals.min() < 0):
            raise ValueError("MFE values must be finite and nonnegative")
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return self.values.size

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self))

    def tail_mean(self, tail_frac: float = 0.2) -> float:
        return float(np.mean(self.values[tail_start(len(self), tail_frac):]))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "mfe"])
            for t, m in zip(self.times, self.values):
                w.writerow([f"{t:.17g}", f"{m:.17g}"])


@dataclass(frozen=True)
class SteadyDescriptors:
    mean_speed: float
    ring_radius_mean: float
    ring_radius_cv: float
    polarization: float

    def as_dict(self) -> dict:
        return dict(mean_speed=self.mean_speed, ring_radius_mean=self.ring_radius_mean,
                    ring_radius_cv=self.ring_radius_cv, polarization=self.polarization)


def tail_start(length: int, tail_frac: float) -> int:
    if not 0 < tail_frac <= 1:
        raise ValueError(f"tail fraction must lie in (0, 1], got {tail_frac}")
    return min(length - 1, int(np.floor(length * (1.0 - tail_frac)))) if length else 0


def _agent_mean(pos: np.ndarray) -> np.ndarray:
    # summing sorted values makes the result independent of agent order, bit for bit
    return np.sort(pos, axis=-2).sum(axis=-2) / pos.shape[-2]


def mean_field(state) -> np.ndarray:
    pos = state.positions if isinstance(state, SwarmState) else np.asarray(state)[..., :2]
    return _agent_mean(pos)


def mfe(state_true, state_pred) -> float:
    a, b = mean_field(state_true), mean_field(state_pred)
    n_true = state_true.n_agents if isinstance(state_true, SwarmState) else np.shape(state_true)[-2]
    n_pred = state_pred.n_agents if isinstance(state_pred, SwarmState) else np.shape(state_pred)[-2]
    if n_true != n_pred:
        warnings.warn(f"comparing swarms of {n_true} and {n_pred} agents", stacklevel=2)
    return float(np.hypot(*(a - b)))


def mfe_series(traj_true: Trajectory, traj_pred: Trajectory) -> MfeSeries:
    n = min(len(traj_true), len(traj_pred))
    truncated = len(traj_true) != len(traj_pred)
    if truncated:
        warnings.warn(f"trajectory lengths differ ({len(traj_true)} vs {len(traj_pred)}); "
                      f"comparing the first {n} steps", stacklevel=2)
    if traj_true.n_agents != traj_pred.n_agents:
        warnings.warn(f"comparing swarms of {traj_true.n_agents} and {traj_pred.n_agents} agents",
                      stacklevel=2)
    diff = _agent_mean(traj_true.positions[:n]) - _agent_mean(traj_pred.positions[:n])
    return MfeSeries(np.hypot(diff[:, 0], diff[:, 1]), traj_true.dt, traj_true.t0, truncated)


def read_mfe_csv(path) -> MfeSeries:
    rows = np.loadtxt(Path(path), delimiter=",", skiprows=1, ndmin=2)
    dt = float(rows[1, 0] - rows[0, 0]) if len(rows) > 1 else 1.0
    return MfeSeries(rows[:, 1], dt, float(rows[0, 0]) if len(rows) else 0.0)


# --- per-step geometry shared with regime classification -----------------

def ring_radii(data: np.ndarray) -> np.ndarray:
    """Distances ``|r_i - mean field|`` for ``(T, N, 4)`` data, shape ``(T, N)``."""
    pos = data[..., :2]
    return np.linalg.norm(pos - pos.mean(axis=-2, keepdims=True), axis=-1)


def polarization(data: np.ndarray) -> np.ndarray:
    """Per-step ``|mean_i v_i| / mean_i |v_i|``; zero where the swarm is at rest."""
    vel = data[..., 2:]
    num = np.linalg.norm(vel.mean(axis=-2), axis=-1)
    den = np.linalg.norm(vel, axis=-1).mean(axis=-1)
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def cluster_spread(data: np.ndarray) -> float:
    """Mean pairwise distance between distinct agents, averaged over steps."""
    pos = data[..., :2]
    n = pos.shape[-2]
    if n < 2:
        return 0.0
    d = np.linalg.norm(pos[:, :, None, :] - pos[:, None, :, :], axis=-1)
    return float(d.sum(axis=(1, 2)).mean() / (n * (n - 1)))


def _cv(x: np.ndarray) -> float:
    m = float(np.mean(x))
    return float(np.std(x) / m) if m > 0 else 0.0


def steady_descriptors(traj: Trajectory, tail_frac: float = 0.2) -> SteadyDescriptors:
    if len(traj) == 0:
        raise ValueError("cannot describe an empty trajectory")
    tail = traj.data[tail_start(len(traj), tail_frac):]
    radii = ring_radii(tail)
    return SteadyDescriptors(
        mean_speed=float(np.linalg.norm(tail[..., 2:], axis=-1).mean()),
        ring_radius_mean=float(radii.mean()),
        ring_radius_cv=_cv(radii),
        polarization=float(polarization(tail).mean()),
    )
