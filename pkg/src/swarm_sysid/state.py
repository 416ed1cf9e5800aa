"""Core value types: swarm parameters, instantaneous states and sampled trajectories.

Per-agent features are always ordered ``[x, y, vx, vy]``; a trajectory stores
its states as one ``(T, N, 4)`` float64 array.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

NOISE_SCALINGS = ("sqrt_dt", "dt")


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class SwarmParams:
    n_agents: int = 32
    coupling: float = 1.0
    noise_std: float = 1e-3
    dt: float = 0.05
    n_steps: int = 3000
    seed: int = 0
    noise_scaling: str = "sqrt_dt"

    def __post_init__(self):
        if int(self.n_agents) < 1:
            raise ValueError(f"n_agents must be >= 1, got {self.n_agents}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.coupling < 0:
            raise ValueError(f"coupling must be nonnegative, got {self.coupling}")
        if self.noise_std < 0:
            raise ValueError(f"noise_std must be nonnegative, got {self.noise_std}")
        if int(self.n_steps) < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")
        if self.noise_scaling not in NOISE_SCALINGS:
            raise ValueError(f"noise_scaling must be one of {NOISE_SCALINGS}, got {self.noise_scaling!r}")

    def as_dict(self) -> dict:
        return {
            "n_agents": self.n_agents,
            "coupling": self.coupling,
            "noise_std": self.noise_std,
            "dt": self.dt,
            "n_steps": self.n_steps,
            "seed": self.seed,
            "noise_scaling": self.noise_scaling,
        }


@dataclass(frozen=True, eq=False)
class SwarmState:
    positions: np.ndarray
    velocities: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        pos = _frozen(self.positions).reshape(-1, 2)
        vel = _frozen(self.velocities).reshape(-1, 2)
        if pos.shape != vel.shape:
            raise ValueError(f"positions {pos.shape} and velocities {vel.shape} differ in length")
        if not (np.isfinite(pos).all() and np.isfinite(vel).all()):
            raise ValueError("state contains non-finite components")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "velocities", vel)
        object.__setattr__(self, "time", float(self.time))

    @property
    def n_agents(self) -> int:
        return self.positions.shape[0]

    def as_array(self) -> np.ndarray:
        """``(N, 4)`` array of ``[x, y, vx, vy]`` rows."""
        return np.hstack([self.positions, self.velocities])

    @classmethod
    def from_array(cls, arr, time: float = 0.0) -> "SwarmState":
        arr = np.asarray(arr, dtype=np.float64).reshape(-1, 4)
        return cls(arr[:, :2], arr[:, 2:], time)

    def __eq__(self, other):
        if not isinstance(other, SwarmState):
            return NotImplemented
        return (self.time == other.time
                and np.array_equal(self.positions, other.positions)
                and np.array_equal(self.velocities, other.velocities))


@dataclass(frozen=True, eq=False)
class StateDerivative:
    d_positions: np.ndarray
    d_velocities: np.ndarray

    def __post_init__(self):
        dp = _frozen(self.d_positions).reshape(-1, 2)
        dv = _frozen(self.d_velocities).reshape(-1, 2)
        if dp.shape != dv.shape:
            raise ValueError(f"d_positions {dp.shape} and d_velocities {dv.shape} differ in length")
        object.__setattr__(self, "d_positions", dp)
        object.__setattr__(self, "d_velocities", dv)

    def as_array(self) -> np.ndarray:
        return np.hstack([self.d_positions, self.d_velocities])


@dataclass(frozen=True)
class InitRanges:
    pos_box: tuple = (-1.0, 1.0)
    vel_box: tuple = (-1.0, 1.0)

    def __post_init__(self):
        for name in ("pos_box", "vel_box"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name}: min {lo} exceeds max {hi}")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Uniformly sampled swarm states.

    ``data[k]`` is the ``(N, 4)`` state at time ``t0 + k * dt``.  An empty
    trajectory keeps its agent count in ``data.shape[1]``.
    """

    data: np.ndarray
    dt: float
    t0: float = 0.0
    params_used: Optional[SwarmParams] = field(default=None)

    def __post_init__(self):
        data = _frozen(self.data)
        if data.ndim != 3 or data.shape[2] != 4:
            raise ValueError(f"trajectory data must have shape (T, N, 4), got {data.shape}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "t0", float(self.t0))

    @classmethod
    def from_states(cls, states: Sequence[SwarmState], dt: float, params_used=None) -> "Trajectory":
        if not states:
            raise ValueError("from_states needs at least one state (use Trajectory.empty)")
        data = np.stack([s.as_array() for s in states])
        return cls(data, dt, states[0].time, params_used)

    @classmethod
    def empty(cls, n_agents: int, dt: float, t0: float = 0.0, params_used=None) -> "Trajectory":
        return cls(np.zeros((0, n_agents, 4)), dt, t0, params_used)

    def __len__(self) -> int:
        return self.data.shape[0]

    @property
    def n_agents(self) -> int:
        return self.data.shape[1]

    @property
    def positions(self) -> np.ndarray:
        return self.data[:, :, :2]

    @property
    def velocities(self) -> np.ndarray:
        return self.data[:, :, 2:]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self))

    @property
    def states(self) -> list:
        return list(self)

    def flat(self) -> np.ndarray:
        """``(T, 4N)`` view with agents in index order."""
        return self.data.reshape(len(self), -1)

    def __iter__(self) -> Iterator[SwarmState]:
        for k in range(len(self)):
            yield self[k]

    def __getitem__(self, key):
        if isinstance(key, slice):
            start, stop, step = key.indices(len(self))
            if step != 1:
                return Trajectory(self.data[key], self.dt * step, self.t0 + start * self.dt, self.params_used)
            return Trajectory(self.data[start:max(start, stop)], self.dt, self.t0 + start * self.dt,
                              self.params_used)
        k = int(key)
        if k < 0:
            k += len(self)
        if not 0 <= k < len(self):
            raise IndexError(f"state index {key} out of range for trajectory of length {len(self)}")
        return SwarmState.from_array(self.data[k], self.t0 + k * self.dt)

    def concat(self, other: "Trajectory") -> "Trajectory":
        if other.n_agents != self.n_agents:
            raise ValueError(f"cannot join trajectories with {self.n_agents} and {other.n_agents} agents")
        if len(self) == 0:
            return other
        return Trajectory(np.concatenate([self.data, other.data]), self.dt, self.t0, self.params_used)
