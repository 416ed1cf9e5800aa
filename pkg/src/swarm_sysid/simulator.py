"""Euler(-Maruyama) integration of the swarm model and trajectory splitting."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Union

import numpy as np

from .dynamics import accelerations
from .metrics import ring_radii
from .state import InitRanges, SwarmParams, SwarmState, Trajectory

BLOWUP_LIMIT = 1e6


class BlowUpError(ArithmeticError):
    """Integration produced a non-finite or runaway state."""

    def __init__(self, step: int, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step


class SteadyStateNotFound(ValueError):
    pass


NOISE_BLOCK = 1024


def noise_rng(seed) -> np.random.Generator:
    # keyed apart from the initial-condition stream of the same integer seed
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(1,)))


def _noise_scale(params: SwarmParams) -> float:
    if params.noise_scaling == "sqrt_dt":
        return params.noise_std * np.sqrt(params.dt)
    return params.noise_std * params.dt


def _advance(x: np.ndarray, params: SwarmParams, draws: np.ndarray, scale: float) -> np.ndarray:
    pos, vel = x[:, :2], x[:, 2:]
    out = np.empty_like(x)
    out[:, :2] = pos + params.dt * vel
    out[:, 2:] = vel + params.dt * accelerations(pos, vel, params.coupling) + scale * draws
    return out


def _check(x: np.ndarray, step: int) -> None:
    peak = np.abs(x).max()
    if peak <= BLOWUP_LIMIT:
        return
    if not np.isfinite(x).all():
        raise BlowUpError(step, "non-finite state")
    raise BlowUpError(step, f"state magnitude {peak:.3g} exceeds {BLOWUP_LIMIT:g}")


def euler_step(state: SwarmState, params: SwarmParams, noise_draws) -> SwarmState:
    n = state.n_agents
    draws = np.asarray(noise_draws, dtype=np.float64)
    if draws.size != 2 * n:
        raise ValueError(f"expected {2 * n} noise draws, got {draws.size}")
    x = _advance(state.as_array(), params, draws.reshape(n, 2), _noise_scale(params))
    _check(x, 1)
    return SwarmState.from_array(x, state.time + params.dt)


def simulate(params: SwarmParams, ic: SwarmState) -> Trajectory:
    """Integrate ``params.n_steps`` steps from ``ic``; returns ``n_steps + 1`` states.

    Noise is drawn step by step from one seeded stream, so a longer run with the
    same seed extends a shorter one exactly.
    """
    n = params.n_agents
    if ic.n_agents != n:
        raise ValueError(f"initial state has {ic.n_agents} agents, params expect {n}")
    rng = noise_rng(params.seed)
    scale = _noise_scale(params)
    out = np.empty((params.n_steps + 1, n, 4))
    out[0] = ic.as_array()
    # drawing a block at once yields the same sequence as one (n, 2) draw per step
    dt, a = params.dt, params.coupling
    add = np.add.reduce
    for start in range(1, params.n_steps + 1, NOISE_BLOCK):
        stop = min(start + NOISE_BLOCK, params.n_steps + 1)
        kicks = scale * rng.standard_normal((stop - start, n, 2))
        # overflow inside a block is caught below, at its first step
        with np.errstate(over="ignore", invalid="ignore"):
            for k in range(start, stop):
                prev, cur = out[k - 1], out[k]
                pos, vel = prev[:, :2], prev[:, 2:]
                acc = (1.0 - add(vel * vel, axis=1)[:, None]) * vel - a * (pos - add(pos, axis=0) / n)
                cur[:, :2] = pos + dt * vel
                cur[:, 2:] = vel + dt * acc + kicks[k - start]
        peaks = np.abs(out[start:stop]).reshape(stop - start, -1).max(axis=1)
        bad = ~(peaks <= BLOWUP_LIMIT)
        if bad.any():
            k = start + int(np.argmax(bad))
            _check(out[k], k)
    return Trajectory(out, params.dt, ic.time, params)


def sample_initial_conditions(n_agents: int, ranges: InitRanges = InitRanges(), seed: int = 0) -> SwarmState:
    rng = np.random.default_rng(int(seed))
    pos = rng.uniform(ranges.pos_box[0], ranges.pos_box[1], size=(n_agents, 2))
    vel = rng.uniform(ranges.vel_box[0], ranges.vel_box[1], size=(n_agents, 2))
    return SwarmState(pos, vel, 0.0)


def run_from_seed(params: SwarmParams, seed: int, n_steps: int = None,
                  ranges: InitRanges = InitRanges()) -> Trajectory:
    """Simulate from the initial condition and noise stream both keyed by ``seed``."""
    p = replace(params, seed=int(seed), n_steps=int(n_steps or params.n_steps))
    return simulate(p, sample_initial_conditions(p.n_agents, ranges, seed))


@dataclass(frozen=True)
class FixedIndex:
    k: int


@dataclass(frozen=True)
class AutoDetect:
    window: int = 20
    threshold: float = 0.05


SplitPolicy = Union[FixedIndex, AutoDetect]


def ring_cv_per_step(traj: Trajectory) -> np.ndarray:
    radii = ring_radii(traj.data)
    mean = radii.mean(axis=1)
    return np.divide(radii.std(axis=1), mean, out=np.zeros_like(mean), where=mean > 0)


def detect_steady_start(traj: Trajectory, window: int = 20, threshold: float = 0.05) -> int:
    """First step after which the windowed mean of per-step ring-radius cv stays below threshold."""
    cv = ring_cv_per_step(traj)
    if len(cv) < window:
        raise SteadyStateNotFound(f"ring_radius_cv: trajectory of {len(cv)} steps shorter than window {window}")
    windowed = np.convolve(cv, np.ones(window) / window, mode="valid")
    above = np.flatnonzero(windowed >= threshold)
    k = 0 if above.size == 0 else int(above[-1]) + 1
    if k >= windowed.size:
        raise SteadyStateNotFound(
            f"ring_radius_cv never settles below {threshold} over a {window}-step window "
            f"(final windowed value {windowed[-1]:.3g})")
    return k


def split_transient_steady(traj: Trajectory, policy: SplitPolicy = AutoDetect()):
    if len(traj) == 0:
        raise ValueError("cannot split an empty trajectory")
    if isinstance(policy, FixedIndex):
        k = policy.k
        if not 0 <= k <= len(traj):
            raise ValueError(f"split index {k} outside [0, {len(traj)}]")
    else:
        k = detect_steady_start(traj, policy.window, policy.threshold)
    return traj[:k], traj[k:]
