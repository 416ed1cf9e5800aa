"""Synthetic trajectories shared by several test modules."""
import numpy as np

from swarm_sysid.state import Trajectory


def ring_trajectory(n_agents=8, n_steps=200, dt=0.05, radius=1.0, alternate=True, centre=(0.0, 0.0)):
    """Agents evenly spaced on a circle, moving tangentially at unit speed."""
    theta0 = 2 * np.pi * np.arange(n_agents) / n_agents
    sign = np.where(np.arange(n_agents) % 2 == 0, 1.0, -1.0) if alternate else np.ones(n_agents)
    t = dt * np.arange(n_steps)[:, None]
    theta = theta0 + sign * t / radius
    data = np.empty((n_steps, n_agents, 4))
    data[..., 0] = centre[0] + radius * np.cos(theta)
    data[..., 1] = centre[1] + radius * np.sin(theta)
    data[..., 2] = -sign * np.sin(theta)
    data[..., 3] = sign * np.cos(theta)
    return Trajectory(data, dt)


def rotating_cluster(n_agents=6, n_steps=500, revolutions=5, spread=0.01, orbit=1.0, seed=0):
    """A rigid tight cluster whose centroid revolves on a circle of radius ``orbit``."""
    rng = np.random.default_rng(seed)
    offsets = rng.uniform(-spread, spread, size=(n_agents, 2))
    offsets -= offsets.mean(axis=0)
    dt = 2 * np.pi * revolutions / n_steps
    phi = dt * np.arange(n_steps)
    c = orbit * np.stack([np.cos(phi), np.sin(phi)], axis=1)
    v = orbit * np.stack([-np.sin(phi), np.cos(phi)], axis=1)
    data = np.empty((n_steps, n_agents, 4))
    data[..., :2] = c[:, None, :] + offsets
    data[..., 2:] = v[:, None, :]
    return Trajectory(data, dt)


def flock_trajectory(n_agents=5, n_steps=100, dt=0.05, seed=0):
    rng = np.random.default_rng(seed)
    start = rng.uniform(-1, 1, size=(n_agents, 2))
    t = dt * np.arange(n_steps)[:, None, None]
    data = np.empty((n_steps, n_agents, 4))
    data[..., :2] = start + t * np.array([1.0, 0.0])
    data[..., 2:] = np.array([1.0, 0.0])
    return Trajectory(data, dt)


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))
