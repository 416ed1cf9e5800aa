"""Least-squares sliding-window linear forecaster."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import autoregressive_rollout, window_arrays
from .state import Trajectory

DEFAULT_IN_SAMPLES = 10
DEFAULT_HORIZON = 1


@dataclass(frozen=True, eq=False)
class OlsModel:
    """``weights`` has shape ``(m * 4N + 1, 4N)``; the last row is the bias."""

    weights: np.ndarray
    in_samples: int
    horizon: int
    n_agents: int
    rank_deficient: bool = False

    def __post_init__(self):
        if self.in_samples < 1 or self.horizon < 1:
            raise ValueError("in_samples and horizon must be positive")
        expected = (self.in_samples * 4 * self.n_agents + 1, 4 * self.n_agents)
        if self.weights.shape != expected:
            raise ValueError(f"weights shape {self.weights.shape}, expected {expected}")
        if not np.isfinite(self.weights).all():
            raise ValueError("non-finite OLS weights")

    def predict(self, window) -> np.ndarray:
        """Predict from ``(m, 4N)`` windows (or a batch ``(S, m, 4N)``)."""
        x = np.asarray(window, dtype=np.float64)
        single = x.ndim == 2
        x = x.reshape(1 if single else len(x), -1)
        out = x @ self.weights[:-1] + self.weights[-1]
        return out[0] if single else out


def ols_samples(traj: Trajectory, in_samples: int = DEFAULT_IN_SAMPLES, horizon: int = DEFAULT_HORIZON):
    """``(S, m, 4N)`` windows paired with the state ``horizon`` steps past each window."""
    return window_arrays(traj, in_samples, horizon)


def fit_ols(X, Y, ridge: float = 0.0, horizon: int = DEFAULT_HORIZON) -> OlsModel:
    """Minimise ``sum ||W^T [x, 1] - y||^2 + ridge * ||W_lin||^2`` (the bias row is not penalised).

    Solved with an SVD-based least-squares routine, which returns the
    minimum-norm solution when the design is rank deficient.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim != 3:
        raise ValueError(f"expected windows of shape (S, m, 4N), got {X.shape}")
    if ridge < 0:
        raise ValueError(f"ridge must be nonnegative, got {ridge}")
    n_samples, m, width = X.shape
    A = np.hstack([X.reshape(n_samples, m * width), np.ones((n_samples, 1))])
    B = Y.reshape(n_samples, width)
    if ridge > 0:
        reg = np.sqrt(ridge) * np.eye(A.shape[1])[:-1]
        A = np.vstack([A, reg])
        B = np.vstack([B, np.zeros((reg.shape[0], width))])
    W, _, rank, _ = np.linalg.lstsq(A, B, rcond=None)
    deficient = rank < A.shape[1]
    if deficient:
        warnings.warn(f"OLS design has rank {rank} < {A.shape[1]} features; using the minimum-norm solution",
                      stacklevel=2)
    return OlsModel(W, m, horizon, width // 4, deficient)


def fit_ols_trajectory(traj: Trajectory, in_samples: int = DEFAULT_IN_SAMPLES, horizon: int = DEFAULT_HORIZON,
                       ridge: float = 0.0) -> OlsModel:
    X, Y = ols_samples(traj, in_samples, horizon)
    return fit_ols(X, Y, ridge, horizon)


def ols_rollout(model: OlsModel, seed_window: Trajectory, n_steps: int) -> Trajectory:
    if model.horizon != 1:
        raise ValueError("autoregressive rollout needs a one-step model (horizon 1)")
    if len(seed_window) != model.in_samples or seed_window.n_agents != model.n_agents:
        raise ValueError(f"seed window of {len(seed_window)} states x {seed_window.n_agents} agents does not "
                         f"match model ({model.in_samples} x {model.n_agents})")
    return autoregressive_rollout(model.predict, seed_window, n_steps)


def save_ols(model: OlsModel, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"# m={model.in_samples},n={model.horizon},N={model.n_agents}\n")
        for row in model.weights:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def load_ols(path) -> OlsModel:
    path = Path(path)
    with open(path) as fh:
        first = fh.readline()
    if not first.startswith("# "):
        raise ValueError(f"{path}: missing '# m=..,n=..,N=..' header")
    head = dict(kv.split("=") for kv in first[2:].strip().split(","))
    W = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    return OlsModel(W, int(head["m"]), int(head["n"]), int(head["N"]))
