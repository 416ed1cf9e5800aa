"""Steady-state regime classification (milling / rotation / flocking)."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .metrics import _cv, cluster_spread, polarization, ring_radii, tail_start
from .state import Trajectory

MIN_SAMPLES = 10


class Regime(str, enum.Enum):
    MILLING = "Milling"
    ROTATION = "Rotation"
    FLOCKING = "Flocking"
    UNCLASSIFIED = "Unclassified"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class RegimeThresholds:
    flocking_polarization: float = 0.9
    milling_radius_cv: float = 0.2
    # mean pairwise distance relative to the ring diameter
    milling_spread_range: tuple = (0.25, 1.25)
    # rotation: spread below this fraction of the mean-field orbit radius
    rotation_spread_ratio: float = 0.25
    rotation_orbit_cv: float = 0.2
    # the mean field must sweep at least this angle (radians) around its orbit centre
    rotation_min_sweep: float = np.pi


@dataclass(frozen=True)
class RegimeLabel:
    label: Regime
    polarization: float
    ring_radius_mean: float
    ring_radius_cv: float
    cluster_spread: float
    orbit_radius: float = 0.0
    orbit_cv: float = 0.0
    orbit_sweep: float = 0.0

    def as_dict(self) -> dict:
        return {
            "regime": self.label.value,
            "polarization": self.polarization,
            "ring_radius_mean": self.ring_radius_mean,
            "ring_radius_cv": self.ring_radius_cv,
            "cluster_spread": self.cluster_spread,
            "orbit_radius": self.orbit_radius,
            "orbit_cv": self.orbit_cv,
            "orbit_sweep": self.orbit_sweep,
        }


def fit_circle(points: np.ndarray):
    """Algebraic least-squares circle through 2-D points.

    Returns ``(centre, radius)``; degenerate (collinear or coincident) input
    gives an infinite or zero radius respectively.
    """
    x, y = points[:, 0], points[:, 1]
    if np.ptp(x) == 0 and np.ptp(y) == 0:
        return points[0].copy(), 0.0
    A = np.column_stack([x, y, np.ones_like(x)])
    b = -(x * x + y * y)
    (d, e, f), _, rank, _ = np.linalg.lstsq(A, b, rcond=None)
    if rank < 3:    # collinear: a circle of infinite radius
        return points.mean(axis=0), np.inf
    centre = np.array([-d / 2, -e / 2])
    r2 = centre @ centre - f
    if not np.isfinite(r2) or r2 <= 0:
        return centre, np.inf
    return centre, float(np.sqrt(r2))


def _swept_angle(points: np.ndarray, centre: np.ndarray) -> float:
    ang = np.unwrap(np.arctan2(points[:, 1] - centre[1], points[:, 0] - centre[0]))
    return float(np.ptp(ang)) if ang.size else 0.0


def classify_regime(traj: Trajectory, window_frac: float = 0.2,
                    thresholds: RegimeThresholds = RegimeThresholds()) -> RegimeLabel:
    """Label the steady state reached over the trailing ``window_frac`` of ``traj``.

    Rotation is tested first: a revolving tight cluster is also perfectly
    polarised at every instant, so the polarisation test alone would call it
    flocking.
    """
    if len(traj) < MIN_SAMPLES:
        raise ValueError(f"trajectory too short for classification: {len(traj)} < {MIN_SAMPLES} samples")
    if not 0 < window_frac <= 1:
        raise ValueError(f"window_frac must lie in (0, 1], got {window_frac}")
    tail = traj.data[tail_start(len(traj), window_frac):]
    radii = ring_radii(tail)
    pol = float(polarization(tail).mean())
    r_mean = float(radii.mean())
    r_cv = _cv(radii)
    spread = cluster_spread(tail)

    mf = tail[..., :2].mean(axis=1)
    centre, orbit_r = fit_circle(mf)
    if np.isfinite(orbit_r) and orbit_r > 0:
        dist = np.linalg.norm(mf - centre, axis=1)
        orbit_mean = float(dist.mean())
        orbit_cv = _cv(dist)
        sweep = _swept_angle(mf, centre)
    else:
        orbit_mean, orbit_cv, sweep = 0.0, 0.0, 0.0

    th = thresholds
    if (orbit_mean > 0 and spread <= th.rotation_spread_ratio * orbit_mean
            and orbit_cv <= th.rotation_orbit_cv and sweep >= th.rotation_min_sweep):
        label = Regime.ROTATION
    elif pol >= th.flocking_polarization:
        label = Regime.FLOCKING
    elif (r_mean > 0 and r_cv <= th.milling_radius_cv
          and th.milling_spread_range[0] <= spread / (2 * r_mean) <= th.milling_spread_range[1]):
        label = Regime.MILLING
    else:
        label = Regime.UNCLASSIFIED
    return RegimeLabel(label, pol, r_mean, r_cv, spread, orbit_mean, orbit_cv, sweep)
