"""Window folding, the four training methodologies, and trajectory CSV files."""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, List, Optional

import numpy as np

from .simulator import run_from_seed
from .state import InitRanges, SwarmParams, Trajectory


@dataclass(frozen=True, eq=False)
class WindowedSample:
    input: np.ndarray   # (window_len, N, 4)
    target: np.ndarray  # (N, 4)

    @property
    def flat_input(self) -> np.ndarray:
        return self.input.reshape(self.input.shape[0], -1)

    @property
    def flat_target(self) -> np.ndarray:
        return self.target.reshape(-1)


def window_arrays(traj: Trajectory, window_len: int, horizon: int = 1):
    """Stacked ``(S, window_len, 4N)`` inputs and ``(S, 4N)`` targets.

    Sample ``k`` reads steps ``[k, k + window_len)`` and targets step
    ``k + window_len + horizon - 1``.
    """
    if window_len < 1 or horizon < 1:
        raise ValueError("window_len and horizon must be positive")
    n_samples = len(traj) - window_len - horizon + 1
    if n_samples < 1:
        raise ValueError(f"trajectory of length {len(traj)} too short for window {window_len}"
                         f" and horizon {horizon}")
    flat = traj.flat()
    idx = np.arange(n_samples)[:, None] + np.arange(window_len)[None, :]
    return flat[idx], flat[window_len + horizon - 1:window_len + horizon - 1 + n_samples]


def fold_windows(traj: Trajectory, window_len: int = 5) -> List[WindowedSample]:
    X, Y = window_arrays(traj, window_len)
    n = traj.n_agents
    return [WindowedSample(x.reshape(window_len, n, 4), y.reshape(n, 4)) for x, y in zip(X, Y)]


def stack_samples(samples: List[WindowedSample]):
    return (np.stack([s.flat_input for s in samples]), np.stack([s.flat_target for s in samples]))


def autoregressive_rollout(predict: Callable[[np.ndarray], np.ndarray], seed_window: Trajectory,
                           n_steps: int) -> Trajectory:
    """Slide a window forward by feeding each prediction back as the newest step.

    ``predict`` maps a ``(window_len, 4N)`` window to the next ``4N`` state.
    The returned trajectory holds only the ``n_steps`` predictions.
    """
    n = seed_window.n_agents
    t_next = seed_window.t0 + len(seed_window) * seed_window.dt
    window = seed_window.flat().copy()
    out = np.empty((n_steps, n, 4))
    for k in range(n_steps):
        nxt = np.asarray(predict(window), dtype=np.float64).reshape(-1)
        if nxt.size != 4 * n:
            raise ValueError(f"predictor returned {nxt.size} values, expected {4 * n}")
        if not np.isfinite(nxt).all():
            raise FloatingPointError(f"non-finite prediction at rollout step {k}")
        out[k] = nxt.reshape(n, 4)
        window = np.vstack([window[1:], nxt[None, :]])
    return Trajectory(out, seed_window.dt, t_next, seed_window.params_used)


class Phase(str, enum.Enum):
    TRANSIENT = "transient"
    STEADY = "steady"


class ICMatch(str, enum.Enum):
    SAME = "same"
    DIFFERENT = "different"


@dataclass(frozen=True)
class Methodology:
    phase: Phase
    ic_match: ICMatch

    def __post_init__(self):
        object.__setattr__(self, "phase", Phase(self.phase))
        object.__setattr__(self, "ic_match", ICMatch(self.ic_match))

    @property
    def name(self) -> str:
        return f"{self.phase.value}-{self.ic_match.value}"


ALL_METHODOLOGIES = tuple(Methodology(p, i) for p in Phase for i in ICMatch)


@dataclass(frozen=True)
class SplitSpec:
    train_len: int
    test_len: int
    window_len: int = 5

    def __post_init__(self):
        if min(self.train_len, self.test_len, self.window_len) < 1:
            raise ValueError("split lengths must be positive")
        if self.train_len < self.window_len + 1:
            raise ValueError(f"train_len {self.train_len} must be at least window_len + 1 = {self.window_len + 1}")


def protocol_split(phase: Phase, window_len: int = 5) -> SplitSpec:
    """Default lengths: steady 2000/1000 of a 3000-state run, transient 150/100 of 250."""
    if Phase(phase) is Phase.STEADY:
        return SplitSpec(2000, 1000, window_len)
    return SplitSpec(150, 100, window_len)


@dataclass(frozen=True, eq=False)
class MethodologyData:
    methodology: Methodology
    split: SplitSpec
    train: Trajectory
    test: Trajectory
    seed_window: Trajectory
    train_X: np.ndarray
    train_Y: np.ndarray

    @property
    def train_samples(self) -> List[WindowedSample]:
        return fold_windows(self.train, self.split.window_len)


def build_methodology(methodology: Methodology, sim_params: SwarmParams, train_seed: int,
                      test_seed: Optional[int] = None, window_len: int = 5,
                      split: Optional[SplitSpec] = None,
                      ranges: InitRanges = InitRanges()) -> MethodologyData:
    """Simulate and split data for one of the four training approaches.

    The training run's first ``train_len`` states form the training set.  The
    test trajectory is the ``test_len`` states that follow: in the training run
    itself for ``same``, or in a run from the fresh seed ``test_seed`` for
    ``different``.  The rollout seed window is the ``window_len`` states just
    before the test segment of that run.
    """
    split = split or protocol_split(methodology.phase, window_len)
    if split.window_len != window_len:
        split = replace(split, window_len=window_len)
    total = split.train_len + split.test_len
    train_run = run_from_seed(sim_params, train_seed, total - 1, ranges)
    if methodology.ic_match is ICMatch.SAME:
        test_run = train_run
    else:
        if test_seed is None:
            raise ValueError("methodology with different initial conditions needs a test_seed")
        test_run = train_run if test_seed == train_seed else run_from_seed(sim_params, test_seed, total - 1, ranges)
    train = train_run[:split.train_len]
    test = test_run[split.train_len:]
    seed_window = test_run[split.train_len - window_len:split.train_len]
    X, Y = window_arrays(train, window_len)
    return MethodologyData(methodology, split, train, test, seed_window, X, Y)


# --- CSV persistence ------------------------------------------------------

class TrajectoryCsvError(ValueError):
    pass


def csv_header(n_agents: int) -> List[str]:
    cols = ["t"]
    for i in range(n_agents):
        cols += [f"x{i}", f"y{i}", f"vx{i}", f"vy{i}"]
    return cols


def meta_path(path) -> Path:
    return Path(path).with_suffix(".meta")


def write_meta(path, values: dict) -> None:
    with open(path, "w") as fh:
        for key, val in values.items():
            if isinstance(val, float):
                val = f"{val:.17g}"
            fh.write(f"{key}={val}\n")


def read_meta(path) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                key, _, val = line.partition("=")
                out[key.strip()] = val.strip()
    return out


def write_csv(traj: Trajectory, path, extra_meta: Optional[dict] = None) -> None:
    """Write ``traj`` as CSV plus a ``.meta`` key=value sidecar."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(csv_header(traj.n_agents))
        for t, row in zip(traj.times, traj.flat()):
            w.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in row])
    meta = {"n_agents": traj.n_agents, "dt": traj.dt, "t0": traj.t0, "n_states": len(traj)}
    if traj.params_used is not None:
        meta.update({f"param.{k}": v for k, v in traj.params_used.as_dict().items()})
    meta.update(extra_meta or {})
    write_meta(meta_path(path), meta)


def _params_from_meta(meta: dict) -> Optional[SwarmParams]:
    keys = {k[len("param."):]: v for k, v in meta.items() if k.startswith("param.")}
    if not keys:
        return None
    casts = {"n_agents": int, "n_steps": int, "seed": int, "noise_scaling": str}
    return SwarmParams(**{k: casts.get(k, float)(v) for k, v in keys.items()})


def read_csv(path) -> Trajectory:
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise TrajectoryCsvError(f"{path}: empty file")
    header = rows[0]
    n_cols = len(header)
    if (n_cols - 1) % 4 or n_cols < 5:
        raise TrajectoryCsvError(f"{path}: malformed header with {n_cols} columns")
    n_agents = (n_cols - 1) // 4
    if header != csv_header(n_agents):
        bad = next(i for i, (a, b) in enumerate(zip(header, csv_header(n_agents))) if a != b)
        raise TrajectoryCsvError(f"{path}: malformed header at column {bad}: {header[bad]!r}")
    values = np.empty((len(rows) - 1, n_cols))
    for r, row in enumerate(rows[1:], start=1):
        if len(row) != n_cols:
            raise TrajectoryCsvError(f"{path}: row {r} has {len(row)} columns, expected {n_cols}")
        for c, cell in enumerate(row):
            try:
                values[r - 1, c] = float(cell)
            except ValueError:
                raise TrajectoryCsvError(f"{path}: row {r}, column {c} ({header[c]}): "
                                         f"non-numeric cell {cell!r}") from None
    meta = read_meta(meta_path(path)) if meta_path(path).exists() else {}
    if "dt" in meta:
        dt = float(meta["dt"])
    elif len(values) > 1:
        dt = float((values[-1, 0] - values[0, 0]) / (len(values) - 1))
    else:
        raise TrajectoryCsvError(f"{path}: cannot infer dt from a single row without a .meta sidecar")
    t0 = float(meta["t0"]) if "t0" in meta else (float(values[0, 0]) if len(values) else 0.0)
    data = values[:, 1:].reshape(len(values), n_agents, 4)
    return Trajectory(data, dt, t0, _params_from_meta(meta))
