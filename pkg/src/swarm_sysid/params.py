"""Flat parameter vectors with a named layout, initialisation and file format.

File layout: one JSON header line (magic, descriptor, array layout, buffers)
followed by the raw little-endian float64 parameter vector.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .autodiff import Tape, Var

MAGIC = "swarm-sysid-params/1"


@dataclass(eq=False)
class ModelParams:
    layout: List[Tuple[str, Tuple[int, ...]]]
    flat: np.ndarray
    descriptor: dict = field(default_factory=dict)
    buffers: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.flat = np.asarray(self.flat, dtype=np.float64).reshape(-1)
        need = sum(int(np.prod(s)) for _, s in self.layout)
        if self.flat.size != need:
            raise ValueError(f"layout needs {need} values, flat vector has {self.flat.size}")

    @property
    def size(self) -> int:
        return self.flat.size

    def arrays(self, flat: np.ndarray = None) -> Dict[str, np.ndarray]:
        """Named views into ``flat`` (defaults to the stored vector)."""
        flat = self.flat if flat is None else flat
        out, i = {}, 0
        for name, shape in self.layout:
            n = int(np.prod(shape))
            out[name] = flat[i:i + n].reshape(shape)
            i += n
        return out

    def on_tape(self, tape: Tape) -> Tuple[Dict[str, Var], List[Var]]:
        """Leaf variables for every array, in layout order."""
        leaves = [tape.var(a) for a in self.arrays().values()]
        return dict(zip((n for n, _ in self.layout), leaves)), leaves

    def with_flat(self, flat: np.ndarray) -> "ModelParams":
        return ModelParams(list(self.layout), np.array(flat, dtype=np.float64), dict(self.descriptor),
                           {k: v.copy() for k, v in self.buffers.items()})

    def copy(self) -> "ModelParams":
        return self.with_flat(self.flat)


def flatten_grads(grads: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate([np.asarray(g).reshape(-1) for g in grads])


def init_params(layout: Sequence[Tuple[str, Tuple[int, ...]]], fan_in: Dict[str, int], seed: int,
                descriptor: dict = None) -> ModelParams:
    """Uniform ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]`` draws per array, seeded."""
    rng = np.random.default_rng(int(seed))
    chunks = []
    for name, shape in layout:
        bound = 1.0 / np.sqrt(fan_in[name])
        chunks.append(rng.uniform(-bound, bound, size=int(np.prod(shape))))
    return ModelParams([(n, tuple(s)) for n, s in layout], np.concatenate(chunks), dict(descriptor or {}))


def save_params(params: ModelParams, path) -> None:
    header = {
        "magic": MAGIC,
        "descriptor": params.descriptor,
        "layout": [[name, list(shape)] for name, shape in params.layout],
        "buffers": {k: [float(x) for x in v.reshape(-1)] for k, v in params.buffers.items()},
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(params.flat.astype("<f8").tobytes())


def load_params(path) -> ModelParams:
    raw = Path(path).read_bytes()
    line, _, body = raw.partition(b"\n")
    try:
        header = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: not a parameter file") from exc
    if header.get("magic") != MAGIC:
        raise ValueError(f"{path}: unexpected magic {header.get('magic')!r}")
    layout = [(name, tuple(shape)) for name, shape in header["layout"]]
    flat = np.frombuffer(body, dtype="<f8").astype(np.float64)
    buffers = {k: np.array(v, dtype=np.float64) for k, v in header["buffers"].items()}
    return ModelParams(layout, flat, header["descriptor"], buffers)
