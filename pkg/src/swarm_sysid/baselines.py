"""One-step deep forecasters (MLP, RNN, 1-D CNN), their training loop and rollout."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from . import autodiff as ad
from .dataset import autoregressive_rollout
from .optim import make_optimizer, optimizer_step
from .params import ModelParams, flatten_grads, init_params
from .state import Trajectory


class ModelKind(str, enum.Enum):
    MLP = "mlp"
    RNN = "rnn"
    CNN = "cnn"


# (filter, padding, stride) per convolution layer
DEFAULT_CONV = ((5, 2, 2), (5, 2, 2), (3, 1, 1))


class TrainingDiverged(FloatingPointError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")
        self.epoch = epoch


@dataclass(frozen=True)
class ForecasterSpec:
    kind: ModelKind
    n_agents: int
    window_len: int = 5
    hidden: int = 256
    rnn_layers: int = 1
    conv_layers: Tuple[Tuple[int, int, int], ...] = DEFAULT_CONV

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))
        object.__setattr__(self, "conv_layers", tuple(tuple(int(v) for v in c) for c in self.conv_layers))
        if self.rnn_layers < 1 or self.hidden < 1 or self.window_len < 1:
            raise ValueError("hidden, rnn_layers and window_len must be positive")
        if self.kind is ModelKind.CNN and self.conv_out_length() < 1:
            raise ValueError(f"conv stack {self.conv_layers} leaves no output for window {self.window_len}")

    @property
    def io_width(self) -> int:
        return 4 * self.n_agents

    def conv_out_length(self) -> int:
        length = self.window_len
        for k, p, s in self.conv_layers:
            length = ad.conv1d_length(length, k, p, s)
        return length

    def descriptor(self) -> dict:
        return {"kind": self.kind.value, "n_agents": self.n_agents, "window_len": self.window_len,
                "hidden": self.hidden, "rnn_layers": self.rnn_layers,
                "conv_layers": [list(c) for c in self.conv_layers]}

    @classmethod
    def from_descriptor(cls, d: dict) -> "ForecasterSpec":
        return cls(d["kind"], int(d["n_agents"]), int(d["window_len"]), int(d["hidden"]),
                   int(d["rnn_layers"]), tuple(tuple(c) for c in d["conv_layers"]))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    epochs: int
    optimizer: str = "sgd"
    batch_size: Optional[int] = 32    # None: full batch
    seed: int = 0
    standardize: bool = False

    def __post_init__(self):
        if self.epochs < 1 or not self.learning_rate > 0:
            raise ValueError("epochs and learning_rate must be positive")


DEFAULT_LR = {ModelKind.MLP: 0.001, ModelKind.RNN: 0.005, ModelKind.CNN: 0.005}
DEFAULT_EPOCHS = {ModelKind.MLP: 500, ModelKind.RNN: 50, ModelKind.CNN: 50}


def default_train_config(kind, **overrides) -> TrainConfig:
    kind = ModelKind(kind)
    cfg = dict(learning_rate=DEFAULT_LR[kind], epochs=DEFAULT_EPOCHS[kind])
    cfg.update(overrides)
    return TrainConfig(**cfg)


def _layout(spec: ForecasterSpec):
    io, h, w = spec.io_width, spec.hidden, spec.window_len
    if spec.kind is ModelKind.MLP:
        layout = [("W1", (w * io, h)), ("b1", (h,)), ("W2", (h, io)), ("b2", (io,))]
        fan = {"W1": w * io, "b1": w * io, "W2": h, "b2": h}
    elif spec.kind is ModelKind.RNN:
        layout, fan = [], {}
        for layer in range(spec.rnn_layers):
            d_in = io if layer == 0 else h
            for name, shape in ((f"W_ih{layer}", (d_in, h)), (f"W_hh{layer}", (h, h)), (f"b_h{layer}", (h,))):
                layout.append((name, shape))
                fan[name] = h
        layout += [("W_out", (h, io)), ("b_out", (io,))]
        fan.update(W_out=h, b_out=h)
    else:
        layout, fan = [], {}
        for layer, (k, _, _) in enumerate(spec.conv_layers):
            layout += [(f"conv{layer}", (io, io, k)), (f"conv_b{layer}", (io,))]
            fan[f"conv{layer}"] = fan[f"conv_b{layer}"] = io * k
        flat_in = io * spec.conv_out_length()
        layout += [("W_head", (flat_in, io)), ("b_head", (io,))]
        fan.update(W_head=flat_in, b_head=flat_in)
    return layout, fan


def init_forecaster(spec: ForecasterSpec, seed: int = 0) -> ModelParams:
    layout, fan = _layout(spec)
    return init_params(layout, fan, seed, spec.descriptor())


def _graph(spec: ForecasterSpec, p: dict, X: ad.Var) -> ad.Var:
    """Batched forward pass, ``X`` of shape ``(B, window_len, 4N)``."""
    batch = X.shape[0]
    if spec.kind is ModelKind.MLP:
        hidden = ad.tanh(ad.linear(ad.reshape(X, (batch, -1)), p["W1"], p["b1"]))
        return ad.linear(hidden, p["W2"], p["b2"])
    if spec.kind is ModelKind.RNN:
        seq = [X[:, t, :] for t in range(spec.window_len)]
        for layer in range(spec.rnn_layers):
            h = None
            states = []
            for x_t in seq:
                pre = ad.linear(x_t, p[f"W_ih{layer}"], p[f"b_h{layer}"])
                if h is not None:
                    pre = pre + h @ p[f"W_hh{layer}"]
                h = ad.tanh(pre)
                states.append(h)
            seq = states
        return ad.linear(seq[-1], p["W_out"], p["b_out"])
    z = ad.transpose(X, (0, 2, 1))      # channels = state features, convolving over time
    for layer, (_, pad, stride) in enumerate(spec.conv_layers):
        z = ad.relu(ad.conv1d(z, p[f"conv{layer}"], p[f"conv_b{layer}"], pad, stride))
    return ad.linear(ad.reshape(z, (batch, -1)), p["W_head"], p["b_head"])


def _check_input(spec: ForecasterSpec, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 2
    if single:
        X = X[None]
    if X.shape[1:] != (spec.window_len, spec.io_width):
        raise ValueError(f"window shape {X.shape[1:]} does not match model ({spec.window_len}, {spec.io_width})")
    return X


def _normalise(params: ModelParams, X: np.ndarray) -> np.ndarray:
    if "feature_mean" not in params.buffers:
        return X
    return (X - params.buffers["feature_mean"]) / params.buffers["feature_std"]


def _denormalise(params: ModelParams, Y: np.ndarray) -> np.ndarray:
    if "feature_mean" not in params.buffers:
        return Y
    return Y * params.buffers["feature_std"] + params.buffers["feature_mean"]


def forward(spec: ForecasterSpec, params: ModelParams, window) -> np.ndarray:
    """Predict the next flattened state for one ``(window_len, 4N)`` window or a batch."""
    X = np.asarray(window, dtype=np.float64)
    single = X.ndim == 2
    X = _check_input(spec, X)
    tape = ad.Tape()
    p, _ = params.on_tape(tape)
    out = _denormalise(params, _graph(spec, p, tape.const(_normalise(params, X))).value)
    return out[0] if single else out


def loss_and_grad(spec: ForecasterSpec, params: ModelParams, X: np.ndarray, Y: np.ndarray,
                  flat: np.ndarray = None) -> Tuple[float, np.ndarray]:
    tape = ad.Tape()
    arrays = params.arrays(params.flat if flat is None else flat)
    leaves = [tape.var(a) for a in arrays.values()]
    p = dict(zip(arrays.keys(), leaves))
    loss = ad.mse(_graph(spec, p, tape.const(X)), tape.const(Y))
    return float(loss.value), flatten_grads(tape.backward(loss, leaves))


def train(spec: ForecasterSpec, X: np.ndarray, Y: np.ndarray, config: TrainConfig,
          init: ModelParams = None) -> Tuple[ModelParams, List[float]]:
    """Fit on windows ``X (S, w, 4N)`` and next states ``Y (S, 4N)``.

    ``loss_history[e]`` is the sample-weighted mean minibatch loss seen during
    epoch ``e`` (each minibatch evaluated before its update).
    """
    X = _check_input(spec, X)
    Y = np.asarray(Y, dtype=np.float64).reshape(len(X), spec.io_width)
    if len(X) == 0:
        raise ValueError("empty training set")
    init_seq, shuffle_seq = np.random.SeedSequence(int(config.seed)).spawn(2)
    params = init or init_forecaster(spec, int(init_seq.generate_state(1)[0]))
    params = params.copy()
    if config.standardize:
        flat_states = np.concatenate([X.reshape(-1, spec.io_width), Y])
        std = flat_states.std(axis=0)
        params.buffers = {"feature_mean": flat_states.mean(axis=0), "feature_std": np.where(std > 0, std, 1.0)}
    Xn, Yn = _normalise(params, X), _normalise(params, Y)
    rng = np.random.default_rng(shuffle_seq)
    opt = make_optimizer(config.optimizer, config.learning_rate, params.size)
    flat = params.flat.copy()
    batch = config.batch_size or len(X)
    history = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(X)) if batch < len(X) else np.arange(len(X))
        total = 0.0
        for start in range(0, len(X), batch):
            idx = order[start:start + batch]
            loss, grad = loss_and_grad(spec, params, Xn[idx], Yn[idx], flat)
            if not np.isfinite(loss) or not np.isfinite(grad).all():
                raise TrainingDiverged(epoch, loss)
            total += loss * len(idx)
            flat, opt = optimizer_step(opt, flat, grad)
        history.append(total / len(X))
    return params.with_flat(flat), history


def rollout(spec: ForecasterSpec, params: ModelParams, seed_window: Trajectory, n_steps: int) -> Trajectory:
    if len(seed_window) != spec.window_len or seed_window.n_agents != spec.n_agents:
        raise ValueError(f"seed window of {len(seed_window)} states x {seed_window.n_agents} agents does not "
                         f"match model ({spec.window_len} x {spec.n_agents})")
    return autoregressive_rollout(lambda w: forward(spec, params, w), seed_window, n_steps)
