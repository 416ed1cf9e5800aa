"""Physics-informed Neural ODE for the swarm vector field.

The learned field keeps the kinematic identity ``r' = v`` and models the
acceleration of agent ``i`` as

    intrinsic(v_i, |v_i|^2 v_i) + aggregation(mean_{j != i} interaction(r_i - r_j))

with one set of weights shared by all agents and all pairs, so the parameter
count does not depend on the swarm size.  Training integrates the field with
fixed-step Euler and obtains parameter gradients from the discrete adjoint of
that scheme.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from . import autodiff as ad
from .optim import make_optimizer, optimizer_step
from .params import ModelParams, flatten_grads, init_params
from .state import StateDerivative, SwarmState, Trajectory

SUBNETS = ("intrinsic", "interaction", "aggregation")


class NodeDiverged(FloatingPointError):
    pass


@dataclass(frozen=True)
class NodeArchitecture:
    hidden: int = 64
    depth: int = 3
    cubic_features: bool = True

    def __post_init__(self):
        if self.depth < 1 or self.hidden < 1:
            raise ValueError("depth and hidden width must be positive")

    def input_width(self, net: str) -> int:
        if net == "intrinsic":
            return 4 if self.cubic_features else 2
        return 2

    def layout(self):
        layout, fan = [], {}
        for net in SUBNETS:
            widths = [self.input_width(net)] + [self.hidden] * (self.depth - 1) + [2]
            for layer in range(self.depth):
                w, b = f"{net}.W{layer}", f"{net}.b{layer}"
                layout += [(w, (widths[layer], widths[layer + 1])), (b, (widths[layer + 1],))]
                fan[w] = fan[b] = widths[layer]
        return layout, fan

    def descriptor(self) -> dict:
        return {"kind": "node", "hidden": self.hidden, "depth": self.depth, "cubic_features": self.cubic_features}

    @classmethod
    def from_descriptor(cls, d: dict) -> "NodeArchitecture":
        return cls(int(d["hidden"]), int(d["depth"]), bool(d["cubic_features"]))


@dataclass(frozen=True)
class NodeTrainConfig:
    solver_step: float = 0.05
    learning_rate: float = 0.01
    epochs: int = 300
    optimizer: str = "adam"
    segment_length: int = 50
    batch_size: Optional[int] = None   # segments per update; None = all
    seed: int = 0

    def __post_init__(self):
        if not self.solver_step > 0:
            raise ValueError(f"solver_step must be positive, got {self.solver_step}")
        if self.epochs < 1 or self.segment_length < 1:
            raise ValueError("epochs and segment_length must be positive")


@dataclass(frozen=True, eq=False)
class AdjointState:
    a: np.ndarray            # dL/dx at `time`
    param_grad: np.ndarray   # accumulated dL/dtheta
    time: float


def init_node(arch: NodeArchitecture, seed: int = 0, solver_step: float = 0.05) -> ModelParams:
    layout, fan = arch.layout()
    desc = dict(arch.descriptor(), solver_step=solver_step)
    return init_params(layout, fan, seed, desc)


# --- vector field ----------------------------------------------------------

def _mlp(p: dict, net: str, depth: int, x: ad.Var) -> ad.Var:
    for layer in range(depth):
        x = ad.linear(x, p[f"{net}.W{layer}"], p[f"{net}.b{layer}"])
        if layer < depth - 1:
            x = ad.tanh(x)
    return x


_PAIR_CACHE = {}


def _pairs(m: int, n: int):
    key = (m, n)
    if key not in _PAIR_CACHE:
        i, j = np.nonzero(~np.eye(n, dtype=bool))          # row-major: j varies fastest
        base = (np.arange(m) * n)[:, None]
        _PAIR_CACHE[key] = ((base + i).reshape(-1), (base + j).reshape(-1))
    return _PAIR_CACHE[key]


def rhs_graph(arch: NodeArchitecture, p: dict, X: ad.Var) -> ad.Var:
    """Learned field on a batch of states ``X (M, N, 4)``; output has the same shape."""
    m, n, _ = X.shape
    tape = X.tape
    flat = ad.reshape(X, (m * n, 4))
    pos, vel = flat[:, 0:2], flat[:, 2:4]
    feats = vel
    if arch.cubic_features:
        speed2 = ad.matmul(ad.square_norm(vel, axis=1, keepdims=True), tape.const(np.ones((1, 2))))
        feats = ad.concat([vel, ad.mul(speed2, vel)], axis=1)
    acc = _mlp(p, "intrinsic", arch.depth, feats)
    if n > 1:
        ii, jj = _pairs(m, n)
        disp = ad.sub(pos[ii], pos[jj])
        inter = _mlp(p, "interaction", arch.depth, disp)
        pooled = ad.mean(ad.reshape(inter, (m * n, n - 1, 2)), axis=1)
        acc = acc + _mlp(p, "aggregation", arch.depth, pooled)
    return ad.reshape(ad.concat([vel, acc], axis=1), (m, n, 4))


def field_values(arch: NodeArchitecture, params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Evaluate the field on ``(N, 4)`` or ``(M, N, 4)`` arrays."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 2
    tape = ad.Tape()
    p, _ = params.on_tape(tape)
    out = rhs_graph(arch, p, tape.const(x[None] if single else x)).value
    return out[0] if single else out


def node_rhs(state: SwarmState, arch: NodeArchitecture, params: ModelParams) -> StateDerivative:
    d = field_values(arch, params, state.as_array())
    return StateDerivative(d[:, :2], d[:, 2:])


# --- solver ----------------------------------------------------------------

def n_solver_steps(t0: float, t1: float, step: float) -> int:
    if not t1 > t0:
        raise ValueError(f"t1 ({t1}) must exceed t0 ({t0})")
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")
    n = int(round((t1 - t0) / step))
    if abs(n * step - (t1 - t0)) > 1e-9 * max(1.0, t1 - t0):
        raise ValueError(f"interval [{t0}, {t1}] is not a whole number of steps of {step}")
    return n


def euler_solve(f: Callable[[np.ndarray], np.ndarray], x0, n_steps: int, step: float) -> np.ndarray:
    """Fixed-step explicit Euler on arrays; returns ``n_steps + 1`` states."""
    x = np.array(x0, dtype=np.float64)
    out = np.empty((n_steps + 1,) + x.shape)
    out[0] = x
    for k in range(n_steps):
        x = x + step * f(x)
        if not np.isfinite(x).all():
            raise NodeDiverged(f"non-finite state at solver step {k + 1}")
        out[k + 1] = x
    return out


def odesolve(rhs: Callable[[SwarmState], StateDerivative], x0: SwarmState, t0: float, t1: float,
             step: float) -> Trajectory:
    n = n_solver_steps(t0, t1, step)
    x0 = SwarmState(x0.positions, x0.velocities, t0)

    def f(x):
        return rhs(SwarmState.from_array(x)).as_array()
    return Trajectory(euler_solve(f, x0.as_array(), n, step), step, t0)


def node_rollout(arch: NodeArchitecture, params: ModelParams, ic: SwarmState, horizon: int,
                 step: float = None) -> Trajectory:
    """Integrate the learned field for ``horizon`` solver steps from ``ic``."""
    step = step or float(params.descriptor.get("solver_step", 0.05))
    states = euler_solve(lambda x: field_values(arch, params, x), ic.as_array(), int(horizon), step)
    return Trajectory(states, step, ic.time)


# --- gradients -------------------------------------------------------------

def field_vjp(arch: NodeArchitecture, params: ModelParams, x: np.ndarray, cotangent: np.ndarray):
    """``(a^T df/dx, a^T df/dtheta)`` at a batch of states ``x (M, N, 4)``."""
    tape = ad.Tape()
    p, leaves = params.on_tape(tape)
    X = tape.var(x)
    out = rhs_graph(arch, p, X)
    grads = tape.vjp(out, cotangent, [X] + leaves)
    return grads[0], flatten_grads(grads[1:])


def adjoint_backward(arch: NodeArchitecture, params: ModelParams, forward_states: np.ndarray,
                     loss_grads: np.ndarray, step: float, t0: float = 0.0) -> AdjointState:
    """Discrete adjoint of explicit Euler.

    ``forward_states[k]`` is the solver state after ``k`` steps and
    ``loss_grads[k]`` is the direct loss gradient with respect to it (zero at
    unobserved steps).  The recursion

        a_k = a_{k+1} + h * a_{k+1}^T df/dx(x_k) + dL/dx_k
        dL/dtheta += h * a_{k+1}^T df/dtheta(x_k)

    is the Euler discretisation of the adjoint equation run backwards in time.
    """
    if forward_states.shape != loss_grads.shape:
        raise ValueError(f"state history {forward_states.shape} and loss gradients {loss_grads.shape} differ")
    n = len(forward_states) - 1
    a = np.array(loss_grads[n], dtype=np.float64)
    theta = np.zeros(params.size)
    for k in range(n - 1, -1, -1):
        gx, gtheta = field_vjp(arch, params, forward_states[k], a)
        a = a + step * gx + loss_grads[k]
        theta += step * gtheta
        if not (np.isfinite(a).all() and np.isfinite(theta).all()):
            raise NodeDiverged(f"non-finite adjoint at solver step {k}")
    return AdjointState(a, theta, t0)


def _observation_stride(data_dt: float, step: float) -> int:
    ratio = data_dt / step
    r = int(round(ratio))
    if r < 1 or abs(ratio - r) > 1e-9 * max(1.0, ratio):
        raise ValueError(f"data spacing {data_dt} is not a whole number of solver steps {step}")
    return r


def segment_loss(arch: NodeArchitecture, params: ModelParams, segments: np.ndarray, data_dt: float,
                 step: float, flat: np.ndarray = None, with_grad: bool = True):
    """MSE between Euler solutions and observed ``segments (M, K+1, N, 4)``.

    Returns ``(loss, grad)``; the gradient comes from :func:`adjoint_backward`.
    """
    if flat is not None:
        params = params.with_flat(flat)
    stride = _observation_stride(data_dt, step)
    m, k_obs = segments.shape[0], segments.shape[1] - 1
    x0 = segments[:, 0]
    states = euler_solve(lambda x: field_values(arch, params, x), x0, k_obs * stride, step)
    pred = states[::stride][1:]
    target = np.moveaxis(segments[:, 1:], 1, 0)
    diff = pred - target
    loss = float(np.mean(diff * diff))
    if not with_grad:
        return loss, None
    loss_grads = np.zeros_like(states)
    loss_grads[stride::stride] = 2.0 * diff / diff.size
    adj = adjoint_backward(arch, params, states, loss_grads, step)
    return loss, adj.param_grad


def unrolled_gradient(arch: NodeArchitecture, params: ModelParams, segments: np.ndarray, data_dt: float,
                      step: float):
    """Same loss as :func:`segment_loss`, differentiated by reverse mode through every solver step.

    Memory grows with the number of steps; kept as an independent check on
    the adjoint.
    """
    stride = _observation_stride(data_dt, step)
    tape = ad.Tape()
    p, leaves = params.on_tape(tape)
    x = tape.const(segments[:, 0])
    total = None
    count = segments[:, 1:].size
    for k in range(1, (segments.shape[1] - 1) * stride + 1):
        x = x + ad.scale(rhs_graph(arch, p, x), step)
        if k % stride == 0:
            err = ad.square_norm(ad.sub(x, tape.const(segments[:, k // stride])))
            total = err if total is None else total + err
    loss = ad.scale(total, 1.0 / count)
    return float(loss.value), flatten_grads(tape.backward(loss, leaves))


# --- training --------------------------------------------------------------

def make_segments(trajs: Sequence[Trajectory], length: int, stride: Optional[int] = None) -> np.ndarray:
    """Cut trajectories into ``(M, length + 1, N, 4)`` windows, ``stride`` apart (default ``length``)."""
    stride = stride or length
    out = []
    for traj in trajs:
        for start in range(0, len(traj) - length, stride):
            out.append(traj.data[start:start + length + 1])
    if not out:
        raise ValueError(f"no trajectory is longer than the segment length {length}")
    return np.stack(out)


def train_node(segments, arch: NodeArchitecture, config: NodeTrainConfig, data_dt: float = None,
               init: ModelParams = None) -> Tuple[ModelParams, List[float]]:
    """Fit the field to trajectory segments with Adam on adjoint gradients.

    ``segments`` is either a list of equal-length trajectories or an array
    ``(M, K+1, N, 4)`` together with ``data_dt``.
    """
    if isinstance(segments, (list, tuple)):
        data_dt = segments[0].dt
        segments = np.stack([s.data for s in segments])
    if data_dt is None:
        raise ValueError("data_dt is required when segments are given as an array")
    segments = np.asarray(segments, dtype=np.float64)
    init_seq, order_seq = np.random.SeedSequence(int(config.seed)).spawn(2)
    params = init or init_node(arch, int(init_seq.generate_state(1)[0]), config.solver_step)
    rng = np.random.default_rng(order_seq)
    opt = make_optimizer(config.optimizer, config.learning_rate, params.size)
    flat = params.flat.copy()
    batch = config.batch_size or len(segments)
    curve = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(segments)) if batch < len(segments) else np.arange(len(segments))
        total = 0.0
        for start in range(0, len(segments), batch):
            idx = order[start:start + batch]
            try:
                loss, grad = segment_loss(arch, params, segments[idx], data_dt, config.solver_step, flat)
            except NodeDiverged as exc:
                raise NodeDiverged(f"epoch {epoch}: {exc}") from exc
            if not np.isfinite(loss):
                raise NodeDiverged(f"epoch {epoch}: non-finite loss")
            total += loss * len(idx)
            flat, opt = optimizer_step(opt, flat, grad)
        curve.append(total / len(segments))
    return params.with_flat(flat), curve
