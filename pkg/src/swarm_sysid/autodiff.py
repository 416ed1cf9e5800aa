"""A small reverse-mode automatic differentiation engine over float64 arrays.

Values are recorded on a :class:`Tape` in creation order, which is already a
topological order, so the backward sweep is a single reverse pass.

    tape = Tape()
    w = tape.var(np.ones((3, 2)))
    x = tape.const(np.random.rand(5, 3))
    loss = mse(tanh(x @ w), tape.const(np.zeros((5, 2))))
    (gw,) = tape.backward(loss, [w])

Broadcasting is deliberately limited to adding a 1-D bias to the last axis.
"""
from __future__ import annotations

from typing import Callable, List, Optional, Sequence

import numpy as np


class ShapeError(ValueError):
    pass


class Var:
    __slots__ = ("value", "tape", "index", "parents", "vjp", "requires_grad")

    def __init__(self, value, tape: "Tape", parents=(), vjp=None, requires_grad=False):
        self.value = value
        self.tape = tape
        self.parents = parents
        self.vjp = vjp
        self.requires_grad = requires_grad
        self.index = len(tape.nodes)
        tape.nodes.append(self)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(shape={self.shape}, index={self.index})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, other)
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return slice_(self, idx)


class Tape:
    def __init__(self):
        self.nodes: List[Var] = []

    def __len__(self):
        return len(self.nodes)

    def var(self, value) -> Var:
        """A differentiable leaf."""
        return Var(np.array(value, dtype=np.float64), self, requires_grad=True)

    def const(self, value) -> Var:
        return Var(np.asarray(value, dtype=np.float64), self)

    def vjp(self, output: Var, cotangent, wrt: Sequence[Var]) -> List[np.ndarray]:
        """Vector-Jacobian products ``cotangent^T d(output)/d(wrt)``."""
        cot = np.asarray(cotangent, dtype=np.float64)
        if cot.shape != output.shape:
            raise ShapeError(f"cotangent shape {cot.shape} does not match output shape {output.shape}")
        for v in (output, *wrt):
            if v.tape is not self:
                raise ValueError("variable belongs to a different tape")
        grads: List[Optional[np.ndarray]] = [None] * (output.index + 1)
        grads[output.index] = cot
        for node in reversed(self.nodes[:output.index + 1]):
            g = grads[node.index]
            if g is None or node.vjp is None:
                continue
            for parent, pg in zip(node.parents, node.vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                prev = grads[parent.index]
                grads[parent.index] = pg if prev is None else prev + pg
        out = []
        for v in wrt:
            g = grads[v.index] if v.index < len(grads) else None
            out.append(np.zeros_like(v.value) if g is None else g)
        return out

    def backward(self, loss: Var, wrt: Sequence[Var]) -> List[np.ndarray]:
        if loss.value.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        return self.vjp(loss, np.ones_like(loss.value), wrt)


def _lift(x, tape: Tape) -> Var:
    return x if isinstance(x, Var) else tape.const(x)


def _tape_of(*xs) -> Tape:
    tapes = {id(x.tape): x.tape for x in xs if isinstance(x, Var)}
    if not tapes:
        raise TypeError("at least one operand must be a Var")
    if len(tapes) > 1:
        raise ValueError("operands recorded on different tapes")
    return next(iter(tapes.values()))


def _record(tape: Tape, value, parents, vjp) -> Var:
    return Var(value, tape, tuple(parents), vjp, any(p.requires_grad for p in parents))


# --- primitives -----------------------------------------------------------

def matmul(a, b) -> Var:
    tape = _tape_of(a, b)
    a, b = _lift(a, tape), _lift(b, tape)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    av, bv = a.value, b.value
    return _record(tape, av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def _bias_shapes(a, b) -> bool:
    return b.ndim == 1 and a.ndim >= 1 and a.shape[-1] == b.shape[0]


def _binary_grads(a, b, g, sign):
    ga = g
    if a.shape == b.shape:
        return ga, sign * g
    lead = tuple(range(g.ndim - 1))
    return ga, sign * g.sum(axis=lead)


def add(a, b) -> Var:
    tape = _tape_of(a, b)
    a, b = _lift(a, tape), _lift(b, tape)
    if a.shape != b.shape and _bias_shapes(b.value, a.value):
        a, b = b, a
    if a.shape != b.shape and not _bias_shapes(a.value, b.value):
        raise ShapeError(f"add shape mismatch: {a.shape} + {b.shape}")
    return _record(tape, a.value + b.value, (a, b), lambda g: _binary_grads(a.value, b.value, g, 1.0))


def sub(a, b) -> Var:
    tape = _tape_of(a, b)
    a, b = _lift(a, tape), _lift(b, tape)
    if a.shape != b.shape and not _bias_shapes(a.value, b.value):
        raise ShapeError(f"sub shape mismatch: {a.shape} - {b.shape}")
    return _record(tape, a.value - b.value, (a, b), lambda g: _binary_grads(a.value, b.value, g, -1.0))


def mul(a, b) -> Var:
    """Elementwise product of equal-shape arrays."""
    tape = _tape_of(a, b)
    a, b = _lift(a, tape), _lift(b, tape)
    if a.shape != b.shape:
        raise ShapeError(f"mul shape mismatch: {a.shape} * {b.shape}")
    av, bv = a.value, b.value
    return _record(tape, av * bv, (a, b), lambda g: (g * bv, g * av))


def scale(a: Var, c: float) -> Var:
    c = float(c)
    return _record(a.tape, c * a.value, (a,), lambda g: (c * g,))


def concat(xs: Sequence[Var], axis: int = -1) -> Var:
    tape = _tape_of(*xs)
    xs = [_lift(x, tape) for x in xs]
    try:
        value = np.concatenate([x.value for x in xs], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat shape mismatch: {[x.shape for x in xs]} on axis {axis}") from exc
    bounds = np.cumsum([x.shape[axis] for x in xs])[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=axis))
    return _record(tape, value, xs, vjp)


def _is_basic_index(idx) -> bool:
    parts = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(p, (int, slice, type(Ellipsis))) or p is None for p in parts)


def slice_(a: Var, idx) -> Var:
    shape = a.shape
    basic = _is_basic_index(idx)

    def vjp(g):
        out = np.zeros(shape)
        if basic:
            out[idx] += g
        else:
            np.add.at(out, idx, g)
        return (out,)
    return _record(a.tape, a.value[idx], (a,), vjp)


def reshape(a: Var, shape) -> Var:
    old = a.shape
    try:
        value = a.value.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"cannot reshape {old} to {shape}") from exc
    return _record(a.tape, value, (a,), lambda g: (g.reshape(old),))


def transpose(a: Var, axes=None) -> Var:
    inv = None if axes is None else np.argsort(axes)
    return _record(a.tape, np.transpose(a.value, axes), (a,), lambda g: (np.transpose(g, inv),))


def relu(a: Var) -> Var:
    mask = a.value > 0
    return _record(a.tape, np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))


def tanh(a: Var) -> Var:
    y = np.tanh(a.value)
    return _record(a.tape, y, (a,), lambda g: (g * (1.0 - y * y),))


def cubic(a: Var) -> Var:
    x = a.value
    return _record(a.tape, x ** 3, (a,), lambda g: (3.0 * x * x * g,))


def square_norm(a: Var, axis=None, keepdims: bool = False) -> Var:
    """Sum of squares, over everything or along ``axis``."""
    x = a.value
    value = np.sum(x * x, axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (2.0 * x * g,)
    return _record(a.tape, value, (a,), vjp)


def sum_(a: Var, axis=None, keepdims: bool = False) -> Var:
    shape = a.shape

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)
    return _record(a.tape, np.sum(a.value, axis=axis, keepdims=keepdims), (a,), vjp)


def mean(a: Var, axis=None, keepdims: bool = False) -> Var:
    count = a.value.size if axis is None else a.shape[axis]
    return scale(sum_(a, axis, keepdims), 1.0 / count)


def conv1d_length(length: int, filter_size: int, padding: int, stride: int) -> int:
    return (length + 2 * padding - filter_size) // stride + 1


def conv1d(x, w, b=None, padding: int = 0, stride: int = 1) -> Var:
    """Cross-correlation of ``x (B, C_in, L)`` with ``w (C_out, C_in, K)``."""
    tape = _tape_of(x, w) if b is None else _tape_of(x, w, b)
    x, w = _lift(x, tape), _lift(w, tape)
    xv, wv = x.value, w.value
    if xv.ndim != 3 or wv.ndim != 3 or xv.shape[1] != wv.shape[1]:
        raise ShapeError(f"conv1d shape mismatch: input {xv.shape}, filter {wv.shape}")
    batch, c_in, length = xv.shape
    c_out, _, k = wv.shape
    l_out = conv1d_length(length, k, padding, stride)
    if l_out < 1:
        raise ShapeError(f"conv1d: filter {wv.shape} too long for input {xv.shape} with padding {padding}")
    xp = np.pad(xv, ((0, 0), (0, 0), (padding, padding)))
    idx = stride * np.arange(l_out)[None, :] + np.arange(k)[:, None]   # (K, L_out)
    # im2col: rows (b, l), columns (c, k)
    cols = xp[:, :, idx].transpose(0, 3, 1, 2).reshape(batch * l_out, c_in * k)
    w2 = wv.reshape(c_out, c_in * k)
    out = (cols @ w2.T).reshape(batch, l_out, c_out).transpose(0, 2, 1)
    parents = [x, w]
    if b is not None:
        b = _lift(b, tape)
        if b.shape != (c_out,):
            raise ShapeError(f"conv1d bias shape {b.shape} does not match {c_out} output channels")
        out = out + b.value[None, :, None]
        parents.append(b)

    def vjp(g):
        g2 = g.transpose(0, 2, 1).reshape(batch * l_out, c_out)
        gw = (g2.T @ cols).reshape(c_out, c_in, k)
        gcols = (g2 @ w2).reshape(batch, l_out, c_in, k).transpose(0, 2, 3, 1)   # (B, C_in, K, L_out)
        gxp = np.zeros_like(xp)
        for j in range(k):
            # positions within one filter tap never repeat, so plain += is safe
            gxp[:, :, idx[j]] += gcols[:, :, j, :]
        gx = gxp[:, :, padding:padding + length]
        if b is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2))
    return _record(tape, out, parents, vjp)


def mse(pred, target) -> Var:
    tape = _tape_of(pred, target)
    pred, target = _lift(pred, tape), _lift(target, tape)
    if pred.shape != target.shape:
        raise ShapeError(f"mse shape mismatch: prediction {pred.shape} vs target {target.shape}")
    diff = pred.value - target.value
    n = diff.size

    def vjp(g):
        d = (2.0 / n) * diff * g
        return d, -d
    return _record(tape, np.array(np.mean(diff * diff)), (pred, target), vjp)


def linear(x: Var, w: Var, b: Var) -> Var:
    return add(matmul(x, w), b)


def numeric_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return g
