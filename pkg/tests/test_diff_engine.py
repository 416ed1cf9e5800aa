import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from swarm_sysid import autodiff as ad
from swarm_sysid.optim import make_optimizer, optimizer_step


def away_from_zero(rng, shape):
    # keeps relu inputs clear of its kink so finite differences are valid
    x = rng.uniform(0.2, 1.5, size=shape)
    return x * rng.choice([-1.0, 1.0], size=shape)


def grad_check(fn, inputs, seed=0, h=1e-5):
    """Compare reverse-mode VJPs of ``fn`` with central differences of ``<cot, fn(...)>``."""
    tape = ad.Tape()
    leaves = [tape.var(x) for x in inputs]
    out = fn(*leaves)
    cot = np.random.default_rng(seed + 1).normal(size=out.shape)
    grads = tape.vjp(out, cot, leaves)
    worst = 0.0
    for i, x in enumerate(inputs):
        def scalar(xi, i=i):
            t = ad.Tape()
            args = [t.var(xi if j == i else inputs[j]) for j in range(len(inputs))]
            return float(np.sum(fn(*args).value * cot))
        num = ad.numeric_gradient(scalar, x, h)
        err = np.linalg.norm(grads[i] - num) / max(np.linalg.norm(num), 1e-8)
        worst = max(worst, err)
    return worst


PRIMITIVES = {
    "matmul": (lambda a, b: ad.matmul(a, b), lambda r: [r.normal(size=(3, 4)), r.normal(size=(4, 2))]),
    "add": (lambda a, b: ad.add(a, b), lambda r: [r.normal(size=(3, 4)), r.normal(size=(3, 4))]),
    "add_bias": (lambda a, b: ad.add(a, b), lambda r: [r.normal(size=(2, 3, 4)), r.normal(size=(4,))]),
    "sub": (lambda a, b: ad.sub(a, b), lambda r: [r.normal(size=(5,)), r.normal(size=(5,))]),
    "sub_bias": (lambda a, b: ad.sub(a, b), lambda r: [r.normal(size=(3, 2)), r.normal(size=(2,))]),
    "mul": (lambda a, b: ad.mul(a, b), lambda r: [r.normal(size=(3, 4)), r.normal(size=(3, 4))]),
    "scale": (lambda a: ad.scale(a, -2.5), lambda r: [r.normal(size=(4, 3))]),
    "concat": (lambda a, b: ad.concat([a, b], axis=1), lambda r: [r.normal(size=(2, 3)), r.normal(size=(2, 2))]),
    "slice_basic": (lambda a: ad.slice_(a, (slice(1, 3), slice(None, None, 2))), lambda r: [r.normal(size=(4, 5))]),
    "slice_fancy": (lambda a: ad.slice_(a, np.array([0, 2, 2, 1])), lambda r: [r.normal(size=(3, 2))]),
    "reshape": (lambda a: ad.reshape(a, (6, 2)), lambda r: [r.normal(size=(3, 4))]),
    "transpose": (lambda a: ad.transpose(a, (2, 0, 1)), lambda r: [r.normal(size=(2, 3, 4))]),
    "relu": (lambda a: ad.relu(a), lambda r: [away_from_zero(r, (4, 5))]),
    "tanh": (lambda a: ad.tanh(a), lambda r: [r.normal(size=(4, 5))]),
    "cubic": (lambda a: ad.cubic(a), lambda r: [r.normal(size=(6,))]),
    "square_norm": (lambda a: ad.square_norm(a, axis=-1, keepdims=True), lambda r: [r.normal(size=(3, 2))]),
    "square_norm_all": (lambda a: ad.square_norm(a), lambda r: [r.normal(size=(3, 2))]),
    "sum": (lambda a: ad.sum_(a, axis=0), lambda r: [r.normal(size=(3, 4))]),
    "mean": (lambda a: ad.mean(a, axis=1, keepdims=True), lambda r: [r.normal(size=(3, 4))]),
    "conv1d": (lambda x, w, b: ad.conv1d(x, w, b, padding=2, stride=2),
               lambda r: [r.normal(size=(2, 3, 7)), r.normal(size=(4, 3, 5)), r.normal(size=(4,))]),
    "conv1d_nobias": (lambda x, w: ad.conv1d(x, w, padding=1, stride=1),
                      lambda r: [r.normal(size=(1, 2, 5)), r.normal(size=(3, 2, 3))]),
    "mse": (lambda a, b: ad.mse(a, b), lambda r: [r.normal(size=(3, 4)), r.normal(size=(3, 4))]),
    "linear": (lambda x, w, b: ad.linear(x, w, b),
               lambda r: [r.normal(size=(5, 3)), r.normal(size=(3, 2)), r.normal(size=(2,))]),
    "operators": (lambda a, b: (a * b - a) @ ad.transpose(b) + (-(b @ ad.transpose(a)))[0],
                  lambda r: [r.normal(size=(2, 3)), r.normal(size=(2, 3))]),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
@given(seed=st.integers(0, 10_000))
@settings(max_examples=8, deadline=None)
def test_primitive_gradients_match_finite_differences(name, seed):
    fn, make = PRIMITIVES[name]
    inputs = make(np.random.default_rng(seed))
    assert grad_check(fn, inputs, seed) < 1e-4


# --- spot examples ------------------------------------------------------------

def test_conv_length_first_layer():
    assert ad.conv1d_length(5, 5, 2, 2) == 3
    t = ad.Tape()
    out = ad.conv1d(t.var(np.ones((1, 4, 5))), t.var(np.ones((4, 4, 5))), padding=2, stride=2)
    assert out.shape == (1, 4, 3)


def test_mse_self_is_zero():
    t = ad.Tape()
    x = t.var(np.arange(6.0).reshape(2, 3))
    assert float(ad.mse(x, x).value) == 0.0


def test_cubic_value():
    t = ad.Tape()
    assert float(ad.cubic(t.var(2.0)).value) == 8.0


def test_square_derivative():
    t = ad.Tape()
    x = t.var(3.0)
    (g,) = t.backward(ad.mul(x, x), [x])
    assert float(g) == 6.0


def test_mse_linear_hand_derivative():
    x, y, w0 = np.array([1.0, -2.0, 0.5]), np.array([0.3, 0.1, -1.0]), 0.7
    t = ad.Tape()
    w = t.var([[w0]])
    loss = ad.mse(ad.matmul(t.const(x[:, None]), w), t.const(y[:, None]))
    (g,) = t.backward(loss, [w])
    assert g[0, 0] == pytest.approx(np.mean(2 * x * (w0 * x - y)), rel=1e-12)


def test_three_layer_network_gradient():
    rng = np.random.default_rng(7)
    X, Y = rng.normal(size=(6, 4)), rng.normal(size=(6, 2))
    shapes = [(4, 5), (5,), (5, 5), (5,), (5, 2), (2,)]
    params = [rng.normal(size=s) * 0.5 for s in shapes]

    def net(*p):
        t = p[0].tape
        h = ad.tanh(ad.linear(t.const(X), p[0], p[1]))
        h = ad.relu(ad.linear(h, p[2], p[3]))
        return ad.mse(ad.linear(h, p[4], p[5]), t.const(Y))

    tape = ad.Tape()
    leaves = [tape.var(p) for p in params]
    grads = tape.backward(net(*leaves), leaves)
    for i, p in enumerate(params):
        def f(v, i=i):
            t = ad.Tape()
            return float(net(*[t.var(v if j == i else params[j]) for j in range(len(params))]).value)
        num = ad.numeric_gradient(f, p)
        err = np.abs(grads[i] - num).max() / max(np.abs(num).max(), 1e-12)
        assert err < 1e-4


def test_backward_deterministic():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(4, 4)), rng.normal(size=(4,))

    def run():
        t = ad.Tape()
        x, y = t.var(a), t.var(b)
        loss = ad.sum_(ad.tanh(ad.linear(x, x, y)))
        return t.backward(loss, [x, y])
    g1, g2 = run(), run()
    assert all(u.tobytes() == v.tobytes() for u, v in zip(g1, g2))


def test_backward_rejects_nonscalar():
    t = ad.Tape()
    x = t.var(np.ones(3))
    with pytest.raises(ad.ShapeError):
        t.backward(ad.tanh(x), [x])


def test_shape_errors():
    t = ad.Tape()
    with pytest.raises(ad.ShapeError):
        ad.matmul(t.var(np.ones((2, 3))), t.var(np.ones((2, 3))))
    with pytest.raises(ad.ShapeError):
        ad.add(t.var(np.ones((2, 3))), t.var(np.ones((3, 3))))
    with pytest.raises(ad.ShapeError):
        ad.mse(t.var(np.ones(3)), t.var(np.ones(4)))


def test_mixed_tapes_rejected():
    a, b = ad.Tape().var(1.0), ad.Tape().var(2.0)
    with pytest.raises(ValueError):
        ad.add(a, b)


def test_unused_leaf_gets_zero_gradient():
    t = ad.Tape()
    x, y = t.var(np.ones(2)), t.var(np.ones(3))
    gx, gy = t.backward(ad.sum_(ad.tanh(x)), [x, y])
    assert not gy.any() and gy.shape == (3,)


# --- conv1d against a nested-loop oracle ----------------------------------------

def naive_conv1d(x, w, b, padding, stride):
    batch, c_in, length = x.shape
    c_out, _, k = w.shape
    xp = np.zeros((batch, c_in, length + 2 * padding))
    xp[:, :, padding:padding + length] = x
    l_out = (length + 2 * padding - k) // stride + 1
    out = np.zeros((batch, c_out, l_out))
    for n in range(batch):
        for o in range(c_out):
            for l in range(l_out):
                acc = b[o]
                for c in range(c_in):
                    for j in range(k):
                        acc += w[o, c, j] * xp[n, c, l * stride + j]
                out[n, o, l] = acc
    return out


@given(st.integers(1, 3), st.integers(1, 4), st.integers(1, 4), st.integers(1, 5), st.integers(0, 2),
       st.integers(1, 3), st.integers(0, 1000))
@settings(max_examples=40, deadline=None)
def test_conv1d_matches_naive(batch, c_in, c_out, k, padding, stride, seed):
    rng = np.random.default_rng(seed)
    length = k + rng.integers(0, 6)
    x, w, b = rng.normal(size=(batch, c_in, length)), rng.normal(size=(c_out, c_in, k)), rng.normal(size=c_out)
    t = ad.Tape()
    got = ad.conv1d(t.var(x), t.var(w), t.var(b), padding=padding, stride=stride).value
    np.testing.assert_allclose(got, naive_conv1d(x, w, b, padding, stride), atol=1e-12, rtol=0)


# --- optimizers -------------------------------------------------------------------

def test_sgd_example():
    p, _ = optimizer_step(make_optimizer("sgd", 0.1, 1), np.array([1.0]), np.array([2.0]))
    assert p[0] == pytest.approx(0.8)


@pytest.mark.parametrize("kind", ["sgd", "adam"])
def test_zero_gradient_leaves_params(kind):
    p0 = np.array([1.0, -2.0, 3.0])
    p, _ = optimizer_step(make_optimizer(kind, 0.01, 3), p0, np.zeros(3))
    np.testing.assert_array_equal(p, p0)


def test_adam_minimises_square():
    state = make_optimizer("adam", 0.01, 1)
    p = np.array([1.0])
    for _ in range(200):
        p, state = optimizer_step(state, p, 2 * p)
    assert abs(p[0]) < 0.1


def test_optimizer_inputs_not_modified():
    p0, g = np.array([1.0, 2.0]), np.array([0.5, -0.5])
    state = make_optimizer("adam", 0.1, 2)
    optimizer_step(state, p0, g)
    assert p0.tolist() == [1.0, 2.0] and state.step == 0 and not state.m.any()


def test_optimizer_validation():
    with pytest.raises(ValueError):
        make_optimizer("rmsprop", 0.1, 1)
    with pytest.raises(ValueError):
        make_optimizer("sgd", 0.0, 1)
    with pytest.raises(ValueError):
        optimizer_step(make_optimizer("sgd", 0.1, 2), np.zeros(2), np.zeros(3))
