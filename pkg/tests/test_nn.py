import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mbgen.nn import (
    Adam,
    DimensionError,
    FeedForward,
    FiLM,
    Linear,
    NonFiniteGradient,
    Parameter,
    StaleTapeError,
    Tensor,
    backward,
    film,
    make_rng,
    no_grad,
)
from mbgen.nn import tensor as T
from mbgen.nn.gradcheck import check_gradients


def P(a):
    return Parameter(np.asarray(a, dtype=np.float64))


# linear

def test_linear_identity():
    out = T.linear(Tensor([3.0, 4.0]), Tensor(np.eye(2)), Tensor([0.0, 0.0]))
    assert out.data.tolist() == [3.0, 4.0]


def test_linear_hand_arithmetic():
    out = T.linear(Tensor([1.0, 2.0]), Tensor([[1.0, 1.0], [0.0, 1.0]]), Tensor([0.0, 0.0]))
    assert out.data.tolist() == [3.0, 2.0]


def test_linear_matches_dot_products():
    rng = make_rng(0)
    W, x, b = rng.normal(size=(3, 5)), rng.normal(size=5), rng.normal(size=3)
    out = T.linear(Tensor(x), Tensor(W), Tensor(b)).data
    want = [sum(W[i, j] * x[j] for j in range(5)) + b[i] for i in range(3)]
    assert np.max(np.abs(out - want)) <= 1e-12


def test_linear_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(3, 5\).*\(4,\)|\(4,\).*\(3, 5\)"):
        T.linear(Tensor(np.ones(4)), Tensor(np.ones((3, 5))))


# softmax

def test_softmax_uniform():
    out = T.softmax(Tensor([0.0, 0.0, 0.0])).data
    assert np.allclose(out, 1 / 3, atol=1e-15)


def test_softmax_no_overflow():
    out = T.softmax(Tensor([1000.0, 0.0])).data
    assert abs(out[0] - 1) <= 1e-12 and abs(out[1]) <= 1e-12


def test_softmax_matches_extended_precision():
    from mpmath import mp, mpf, exp

    mp.dps = 40
    x = make_rng(1).normal(size=7) * 3
    ex = [exp(mpf(float(v))) for v in x]
    want = np.array([float(e / sum(ex)) for e in ex])
    assert np.max(np.abs(T.softmax(Tensor(x)).data - want)) <= 1e-12


def test_softmax_all_masked_slice_is_uniform_and_finite():
    x = Parameter(np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]))
    mask = np.array([[True, False, True], [False, False, False]])
    out = T.softmax(x, axis=1, mask=mask)
    assert np.allclose(out.data[1], 1 / 3)
    assert out.data[0, 1] == 0.0
    backward((out * Tensor([[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]])).sum())
    assert np.all(x.grad[1] == 0.0) and np.all(np.isfinite(x.grad))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.integers(1, 9), elements=st.floats(-500, 500)))
def test_softmax_is_probability_vector(x):
    out = T.softmax(Tensor(x)).data
    assert np.all(out >= 0) and abs(out.sum() - 1) <= 1e-12


# film

def test_film_zero_condition_is_identity():
    rng = make_rng(2)
    o = Tensor(rng.normal(size=(2, 3, 3, 4)))
    W = Tensor(rng.normal(size=(4, 5)))
    out = film(o, Tensor(np.zeros((2, 5))), W, W)
    assert np.max(np.abs(out.data - o.data)) <= 1e-15


def test_film_zero_features_gives_shift():
    rng = make_rng(3)
    y = rng.normal(size=(2, 5))
    W1, W2 = rng.normal(size=(4, 5)), rng.normal(size=(4, 5))
    out = film(Tensor(np.zeros((2, 3, 4))), Tensor(y), Tensor(W1), Tensor(W2)).data
    for b in range(2):
        for i in range(3):
            assert np.allclose(out[b, i], W2 @ y[b], atol=1e-15)


def test_film_matches_scalar_loop():
    rng = make_rng(4)
    o, y = rng.normal(size=(2, 3, 4)), rng.normal(size=(2, 5))
    W1, W2 = rng.normal(size=(4, 5)), rng.normal(size=(4, 5))
    out = film(Tensor(o), Tensor(y), Tensor(W1), Tensor(W2)).data
    for b in range(2):
        for i in range(3):
            for d in range(4):
                s1 = sum(W1[d, j] * y[b, j] for j in range(5))
                s2 = sum(W2[d, j] * y[b, j] for j in range(5))
                assert abs(out[b, i, d] - (s2 + o[b, i, d] * s1 + o[b, i, d])) <= 1e-12


def test_film_shape_error():
    with pytest.raises(DimensionError):
        film(Tensor(np.zeros((2, 3, 4))), Tensor(np.zeros((2, 5))), Tensor(np.zeros((3, 5))), Tensor(np.zeros((3, 5))))


# backward

def test_backward_linear_sum():
    W = P(np.zeros((3, 4)))
    x = np.array([1.0, 2.0, 3.0, 4.0])
    backward(T.linear(Tensor(x), W).sum())
    assert np.array_equal(W.grad, np.broadcast_to(x, (3, 4)))


def test_backward_twice_is_stale():
    W = P(np.ones(3))
    loss = (W * W).sum()
    backward(loss)
    with pytest.raises(StaleTapeError):
        backward(loss)


def test_no_grad_records_nothing():
    W = P(np.ones(3))
    with no_grad():
        loss = (W * W).sum()
    with pytest.raises(StaleTapeError):
        backward(loss)


PRIMITIVES = {
    "add": lambda a, b: (a + b).sum(),
    "sub": lambda a, b: (a - b).sum(),
    "mul": lambda a, b: (a * b).sum(),
    "div": lambda a, b: (a / (b * b + 1.0)).sum(),
    "exp": lambda a, b: T.exp(a).sum(),
    "log": lambda a, b: T.log(a * a + 1.0).sum(),
    "sqrt": lambda a, b: T.sqrt(a * a + 1.0).sum(),
    "abs": lambda a, b: (T.tabs(a) * b).sum(),
    "sigmoid": lambda a, b: (T.sigmoid(a) * b).sum(),
    "gelu": lambda a, b: (T.gelu(a) * b).sum(),
    "mean": lambda a, b: (T.mean(a * b, axis=1) * T.mean(a, axis=1)).sum(),
    "reshape_transpose": lambda a, b: (a.reshape(4, 3).transpose(1, 0) * b.reshape(3, 4)).sum(),
    "getitem": lambda a, b: (a[np.array([0, 2, 2, 1])] * b[np.array([1, 1, 0, 2])]).sum(),
    "concat": lambda a, b: (T.concat([a, b], axis=0) * T.concat([b, a], axis=0)).sum(),
    "broadcast": lambda a, b: (T.broadcast_to(a[0:1], (3, 4)) * b).sum(),
    "linear": lambda a, b: (T.linear(a, b, b[:, 0]) * T.linear(b, a)).sum(),
    "einsum": lambda a, b: (T.einsum("ij,kj->ik", a, b) * T.einsum("ij,ij->i", a, b).reshape(3, 1)).sum(),
    "softmax": lambda a, b: (T.softmax(a, axis=1) * b).sum(),
    "masked_softmax": lambda a, b: (T.softmax(a, axis=1, mask=np.array([[1, 0, 1, 1]] * 3, dtype=bool)) * b).sum(),
    "log_softmax": lambda a, b: (T.log_softmax(a, axis=1) * b).sum(),
    "bce": lambda a, b: T.bce_with_logits(a, (b.data > 0).astype(float)).mean(),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_gradients(name):
    rng = make_rng(sum(map(ord, name)))
    a = P(rng.normal(size=(3, 4)) + 0.1)
    b = P(rng.normal(size=(3, 4)))
    fn = PRIMITIVES[name]
    params = [a] if name == "bce" else [a, b]
    assert check_gradients(lambda: fn(a, b), params) <= 1e-5


def test_film_linear_composition_gradients():
    rng = make_rng(5)
    lin = Linear(rng, 6, 4)
    fl = FiLM(rng, 5, 4)
    ff = FeedForward(rng, 4, 7)
    x = Tensor(rng.normal(size=(2, 3, 6)))
    y = P(rng.normal(size=(2, 5)))

    def loss():
        out = ff(fl(lin(x), y))
        return (out * out).sum()

    params = [y] + [p for _, p in lin.named_parameters()] + [p for _, p in fl.named_parameters()] + [p for _, p in ff.named_parameters()]
    assert check_gradients(loss, params) <= 1e-5


def test_feedforward_is_residual_and_width_preserving():
    rng = make_rng(6)
    ff = FeedForward(rng, 5, 9)
    ff.outer.weight.data[:] = 0
    ff.outer.bias.data[:] = 0
    x = Tensor(rng.normal(size=(2, 5)))
    assert np.array_equal(ff(x).data, x.data)


# optimiser

def test_adam_zero_gradient_leaves_value():
    w = P([1.0, -2.0])
    opt = Adam([("w", w)], lr=0.1)
    opt.zero_grad()
    opt.step()
    assert w.data.tolist() == [1.0, -2.0]


def test_adam_descends():
    w = P([1.0])
    opt = Adam([("w", w)], lr=0.1)
    opt.zero_grad()
    backward((w * w).sum())
    opt.step()
    assert w.data[0] < 1.0


def test_adam_converges_on_quadratic():
    target = np.array([0.5, -1.5, 2.0])
    scale = np.array([1.0, 3.0, 0.5])
    w = P(np.zeros(3))
    opt = Adam([("w", w)], lr=0.05)
    for _ in range(200):
        opt.zero_grad()
        backward((((w - Tensor(target)) * (w - Tensor(target))) * Tensor(scale)).sum())
        opt.step()
    # Adam with a constant step oscillates at O(lr) around the optimum
    for _ in range(300):
        opt.lr *= 0.98
        opt.zero_grad()
        backward((((w - Tensor(target)) * (w - Tensor(target))) * Tensor(scale)).sum())
        opt.step()
    assert np.max(np.abs(w.data - target)) < 1e-3


def test_adam_rejects_non_finite_gradient():
    a, b = P([1.0]), P([2.0])
    opt = Adam([("a", a), ("bad.weight", b)], lr=0.1)
    a.grad[:] = 1.0
    b.grad[:] = np.nan
    with pytest.raises(NonFiniteGradient, match="bad.weight"):
        opt.step()
    assert a.data[0] == 1.0


def test_rng_determinism():
    assert np.array_equal(make_rng(7).random(5), make_rng(7).random(5))
    assert not np.array_equal(make_rng(7).random(5), make_rng(8).random(5))


def test_module_state_dict_round_trip():
    rng = make_rng(9)
    a, b = Linear(rng, 3, 2), Linear(rng, 3, 2)
    b.load_state_dict(a.state_dict())
    x = Tensor(rng.normal(size=(4, 3)))
    assert np.array_equal(a(x).data, b(x).data)
    with pytest.raises(DimensionError, match="weight"):
        b.load_state_dict({"weight": np.zeros((5, 5)), "bias": np.zeros(2)})
