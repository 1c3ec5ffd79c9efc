import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from asdfusion.errors import NumericError
from asdfusion.numerics import (AdamState, Parameter, adam_step, affine, affine_backward, cross_entropy,
                                finite_diff_grad, relative_error, sigmoid, softmax, softmax_cross_entropy,
                                uniform_init)

finite = st.floats(-50, 50, allow_nan=False)


def test_softmax_examples():
    assert np.array_equal(softmax([0.0, 0.0]), [0.5, 0.5])
    np.testing.assert_allclose(softmax([0.0, np.log(2.0)]), [1 / 3, 2 / 3], atol=1e-15)
    x = np.random.default_rng(0).standard_normal(8)
    assert abs(softmax(x).sum() - 1.0) <= 1e-12


def test_softmax_errors():
    with pytest.raises(ValueError):
        softmax([])
    with pytest.raises(NumericError):
        softmax([0.0, np.nan])
    with pytest.raises(NumericError):
        softmax([np.inf, 0.0])


def test_softmax_large_inputs_stable():
    out = softmax([1000.0, 1000.0, -1000.0])
    np.testing.assert_allclose(out, [0.5, 0.5, 0.0], atol=1e-300)


@given(arrays(np.float64, st.integers(1, 20), elements=finite), finite)
def test_softmax_shift_invariant_and_valid(x, c):
    p = softmax(x)
    assert np.all((p >= 0) & (p <= 1))
    assert abs(p.sum() - 1.0) <= 1e-12
    np.testing.assert_allclose(softmax(x + c), p, atol=1e-12)


def test_sigmoid_extremes():
    s = sigmoid(np.array([-800.0, 0.0, 800.0]))
    assert np.all(np.isfinite(s))
    np.testing.assert_allclose(s, [0.0, 0.5, 1.0])


def test_affine_examples():
    assert np.array_equal(affine(np.eye(2), np.zeros(2), [1.0, 2.0]), [1.0, 2.0])
    assert np.array_equal(affine(np.zeros((1, 5)), [3.0], np.arange(5.0)), [3.0])
    rng = np.random.default_rng(1)
    W, b, x = rng.standard_normal((4, 3)), rng.standard_normal(4), rng.standard_normal(3)
    naive = [b[i] + sum(W[i, j] * x[j] for j in range(3)) for i in range(4)]
    np.testing.assert_allclose(affine(W, b, x), naive, atol=1e-12)


def test_affine_dimension_errors():
    with pytest.raises(ValueError):
        affine(np.zeros((2, 3)), np.zeros(2), np.zeros(4))
    with pytest.raises(ValueError):
        affine(np.zeros((2, 3)), np.zeros(3), np.zeros(3))


@pytest.mark.parametrize("seed", range(10))
def test_affine_gradients(seed):
    rng = np.random.default_rng(seed)
    W, b, x = rng.standard_normal((4, 3)), rng.standard_normal(4), rng.standard_normal((2, 3))
    g = rng.standard_normal((2, 4))
    dW, db, dx = affine_backward(W, x, g)
    f = lambda _: float(np.sum(affine(W, b, x) * g))
    assert relative_error(dW, finite_diff_grad(f, W)) <= 1e-4
    assert relative_error(db, finite_diff_grad(f, b)) <= 1e-4
    assert relative_error(dx, finite_diff_grad(f, x)) <= 1e-4


@pytest.mark.parametrize("seed", range(10))
def test_softmax_cross_entropy_gradient(seed):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((1, 3))
    label = np.array([seed % 3])
    _, g = softmax_cross_entropy(z, label)
    num = finite_diff_grad(lambda v: cross_entropy(softmax(v), label), z)
    assert relative_error(g, num) <= 1e-4


def test_finite_diff_examples():
    np.testing.assert_allclose(finite_diff_grad(lambda v: float(np.sum(v ** 2)), np.array([1.0, 2.0])),
                               [2.0, 4.0], atol=1e-6)
    assert np.array_equal(finite_diff_grad(lambda v: 7.0, np.array([1.0, -3.0])), [0.0, 0.0])
    with pytest.raises(NumericError), np.errstate(all="ignore"):
        finite_diff_grad(lambda v: float(np.log(v[0])), np.array([0.0]))
    with pytest.raises(ValueError):
        finite_diff_grad(lambda v: 0.0, np.zeros(1), eps=0)


def test_finite_diff_restores_input():
    x = np.array([0.3, -1.2, 5.0])
    before = x.copy()
    finite_diff_grad(lambda v: float(np.prod(v)), x)
    assert np.array_equal(x, before)


def test_adam_first_step_sign():
    p = Parameter("w", np.array([1.0, 1.0, 1.0]))
    p.grad[...] = [3.0, -0.2, 1e3]
    state = AdamState(lr=0.05)
    adam_step([p], state)
    np.testing.assert_allclose(p.value - 1.0, [-0.05, 0.05, -0.05], atol=1e-6)
    assert state.step == 1
    assert np.all(p.grad == 0)


def test_adam_zero_gradient_no_change():
    p = Parameter("w", np.array([0.7, -2.0]))
    adam_step([p], AdamState())
    assert np.array_equal(p.value, [0.7, -2.0])


def test_adam_quadratic_converges():
    # oracle: scalar Adam recursion written out by hand
    w, m, v = 0.0, 0.0, 0.0
    ref = []
    for t in range(1, 101):
        g = 2 * (w - 3)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        w -= 0.05 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        ref.append(w)
    p = Parameter("w", np.array([0.0]))
    state = AdamState(lr=0.05)
    dist = []
    for _ in range(100):
        p.grad[...] = 2 * (p.value - 3)
        adam_step([p], state)
        dist.append(abs(p.value[0] - 3))
    np.testing.assert_allclose(p.value[0], ref[-1], rtol=0, atol=1e-12)
    assert all(b < a for a, b in zip(dist[10:], dist[11:]))
    assert dist[-1] < 0.5
    assert state.step == 100


def test_adam_non_finite_gradient_names_parameter():
    good = Parameter("good", np.zeros(2))
    bad = Parameter("layer.W", np.zeros(2))
    bad.grad[0] = np.nan
    with pytest.raises(NumericError, match="layer.W"):
        adam_step([good, bad], AdamState())


def test_adam_deterministic():
    def run():
        p = Parameter("w", np.linspace(-1, 1, 5))
        s = AdamState()
        for k in range(7):
            p.grad[...] = np.sin(p.value * (k + 1))
            adam_step([p], s)
        return p.value
    assert np.array_equal(run(), run())


def test_parameter_shape_check():
    with pytest.raises(ValueError):
        Parameter("x", np.zeros(3), np.zeros(2))


def test_uniform_init_bounds():
    w = uniform_init(np.random.default_rng(0), (1000,), 16)
    assert np.all(np.abs(w) <= 0.25)
    assert w.max() > 0.2 and w.min() < -0.2
