import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualstream import autograd as ag
from dualstream.autograd import Tensor
from dualstream.errors import NumericError
from dualstream.gradsuite import op_cases


def ref_conv2d(x, w, b, stride, pad):
    """Nested-loop reference convolution."""
    n, c, h, wd = x.shape
    o, _, k, _ = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    oh = (h + 2 * pad - k) // stride + 1
    ow = (wd + 2 * pad - k) // stride + 1
    out = np.zeros((n, o, oh, ow))
    for ni in range(n):
        for oi in range(o):
            for i in range(oh):
                for j in range(ow):
                    patch = xp[ni, :, i * stride:i * stride + k, j * stride:j * stride + k]
                    out[ni, oi, i, j] = (patch * w[oi]).sum() + (b[oi] if b is not None else 0.0)
    return out


# -- convolution ----------------------------------------------------------------


def test_conv_identity_kernel():
    out = ag.conv2d(Tensor(np.array([[[[5.0]]]])), Tensor(np.array([[[[1.0]]]])))
    assert out.data.tolist() == [[[[5.0]]]]


def test_conv_zero_weight_gives_zero():
    x = Tensor(np.random.default_rng(0).standard_normal((2, 3, 5, 5)))
    out = ag.conv2d(x, Tensor(np.zeros((4, 3, 3, 3))), Tensor(np.zeros(4)), padding=1)
    assert np.all(out.data == 0)


def test_conv_all_ones_is_nine():
    out = ag.conv2d(Tensor(np.ones((1, 1, 3, 3))), Tensor(np.ones((1, 1, 3, 3))))
    assert out.shape == (1, 1, 1, 1)
    assert out.data.item() == 9.0


@pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 1), (2, 0), (3, 2)])
def test_conv_matches_loop_reference(stride, pad):
    rng = np.random.default_rng(stride * 10 + pad)
    x, w, b = rng.standard_normal((2, 3, 7, 6)), rng.standard_normal((4, 3, 3, 3)), rng.standard_normal(4)
    out = ag.conv2d(Tensor(x), Tensor(w), Tensor(b), stride=stride, padding=pad)
    np.testing.assert_allclose(out.data, ref_conv2d(x, w, b, stride, pad), rtol=1e-12, atol=1e-12)


def test_conv_rejects_bad_shapes():
    with pytest.raises(ValueError):
        ag.conv2d(Tensor(np.ones((1, 2, 4, 4))), Tensor(np.ones((1, 3, 3, 3))))


def test_depthwise_identity_and_zero():
    x = np.random.default_rng(1).standard_normal((1, 2, 4, 4))
    ident = ag.depthwise_conv2d(Tensor(x), Tensor(np.ones((2, 1, 1, 1))))
    np.testing.assert_array_equal(ident.data, x)
    zero = ag.depthwise_conv2d(Tensor(x), Tensor(np.zeros((2, 1, 3, 3))), padding=1)
    assert np.all(zero.data == 0)


def test_depthwise_channel_sums_and_independence():
    x = np.stack([np.arange(9.0).reshape(3, 3), 10 * np.arange(9.0).reshape(3, 3)])[None]
    w = np.ones((2, 1, 3, 3))
    out = ag.depthwise_conv2d(Tensor(x), Tensor(w)).data
    assert out[0, :, 0, 0].tolist() == [36.0, 360.0]
    probe = x.copy()
    probe[0, 1] += 100.0
    out2 = ag.depthwise_conv2d(Tensor(probe), Tensor(w)).data
    assert out2[0, 0, 0, 0] == out[0, 0, 0, 0]
    assert out2[0, 1, 0, 0] != out[0, 1, 0, 0]


def test_depthwise_matches_grouped_reference():
    rng = np.random.default_rng(2)
    x, w = rng.standard_normal((2, 3, 6, 6)), rng.standard_normal((3, 1, 3, 3))
    out = ag.depthwise_conv2d(Tensor(x), Tensor(w), stride=2, padding=1).data
    for c in range(3):
        ref = ref_conv2d(x[:, c:c + 1], w[c:c + 1], None, 2, 1)
        np.testing.assert_allclose(out[:, c:c + 1], ref, rtol=1e-12, atol=1e-12)


# -- normalisation and pointwise --------------------------------------------------


def test_batchnorm_train_mode_zero_mean():
    rng = np.random.default_rng(3)
    x = Tensor(rng.standard_normal((4, 3, 5, 5)) * 5 + 2)
    state = ag.BatchNormState.create(3, np.float64)
    out = ag.batchnorm2d(x, Tensor(np.ones(3)), Tensor(np.zeros(3)), state, True)
    assert np.abs(out.data.mean(axis=(0, 2, 3))).max() < 1e-5


def test_batchnorm_affine_law():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((8, 2, 6, 6))
    x = (x - x.mean(axis=(0, 2, 3), keepdims=True)) / x.std(axis=(0, 2, 3), keepdims=True)
    state = ag.BatchNormState.create(2, np.float64)
    out = ag.batchnorm2d(Tensor(x), Tensor(np.full(2, 2.0)), Tensor(np.full(2, 3.0)), state, True).data
    np.testing.assert_allclose(out.mean(axis=(0, 2, 3)), 3.0, atol=1e-6)
    np.testing.assert_allclose(out.std(axis=(0, 2, 3)), 2.0, atol=1e-3)


def test_batchnorm_running_stats_unbiased():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((2, 1, 2, 2)) * 3 + 1
    state = ag.BatchNormState.create(1, np.float64)
    ag.batchnorm2d(Tensor(x), Tensor(np.ones(1)), Tensor(np.zeros(1)), state, True)
    np.testing.assert_allclose(state.running_mean, 0.1 * x.mean())
    np.testing.assert_allclose(state.running_var, 0.9 + 0.1 * x.var(ddof=1))


def test_batchnorm_eval_uses_running_stats():
    state = ag.BatchNormState(np.array([2.0]), np.array([4.0]))
    out = ag.batchnorm2d(Tensor(np.full((1, 1, 1, 1), 6.0)), Tensor(np.ones(1)), Tensor(np.zeros(1)), state, False)
    assert out.data.item() == pytest.approx(4.0 / np.sqrt(4.0 + 1e-5))


def test_pointwise_values():
    x = Tensor(np.array([-1.0, 0.5, 7.0]))
    assert ag.relu(x).data.tolist() == [0.0, 0.5, 7.0]
    assert ag.relu6(x).data.tolist() == [0.0, 0.5, 6.0]
    assert ag.sigmoid(Tensor(np.array([0.0]))).data.item() == 0.5


def test_sigmoid_is_stable_at_extremes():
    out = ag.sigmoid(Tensor(np.array([-1000.0, 1000.0]))).data
    assert out.tolist() == [0.0, 1.0]


def test_pools_and_concat():
    assert ag.global_avg_pool(Tensor(np.full((1, 1, 3, 3), 7.0))).data.item() == 7.0
    assert ag.global_avg_pool(Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]))).data.item() == 2.5
    a, b = np.ones((1, 2, 2, 2)), np.zeros((1, 3, 2, 2))
    c = ag.concat_channels(Tensor(a), Tensor(b)).data
    assert c.shape == (1, 5, 2, 2)
    np.testing.assert_array_equal(c[:, :2], a)
    np.testing.assert_array_equal(c[:, 2:], b)


def test_linear_identity_and_zero():
    x = np.random.default_rng(6).standard_normal((3, 4))
    np.testing.assert_array_equal(ag.linear(Tensor(x), Tensor(np.eye(4)), Tensor(np.zeros(4))).data, x)
    out = ag.linear(Tensor(x), Tensor(np.zeros((2, 4))), Tensor(np.array([1.0, -2.0]))).data
    np.testing.assert_array_equal(out, np.tile([1.0, -2.0], (3, 1)))


def test_cross_entropy_values():
    loss = ag.softmax_cross_entropy(Tensor(np.zeros((3, 4))), [0, 1, 2])
    assert loss.data.item() == pytest.approx(np.log(4))
    big = ag.softmax_cross_entropy(Tensor(np.array([[1000.0, 0.0, 0.0, 0.0]])), [0])
    assert big.data.item() == pytest.approx(0.0, abs=1e-12)


# -- engine behaviour ------------------------------------------------------------


def test_backward_accumulates_shared_inputs():
    x = Tensor(np.array([3.0]), requires_grad=True)
    y = ag.add(ag.mul(x, x), x)  # x^2 + x
    y.backward()
    assert x.grad.tolist() == [7.0]


def test_second_backward_is_refused():
    x = Tensor(np.array([1.0]), requires_grad=True)
    y = ag.mul(x, x)
    y.backward()
    with pytest.raises(RuntimeError):
        y.backward()


def test_non_finite_inputs_raise():
    bad = np.ones((1, 1, 3, 3))
    bad[0, 0, 1, 1] = np.nan
    with pytest.raises(NumericError):
        ag.conv2d(Tensor(bad), Tensor(np.ones((1, 1, 3, 3))))
    with pytest.raises(NumericError):
        ag.linear(Tensor(np.array([[np.inf, 0.0]])), Tensor(np.eye(2)))
    with pytest.raises(NumericError):
        ag.softmax_cross_entropy(Tensor(np.array([[np.nan, 0.0]])), [0])


def test_no_grad_records_nothing():
    x = Tensor(np.array([2.0]), requires_grad=True)
    with ag.no_grad():
        y = ag.mul(x, x)
    assert not y.requires_grad


def test_sgd_step_examples():
    p, st_ = ag.sgd_momentum_step([np.zeros(1)], [np.ones(1)], ag.OptimizerState(0.1, 0.0))
    assert p[0].tolist() == [-0.1]
    q = np.array([1.0, 2.0])
    p, _ = ag.sgd_momentum_step([q], [np.zeros(2)], ag.OptimizerState(0.1, 0.9))
    np.testing.assert_array_equal(p[0], q)


def test_sgd_step_is_pure():
    rng = np.random.default_rng(7)
    p, g = [rng.standard_normal(5)], [rng.standard_normal(5)]
    state = ag.OptimizerState(0.05, 0.9, [rng.standard_normal(5)])
    snapshot = [a.copy() for a in p + g + state.velocity]
    a1, s1 = ag.sgd_momentum_step(p, g, state)
    a2, s2 = ag.sgd_momentum_step(p, g, state)
    assert a1[0].tobytes() == a2[0].tobytes() and s1.velocity[0].tobytes() == s2.velocity[0].tobytes()
    for before, after in zip(snapshot, p + g + state.velocity):
        np.testing.assert_array_equal(before, after)


def test_momentum_accumulates():
    state = ag.OptimizerState(1.0, 0.5)
    p = [np.zeros(1)]
    p, state = ag.sgd_momentum_step(p, [np.ones(1)], state)
    p, state = ag.sgd_momentum_step(p, [np.ones(1)], state)
    assert p[0].tolist() == [-2.5]  # v: 1 then 1.5


# -- gradient checking ----------------------------------------------------------


def test_gradcheck_linear_passes():
    rng = np.random.default_rng(8)
    rep = ag.gradient_check(ag.linear, [rng.standard_normal((3, 4)), rng.standard_normal((2, 4)), rng.standard_normal(2)])
    assert rep.passed and rep.checked == 12 + 8 + 2


def test_gradcheck_catches_corrupted_backward():
    def bad_square(x):
        return Tensor.from_op(x.data ** 2, (x,), lambda g: (g * x.data,), "bad_square")  # should be 2x

    rep = ag.gradient_check(bad_square, [np.random.default_rng(9).standard_normal(5)])
    assert not rep.passed


@pytest.mark.parametrize("name", sorted(op_cases()))
def test_each_op_passes_gradcheck(name):
    case = op_cases()[name]
    for seed in range(3):
        assert case(seed).passed, f"{name} seed {seed}"


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 3), st.integers(0, 2**31 - 1))
def test_linear_backward_matches_closed_form(n, f, g, seed):
    rng = np.random.default_rng(seed)
    x = Tensor(rng.standard_normal((n, f)), requires_grad=True)
    w = Tensor(rng.standard_normal((g, f)), requires_grad=True)
    b = Tensor(rng.standard_normal(g), requires_grad=True)
    up = rng.standard_normal((n, g))
    ag.linear(x, w, b).backward(up)
    np.testing.assert_allclose(x.grad, up @ w.data, atol=1e-12)
    np.testing.assert_allclose(w.grad, up.T @ x.data, atol=1e-12)
    np.testing.assert_allclose(b.grad, up.sum(axis=0), atol=1e-12)
