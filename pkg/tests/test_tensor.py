import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from conftest import assert_grads_match_fd
from slidegt import tensor as T
from slidegt.errors import ContractError, DimensionError, NonFiniteError
from slidegt.tensor import Tensor, backward, constant

seeds = st.integers(0, 2**32 - 1)


def rand(rng, *shape):
    return Tensor(rng.normal(0.0, 1.0, shape), requires_grad=True)


# ----------------------------------------------------------------- forwards


def test_matmul_identity():
    x = Tensor(np.arange(6.0).reshape(2, 3))
    out = T.matmul(x, Tensor(np.eye(3)))
    assert_array_equal(out.data, x.data)


def test_matmul_small_case():
    out = T.matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]]))
    assert_array_equal(out.data, [[11.0]])


def test_relu_sign_cases_and_idempotence():
    x = Tensor([[-1.0, 0.0, 2.0]])
    out = T.relu(x)
    assert_array_equal(out.data, [[0.0, 0.0, 2.0]])
    assert_array_equal(T.relu(out).data, out.data)


def test_softmax_uniform_on_constant_row():
    out = T.softmax_rows(Tensor([[3.0, 3.0, 3.0, 3.0]]))
    assert_allclose(out.data, np.full((1, 4), 0.25), rtol=0, atol=1e-15)


def test_log_softmax_matches_log_of_softmax():
    rng = np.random.default_rng(0)
    x = Tensor(rng.normal(0, 1, (4, 5)))
    assert_allclose(T.log_softmax_rows(x).data, np.log(T.softmax_rows(x).data),
                    atol=1e-12)


def test_layer_norm_constant_row_maps_to_beta():
    gamma = Tensor(np.ones(3))
    beta = Tensor([1.0, -2.0, 0.5])
    out = T.layer_norm(Tensor([[7.0, 7.0, 7.0]]), gamma, beta)
    assert_allclose(out.data, [[1.0, -2.0, 0.5]], atol=1e-12)


def test_layer_norm_standardizes_rows():
    rng = np.random.default_rng(1)
    x = Tensor(rng.normal(3.0, 2.0, (6, 32)))
    out = T.layer_norm(x, Tensor(np.ones(32)), Tensor(np.zeros(32)))
    assert_allclose(out.data.mean(axis=1), 0.0, atol=1e-12)
    assert_allclose(out.data.var(axis=1), 1.0, atol=1e-4)  # eps shrinks variance


def test_take_rows_and_concat():
    x = Tensor(np.arange(12.0).reshape(4, 3))
    picked = T.take_rows(x, np.array([2, 0]))
    assert_array_equal(picked.data, [[6.0, 7.0, 8.0], [0.0, 1.0, 2.0]])
    both = T.concat_rows(picked, picked)
    assert both.shape == (4, 3)
    wide = T.concat_cols([picked, picked])
    assert wide.shape == (2, 6)
    assert_array_equal(wide.data[:, 3:], picked.data)


def test_scalar_reductions():
    x = Tensor(np.arange(6.0).reshape(2, 3))
    assert T.sum_all(x).item() == 15.0
    assert T.mean_all(x).item() == 2.5


def test_forward_is_bitwise_repeatable():
    rng = np.random.default_rng(5)
    a = rng.normal(0, 1, (5, 4))
    b = rng.normal(0, 1, (4, 3))

    def run():
        return T.softmax_rows(T.matmul(Tensor(a), Tensor(b))).data.tobytes()

    assert run() == run()


@given(seeds)
def test_softmax_rows_are_distributions(seed):
    rng = np.random.default_rng(seed)
    out = T.softmax_rows(Tensor(rng.normal(0, 3, (4, 6)))).data
    assert (out >= 0).all()
    assert_allclose(out.sum(axis=1), 1.0, atol=1e-12)


@given(seeds, st.floats(-50, 50))
def test_softmax_shift_invariance(seed, shift):
    rng = np.random.default_rng(seed)
    x = rng.normal(0, 2, (3, 5))
    a = T.softmax_rows(Tensor(x)).data
    b = T.softmax_rows(Tensor(x + shift)).data
    assert_allclose(a, b, atol=1e-12)


@given(seeds, st.floats(0.5, 2.0), st.floats(-3, 3))
def test_layer_norm_row_affine_invariance(seed, a, b):
    rng = np.random.default_rng(seed)
    x = rng.normal(0, 2, (4, 16))
    gamma, beta = Tensor(np.ones(16)), Tensor(np.zeros(16))
    base = T.layer_norm(Tensor(x), gamma, beta).data
    moved = T.layer_norm(Tensor(a * x + b), gamma, beta).data
    assert_allclose(moved, base, atol=1e-4)  # eps keeps this from being exact


# ---------------------------------------------------------------- gradients


def scalarize(out, rng):
    """Reduce an op output to a generic scalar so every element gets a pull."""
    c = constant(rng.normal(0.0, 1.0, out.shape))
    return T.sum_all(T.mul(out, c))


def test_backward_of_plain_sum_is_ones():
    w = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    backward(T.sum_all(w))
    assert_array_equal(w.grad, np.ones((2, 3)))


def test_gradients_match_fd_elementwise_ops():
    rng = np.random.default_rng(7)
    a = rand(rng, 4, 3)
    b = rand(rng, 4, 3)
    s = Tensor(0.7, requires_grad=True)
    col = rand(rng, 4, 1)
    c = constant(rng.normal(0, 1, (4, 3)))

    cases = [
        (lambda: T.sum_all(T.mul(T.add(a, b), c)), [a, b]),
        (lambda: T.sum_all(T.mul(T.sub(a, b), c)), [a, b]),
        (lambda: T.sum_all(T.mul(T.mul(a, b), c)), [a, b]),
        (lambda: T.sum_all(T.mul(T.mul(a, s), c)), [a, s]),
        (lambda: T.sum_all(T.mul(T.mul(a, col), c)), [a, col]),
        (lambda: T.sum_all(T.mul(T.div(a, s), c)), [a, s]),
        (lambda: T.sum_all(T.mul(T.scale(a, -1.7), c)), [a]),
        (lambda: T.mean_all(T.tanh(a)), [a]),
    ]
    for build, params in cases:
        assert_grads_match_fd(build, params)


def test_gradients_match_fd_bias_broadcast():
    rng = np.random.default_rng(8)
    x = rand(rng, 5, 3)
    bias = Tensor(rng.normal(0, 1, 3), requires_grad=True)
    c = constant(rng.normal(0, 1, (5, 3)))
    assert_grads_match_fd(lambda: T.sum_all(T.mul(T.add(x, bias), c)), [x, bias])


def test_gradients_match_fd_matmul_transpose():
    rng = np.random.default_rng(9)
    a = rand(rng, 4, 3)
    b = rand(rng, 3, 5)
    c = constant(rng.normal(0, 1, (4, 5)))
    assert_grads_match_fd(lambda: T.sum_all(T.mul(T.matmul(a, b), c)), [a, b])
    ct = constant(rng.normal(0, 1, (3, 4)))
    assert_grads_match_fd(lambda: T.sum_all(T.mul(T.transpose(a), ct)), [a])


def test_gradients_match_fd_relu_away_from_kink():
    rng = np.random.default_rng(10)
    vals = rng.normal(0, 1, (4, 4))
    vals[np.abs(vals) < 0.1] = 0.5  # keep the FD step away from the kink
    x = Tensor(vals, requires_grad=True)
    c = constant(rng.normal(0, 1, (4, 4)))
    assert_grads_match_fd(lambda: T.sum_all(T.mul(T.relu(x), c)), [x])


def test_relu_subgradient_at_zero_is_zero():
    x = Tensor([[0.0, -1.0, 3.0]], requires_grad=True)
    backward(T.sum_all(T.relu(x)))
    assert_array_equal(x.grad, [[0.0, 0.0, 1.0]])


def test_gradients_match_fd_sqrt():
    rng = np.random.default_rng(11)
    x = Tensor(rng.uniform(0.5, 3.0, (3, 3)), requires_grad=True)
    c = constant(rng.normal(0, 1, (3, 3)))
    assert_grads_match_fd(lambda: T.sum_all(T.mul(T.sqrt(x), c)), [x])


def test_gradients_match_fd_softmaxes():
    rng = np.random.default_rng(12)
    x = rand(rng, 3, 5)
    c = constant(rng.normal(0, 1, (3, 5)))
    assert_grads_match_fd(lambda: T.sum_all(T.mul(T.softmax_rows(x), c)), [x])
    assert_grads_match_fd(lambda: T.sum_all(T.mul(T.log_softmax_rows(x), c)), [x])


def test_gradients_match_fd_layer_norm():
    rng = np.random.default_rng(13)
    x = rand(rng, 4, 6)
    gamma = Tensor(rng.uniform(0.5, 1.5, 6), requires_grad=True)
    beta = Tensor(rng.normal(0, 1, 6), requires_grad=True)
    c = constant(rng.normal(0, 1, (4, 6)))
    assert_grads_match_fd(
        lambda: T.sum_all(T.mul(T.layer_norm(x, gamma, beta), c)),
        [x, gamma, beta])


def test_gradients_match_fd_take_and_concat():
    rng = np.random.default_rng(14)
    x = rand(rng, 5, 3)
    y = rand(rng, 2, 3)
    idx = np.array([4, 1, 2])
    c = constant(rng.normal(0, 1, (3, 3)))
    assert_grads_match_fd(lambda: T.sum_all(T.mul(T.take_rows(x, idx), c)), [x])
    c2 = constant(rng.normal(0, 1, (7, 3)))
    assert_grads_match_fd(
        lambda: T.sum_all(T.mul(T.concat_rows(x, y), c2)), [x, y])
    c3 = constant(rng.normal(0, 1, (2, 6)))
    assert_grads_match_fd(
        lambda: T.sum_all(T.mul(T.concat_cols([y, y]), c3)), [y])


def test_shared_parameter_accumulates_both_paths():
    w = Tensor([[2.0]], requires_grad=True)
    # loss = w*w -> gradient 2w = 4
    backward(T.sum_all(T.mul(w, w)))
    assert_allclose(w.grad, [[4.0]])


def test_disconnected_parameter_keeps_zero_gradient():
    rng = np.random.default_rng(15)
    used = rand(rng, 2, 2)
    unused = rand(rng, 2, 2)
    backward(T.sum_all(T.mul(used, used)))
    assert_array_equal(unused.grad, np.zeros((2, 2)))


def test_backward_accumulates_across_calls():
    w = Tensor(np.ones((2, 2)), requires_grad=True)
    backward(T.sum_all(w))
    backward(T.sum_all(w))
    assert_array_equal(w.grad, np.full((2, 2), 2.0))


def test_backward_is_deterministic():
    def run():
        rng = np.random.default_rng(16)
        a = rand(rng, 6, 6)
        b = rand(rng, 6, 6)
        h = T.relu(T.matmul(a, b))
        h = T.softmax_rows(T.add(h, T.matmul(h, b)))
        backward(T.sum_all(T.mul(h, h)))
        return a.grad.tobytes(), b.grad.tobytes()

    assert run() == run()


# ------------------------------------------------------------------- errors


def test_shape_mismatch_raises_with_both_shapes():
    a = Tensor(np.zeros((2, 3)))
    b = Tensor(np.zeros((4, 2)))
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(4, 2\)"):
        T.add(a, b)
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(4, 2\)"):
        T.matmul(a, b)
    with pytest.raises(DimensionError):
        T.mul(a, Tensor(np.zeros((3, 1))))


def test_non_scalar_loss_rejected():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ContractError, match="scalar"):
        backward(T.relu(x))


def test_non_finite_values_rejected_at_creation_and_after_ops():
    with pytest.raises(NonFiniteError):
        Tensor([[np.nan]])
    with pytest.raises(NonFiniteError):
        Tensor([[np.inf]])
    big = Tensor([[1.7e308]])
    with np.errstate(over="ignore"):
        with pytest.raises(NonFiniteError):
            T.add(big, big)
    with np.errstate(divide="ignore", invalid="ignore"):
        with pytest.raises(NonFiniteError):
            T.div(Tensor([[1.0]]), Tensor(0.0))


def test_constant_wrapper_does_not_track_gradients():
    arr = np.ones((2, 2))
    c = constant(arr)
    assert not c.requires_grad
    w = Tensor(np.ones((2, 2)), requires_grad=True)
    backward(T.sum_all(T.mul(c, w)))
    assert_array_equal(w.grad, np.ones((2, 2)))
