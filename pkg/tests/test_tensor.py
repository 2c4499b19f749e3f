import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stet import tensor as T
from stet.exceptions import (
    ConfigurationError,
    DegenerateSliceError,
    DimensionError,
    RankError,
)
from stet.tensor import RngState, Tensor


def leaf(arr):
    return Tensor(np.asarray(arr, dtype=float), requires_grad=True)


@pytest.fixture(autouse=True)
def fresh_tape():
    T.tape().reset()
    yield
    T.tape().reset()


class TestMatmul:
    def test_identity(self):
        out = T.matmul(Tensor(np.eye(2)), Tensor([[1.0, 2.0], [3.0, 4.0]]))
        np.testing.assert_array_equal(out.data, [[1.0, 2.0], [3.0, 4.0]])

    def test_row_times_column(self):
        out = T.matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]]))
        np.testing.assert_array_equal(out.data, [[11.0]])

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 2\)"):
            T.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 2))))

    def test_gradient_matches_finite_differences(self):
        rng = RngState(7)
        a = leaf(rng.normal(size=(3, 4)))
        b = leaf(rng.normal(size=(4, 2)))
        report = T.finite_diff_check(
            lambda: T.tsum(T.matmul(a, b)), {"a": a, "b": b}, rel_tol=1e-4, step=1e-3
        )
        assert report.passed, report

    def test_batched_matmul_gradients(self):
        rng = RngState(11)
        a = leaf(rng.normal(size=(2, 3, 4)))
        b = leaf(rng.normal(size=(4, 5)))
        report = T.finite_diff_check(
            lambda: T.tsum(T.mul(T.matmul(a, b), T.matmul(a, b))), {"a": a, "b": b}
        )
        assert report.passed, report


class TestSoftmax:
    def test_uniform_logits(self):
        out = T.softmax_lastdim(Tensor([0.0, 0.0, 0.0]))
        np.testing.assert_allclose(out.data, [1 / 3, 1 / 3, 1 / 3])

    def test_large_logits_no_overflow(self):
        out = T.softmax_lastdim(Tensor([1000.0, 1000.0]))
        np.testing.assert_allclose(out.data, [0.5, 0.5])

    def test_neg_inf_sentinel_is_exact_zero(self):
        out = T.softmax_lastdim(Tensor([0.0, -np.inf]))
        assert out.data[0] == 1.0
        assert out.data[1] == 0.0

    def test_all_masked_slice_raises(self):
        with pytest.raises(DegenerateSliceError):
            T.softmax_lastdim(Tensor([-np.inf, -np.inf]))

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=8))
    @settings(max_examples=50, deadline=None)
    def test_rows_sum_to_one(self, logits):
        out = T.softmax_lastdim(Tensor(logits))
        assert abs(out.data.sum() - 1.0) < 1e-6

    def test_gradient(self):
        x = leaf(RngState(3).normal(size=(4, 5)))
        w = Tensor(RngState(4).normal(size=(4, 5)))
        report = T.finite_diff_check(
            lambda: T.tsum(T.mul(T.softmax_lastdim(x), w)), {"x": x}
        )
        assert report.passed, report


class TestUnfoldTime:
    def test_t3_w3_padding_layout(self):
        x = Tensor(np.arange(6, dtype=float).reshape(3, 2))
        out, valid = T.unfold_time(x, 3)
        r0, r1, r2 = x.data
        zero = np.zeros(2)
        expect = np.array([[zero, r0, r1], [r0, r1, r2], [r1, r2, zero]])
        np.testing.assert_array_equal(out.data, expect)
        np.testing.assert_array_equal(valid, [[False, True, True], [True, True, True], [True, True, False]])

    def test_w1_is_identity_window(self):
        x = Tensor(np.arange(8, dtype=float).reshape(4, 2))
        out, valid = T.unfold_time(x, 1)
        np.testing.assert_array_equal(out.data[:, 0, :], x.data)
        assert valid.all()

    def test_wide_window_contains_all_rows(self):
        # t=5, w=11: indices i-5..i+5 cover 0..4 for every i, plus 6 pads
        x = Tensor(np.arange(10, dtype=float).reshape(5, 2))
        out, valid = T.unfold_time(x, 11)
        assert valid.sum(axis=1).tolist() == [5] * 5
        for i in range(5):
            rows = out.data[i][valid[i]]
            np.testing.assert_array_equal(rows, x.data)

    def test_even_window_rejected(self):
        with pytest.raises(ConfigurationError):
            T.unfold_time(Tensor(np.zeros((4, 2))), 4)

    @given(st.integers(1, 9), st.integers(0, 4))
    @settings(max_examples=40, deadline=None)
    def test_center_slot_reconstructs_input(self, t, half_w):
        w = 2 * half_w + 1
        x = Tensor(np.arange(t * 3, dtype=float).reshape(t, 3))
        out, _ = T.unfold_time(x, w)
        np.testing.assert_array_equal(out.data[:, w // 2, :], x.data)

    def test_gradient_scatter(self):
        x = leaf(RngState(5).normal(size=(6, 3)))
        w = Tensor(RngState(6).normal(size=(6, 5, 3)))

        def f():
            out, _ = T.unfold_time(x, 5)
            return T.tsum(T.mul(out, w))

        report = T.finite_diff_check(f, {"x": x})
        assert report.passed, report

    def test_batched_matches_per_sample(self):
        rng = RngState(9)
        xb = rng.normal(size=(3, 7, 4))
        out_b, _ = T.unfold_time(Tensor(xb), 3)
        for i in range(3):
            out_i, _ = T.unfold_time(Tensor(xb[i]), 3)
            np.testing.assert_array_equal(out_b.data[i], out_i.data)


class TestBackward:
    def test_sum_gradient_is_ones(self):
        x = leaf([1.0, 2.0, 3.0])
        T.backward(T.tsum(x))
        np.testing.assert_array_equal(x.grad, [1.0, 1.0, 1.0])

    def test_elementwise_square(self):
        x = leaf([1.0, 2.0])
        T.backward(T.tsum(T.mul(x, x)))
        np.testing.assert_array_equal(x.grad, [2.0, 4.0])

    def test_non_scalar_loss_rejected(self):
        with pytest.raises(RankError):
            T.backward(leaf([1.0, 2.0]))

    def test_repeated_backward_accumulates(self):
        x = leaf([1.0, 2.0])
        loss = T.tsum(T.mul(x, x))
        T.backward(loss)
        T.backward(loss)
        np.testing.assert_array_equal(x.grad, [4.0, 8.0])

    def test_zero_grad_resets_exactly(self):
        x = leaf([1.0, 2.0])
        T.backward(T.tsum(x))
        x.zero_grad()
        assert (x.grad == 0).all()

    def test_shared_subexpression_counted_once_per_use(self):
        x = leaf([3.0])
        y = T.mul(x, x)  # used twice below
        T.backward(T.tsum(T.add(y, y)))
        np.testing.assert_array_equal(x.grad, [12.0])

    def test_tape_reset_empties(self):
        x = leaf([1.0])
        T.tsum(T.mul(x, x))
        assert len(T.tape()) > 0
        T.tape().reset()
        assert len(T.tape()) == 0

    def test_no_grad_suppresses_taping(self):
        x = leaf([1.0])
        with T.no_grad():
            out = T.mul(x, x)
        assert len(T.tape()) == 0
        assert not out.requires_grad


class TestElementwiseSuite:
    def test_sigmoid_at_zero(self):
        assert T.sigmoid(Tensor(0.0)).item() == 0.5

    def test_sigmoid_extremes_stable(self):
        out = T.sigmoid(Tensor([-1000.0, 1000.0]))
        assert np.isfinite(out.data).all()
        np.testing.assert_allclose(out.data, [0.0, 1.0], atol=1e-12)

    def test_concat_hidden_axis(self):
        a = Tensor(np.zeros((5, 3)))
        b = Tensor(np.ones((5, 3)))
        out = T.concat([a, b], axis=-1)
        assert out.shape == (5, 6)

    def test_concat_shape_mismatch(self):
        with pytest.raises(DimensionError):
            T.concat([Tensor(np.zeros((5, 3))), Tensor(np.zeros((4, 3)))], axis=-1)

    def test_broadcast_mismatch_raises(self):
        with pytest.raises(DimensionError):
            T.add(Tensor(np.zeros((3, 2))), Tensor(np.zeros((4, 2))))

    def test_dropout_zero_rate_is_identity(self):
        x = leaf(np.arange(4.0))
        out = T.dropout(x, 0.0, RngState(0), training=True)
        assert out is x

    def test_dropout_eval_mode_is_identity(self):
        x = leaf(np.arange(4.0))
        out = T.dropout(x, 0.5, RngState(0), training=False)
        assert out is x

    def test_dropout_scales_survivors(self):
        x = Tensor(np.ones(10000))
        out = T.dropout(x, 0.2, RngState(1), training=True)
        survivors = out.data[out.data > 0]
        np.testing.assert_allclose(survivors, 1.0 / 0.8)
        assert abs(out.data.mean() - 1.0) < 0.05

    def test_dropout_gradient_uses_same_mask(self):
        x = leaf(np.ones(1000))
        out = T.dropout(x, 0.3, RngState(2), training=True)
        T.backward(T.tsum(out))
        np.testing.assert_array_equal(x.grad, np.where(out.data > 0, 1 / 0.7, 0.0))

    def test_layer_norm_normalizes(self):
        x = Tensor(RngState(8).normal(size=(4, 16)))
        out = T.layer_norm(x, Tensor(np.ones(16)), Tensor(np.zeros(16)))
        np.testing.assert_allclose(out.data.mean(axis=-1), 0.0, atol=1e-12)
        np.testing.assert_allclose(out.data.std(axis=-1), 1.0, atol=1e-3)

    def test_clamp_gradient_masks_clipped(self):
        x = leaf([-1.0, 0.5, 2.0])
        T.backward(T.tsum(T.clamp(x, 0.0, 1.0)))
        np.testing.assert_array_equal(x.grad, [0.0, 1.0, 0.0])


OP_CASES = {
    "add": lambda x, y: T.add(x, y),
    "sub": lambda x, y: T.sub(x, y),
    "mul": lambda x, y: T.mul(x, y),
    "div": lambda x, y: T.div(x, T.add(T.mul(y, y), 1.0)),
    "sigmoid": lambda x, y: T.mul(T.sigmoid(x), y),
    "exp": lambda x, y: T.mul(T.exp(x), y),
    "log": lambda x, y: T.mul(T.log(T.add(T.mul(x, x), 1.0)), y),
    "power": lambda x, y: T.mul(T.power(T.add(T.mul(x, x), 0.5), 1.7), y),
    "relu": lambda x, y: T.mul(T.relu(x), y),
    "mean": lambda x, y: T.mul(T.tmean(x, axis=0, keepdims=True), y),
    "layer_norm": lambda x, y: T.mul(T.layer_norm(x, Tensor(np.ones(4)), Tensor(np.zeros(4))), y),
    "logsumexp": lambda x, y: T.mul(T.logsumexp_lastdim(x, keepdims=True), y),
    "reshape": lambda x, y: T.mul(T.reshape(x, (4, 3)), T.reshape(y, (4, 3))),
    "transpose": lambda x, y: T.mul(T.transpose(x, (1, 0)), T.transpose(y, (1, 0))),
    "concat": lambda x, y: T.concat([x, y], axis=-1),
}


@pytest.mark.parametrize("name", sorted(OP_CASES))
def test_every_op_gradient_matches_finite_differences(name):
    rng = RngState(zlib_seed := sum(map(ord, name)))
    x = leaf(rng.normal(size=(3, 4)))
    y = leaf(rng.normal(size=(3, 4)))
    fn = OP_CASES[name]
    report = T.finite_diff_check(lambda: T.tsum(fn(x, y)), {"x": x, "y": y}, rel_tol=1e-4)
    assert report.passed, f"{name}: {report}"


class TestFiniteDiffCheck:
    def test_quadratic_bowl(self):
        x = leaf([1.0, 2.0, 3.0])
        report = T.finite_diff_check(lambda: T.tsum(T.mul(x, x)), {"x": x}, rel_tol=1e-6)
        assert report.passed, report
        assert report.max_rel_discrepancy < 1e-6

    def test_detects_wrong_gradient(self):
        x = leaf([1.0, 2.0])

        def broken():
            out = T._make(x.data**3, (x,), lambda g: (g * 2.0 * x.data,))
            return T.tsum(out)

        report = T.finite_diff_check(broken, {"x": x}, rel_tol=1e-4)
        assert not report.passed

    def test_sampled_coordinates(self):
        x = leaf(RngState(12).normal(size=(20, 20)))
        report = T.finite_diff_check(
            lambda: T.tsum(T.mul(x, x)), {"x": x}, max_entries_per_param=10
        )
        assert report.passed


class TestRngState:
    def test_same_seed_same_stream(self):
        a = RngState(123).normal(size=100)
        b = RngState(123).normal(size=100)
        np.testing.assert_array_equal(a, b)

    def test_derive_is_deterministic_and_independent(self):
        a1 = RngState(5).derive("mask", 3).uniform(size=10)
        a2 = RngState(5).derive("mask", 3).uniform(size=10)
        b = RngState(5).derive("mask", 4).uniform(size=10)
        np.testing.assert_array_equal(a1, a2)
        assert not np.array_equal(a1, b)

    def test_state_round_trip_resumes_stream(self):
        rng = RngState(77)
        rng.normal(size=13)
        saved = rng.get_state()
        ahead = rng.normal(size=9)
        rng2 = RngState(77)
        rng2.set_state(saved)
        np.testing.assert_array_equal(rng2.normal(size=9), ahead)

    def test_algorithm_identifier_documented(self):
        assert RngState.algorithm == "pcg64"
