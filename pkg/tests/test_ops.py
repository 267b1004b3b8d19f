"""Operation-level behavior: shapes, values, errors.

Expected values are either trivially known, computed by an independent
oracle inside the test (explicit loops, dense matrices), or verified
limits; never copied from the implementation.
"""

import numpy as np
import pytest

from causalseq import ops
from causalseq.autodiff import Parameter, Tape, Tensor
from causalseq.errors import (CropError, InsufficientInputError,
                              TemporalMisalignmentError)


def t(values, tape=None):
    return Tensor(np.asarray(values, dtype=np.float64), tape)


def kernel(values, name="k"):
    return Parameter(np.asarray(values, dtype=np.float64), name)


class TestConv1dValid:
    def test_identity_kernel(self):
        y = ops.conv1d_valid(t([[1, 2, 3, 4]]), kernel([[[1.0]]]), None, 1)
        assert y.data.tolist() == [[1, 2, 3, 4]]

    def test_pure_decimation(self):
        y = ops.conv1d_valid(t([[1, 2, 3, 4, 5, 6]]), kernel([[[1.0]]]), None, 2)
        assert y.data.tolist() == [[1, 3, 5]]

    def test_edge_kernel_against_dot_product_oracle(self):
        x = np.array([[1.0, 2.0, 3.0, 4.0]])
        k = np.array([[[1.0, 0.0, -1.0]]])
        y = ops.conv1d_valid(t(x), kernel(k), None, 1)
        # oracle: direct dot product per output position
        expect = [sum(k[0][0][w] * x[0][t0 + w] for w in range(3)) for t0 in range(2)]
        assert y.data.tolist() == [expect]
        assert y.data.tolist() == [[-2.0, -2.0]]

    def test_output_length_formula(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            w = int(rng.integers(1, 6))
            s = int(rng.integers(1, 4))
            n = int(rng.integers(w, w + 20))
            y = ops.conv1d_valid(t(rng.standard_normal((2, n))),
                                 kernel(rng.standard_normal((3, 2, w))), None, s)
            assert y.time == (n - w) // s + 1

    def test_too_short_input(self):
        with pytest.raises(InsufficientInputError) as e:
            ops.conv1d_valid(t([[1.0, 2.0]]), kernel([[[1.0, 1.0, 1.0]]]), None, 1)
        assert e.value.required == 3

    def test_bias_broadcast(self):
        y = ops.conv1d_valid(t([[0.0, 0.0]]), kernel([[[0.0]]], "k"),
                             Parameter(np.array([5.0]), "b"), 1)
        assert y.data.tolist() == [[5.0, 5.0]]


class TestConv1dTransposed:
    def test_unit_kernel_repeats_frames(self):
        y = ops.conv1d_transposed(t([[3.0, 7.0]]), kernel([[[1.0, 1.0]]]), None, 2)
        assert y.data.tolist() == [[3.0, 3.0, 7.0, 7.0]]

    def test_single_frame_expansion(self):
        y = ops.conv1d_transposed(t([[1.0]]), kernel([[[2.0, 3.0]]]), None, 2)
        assert y.data.tolist() == [[2.0, 3.0]]

    def test_adjoint_of_forward_dense_matrix_oracle(self):
        # build the dense matrix of conv1d_valid by probing unit vectors,
        # transpose it, and compare with conv1d_transposed
        rng = np.random.default_rng(1)
        cin, cout, w, s, n = 2, 3, 3, 2, 9
        k = rng.standard_normal((cout, cin, w))
        m = (n - w) // s + 1
        dense = np.zeros((cout * m, cin * n))
        for i in range(cin):
            for u in range(n):
                e = np.zeros((cin, n))
                e[i, u] = 1.0
                dense[:, i * n + u] = ops.conv1d_valid(t(e), kernel(k), None, s).data.ravel()
        g = rng.standard_normal((cout, m))
        expect = (dense.T @ g.ravel()).reshape(cin, n)
        k_swapped = np.ascontiguousarray(np.swapaxes(k, 0, 1))
        got = ops.conv1d_transposed(t(g), kernel(k_swapped), None, s)
        assert got.time == (m - 1) * s + w
        np.testing.assert_allclose(got.data, expect[:, : got.time], atol=1e-12)

    def test_length_five_example(self):
        y = ops.conv1d_transposed(t([[1.0, 2.0]]), kernel([[[1.0, 0.0, 1.0]]]), None, 2)
        assert y.time == 5

    def test_empty_input(self):
        with pytest.raises(InsufficientInputError):
            ops.conv1d_transposed(t(np.zeros((1, 0))), kernel([[[1.0]]]), None, 2)


class TestCropConcat:
    def test_crop_front_lengths(self):
        x = t(np.arange(19, dtype=float).reshape(1, 19))
        y = ops.crop_front(x, 8)
        assert y.time == 11 and y.data[0, 0] == 8.0

    def test_crop_zero_is_identity(self):
        x = t([[1.0, 2.0]])
        assert ops.crop_front(x, 0) is x

    def test_crop_to_empty(self):
        y = ops.crop_front(t(np.ones((2, 5))), 5)
        assert y.time == 0

    def test_crop_exceeds_length(self):
        with pytest.raises(CropError):
            ops.crop_front(t(np.ones((1, 4))), 5)

    def test_concat_channel_counts(self):
        y = ops.concat_channels(t(np.ones((2, 7))), t(np.zeros((3, 7))))
        assert y.channels == 5 and y.time == 7
        assert y.data[:2].sum() == 14 and y.data[2:].sum() == 0

    def test_concat_with_empty_channels(self):
        a = t(np.ones((2, 4)))
        y = ops.concat_channels(a, t(np.zeros((0, 4))))
        assert np.array_equal(y.data, a.data)

    def test_concat_time_mismatch(self):
        with pytest.raises(TemporalMisalignmentError):
            ops.concat_channels(t(np.ones((1, 10))), t(np.ones((1, 11))))


class TestActivations:
    def test_gated_zero_first_argument(self):
        b = np.linspace(-3, 3, 7).reshape(1, 7)
        y = ops.gated_activation(t(np.zeros((1, 7))), t(b))
        assert np.all(y.data == 0)

    def test_leaky_relu_negative(self):
        y = ops.leaky_relu(t([[-1.0]]), 0.01)
        assert y.data[0, 0] == pytest.approx(-0.01)

    def test_gated_scalar_value(self):
        y = ops.gated_activation(t([[1.0]]), t([[0.0]]))
        assert y.data[0, 0] == pytest.approx(np.tanh(1.0) * 0.5)

    def test_sigmoid_tanh_values(self):
        x = np.array([[-30.0, 0.0, 30.0]])
        assert ops.sigmoid_act(t(x)).data == pytest.approx([[0.0, 0.5, 1.0]], abs=1e-12)
        assert ops.tanh_act(t(x)).data == pytest.approx(np.tanh(x))


class TestDropout:
    def test_p_zero_identity_both_modes(self):
        x = t(np.ones((2, 5)))
        assert ops.dropout(x, 0.0, True, np.random.default_rng(0)) is x
        assert ops.dropout(x, 0.0, False, None) is x

    def test_eval_mode_identity_bitwise(self):
        x = t(np.random.default_rng(0).standard_normal((3, 50)))
        y = ops.dropout(x, 0.7, False, None)
        assert y is x

    def test_training_preserves_mean_monte_carlo(self):
        rng = np.random.default_rng(42)
        x = t(np.full((100, 1000), 2.0))
        y = ops.dropout(x, 0.5, True, rng)
        assert abs(float(y.data.mean()) - 2.0) / 2.0 < 0.05


class TestEmbedding:
    def test_identity_table_round_trip(self):
        table = Parameter(np.eye(4), "table")
        idx = np.array([2, 0, 3])
        f = ops.embedding_lookup(table, idx)
        logits = ops.tied_projection(f, table)
        onehot = np.zeros((4, 3))
        onehot[idx, np.arange(3)] = 1
        assert np.array_equal(logits.data, onehot)

    def test_single_index_column(self):
        table = Parameter(np.arange(12, dtype=float).reshape(4, 3), "table")
        f = ops.embedding_lookup(table, np.array([1]))
        assert np.array_equal(f.data[:, 0], table.data[1])

    def test_out_of_range_index(self):
        table = Parameter(np.eye(3), "table")
        with pytest.raises(IndexError):
            ops.embedding_lookup(table, np.array([3]))

    def test_tied_gradient_sums_both_branches(self):
        # finite-difference oracle on the shared table
        rng = np.random.default_rng(3)
        table = Parameter(rng.standard_normal((5, 4)), "table")
        idx = rng.integers(0, 5, size=6)
        tgt = rng.integers(0, 5, size=6)

        def loss_value():
            f = ops.embedding_lookup(table, idx)
            return float(ops.softmax_cross_entropy(
                ops.tied_projection(f, table), tgt).data)

        tape = Tape()
        f = ops.embedding_lookup(table, idx, tape=tape)
        loss = ops.softmax_cross_entropy(ops.tied_projection(f, table), tgt)
        from causalseq.autodiff import backward

        table.zero_grad()
        backward(loss)
        eps = 1e-6
        for pos in [(0, 0), (2, 3), (4, 1)]:
            orig = table.data[pos]
            table.data[pos] = orig + eps
            up = loss_value()
            table.data[pos] = orig - eps
            down = loss_value()
            table.data[pos] = orig
            assert table.grad[pos] == pytest.approx((up - down) / (2 * eps), rel=1e-4)


class TestLosses:
    def test_uniform_softmax_is_log_v(self):
        for v in (2, 17, 256):
            logits = t(np.zeros((v, 4)))
            loss = ops.softmax_cross_entropy(logits, np.zeros(4, dtype=int))
            assert float(loss.data) == pytest.approx(np.log(v), rel=1e-12)

    def test_dominant_logit_drives_loss_to_zero(self):
        logits = np.zeros((5, 3))
        tgt = np.array([1, 2, 0])
        logits[tgt, np.arange(3)] = 1e4
        loss = ops.softmax_cross_entropy(t(logits), tgt)
        assert float(loss.data) < 1e-8

    def test_softmax_ce_brute_force_oracle(self):
        rng = np.random.default_rng(5)
        logits = rng.standard_normal((4, 3))
        tgt = rng.integers(0, 4, size=3)
        # oracle: normalized probabilities computed directly
        probs = np.exp(logits) / np.exp(logits).sum(axis=0, keepdims=True)
        expect = -np.mean(np.log(probs[tgt, np.arange(3)]))
        got = float(ops.softmax_cross_entropy(t(logits), tgt).data)
        assert abs(got - expect) / abs(expect) < 1e-10

    def test_empty_targets(self):
        with pytest.raises(ValueError):
            ops.softmax_cross_entropy(t(np.zeros((3, 0))), np.zeros(0, dtype=int))

    def test_bce_all_half(self):
        logits = t(np.zeros((88, 5)))
        loss = ops.binary_cross_entropy_sum(logits, np.zeros((88, 5)))
        assert float(loss.data) == pytest.approx(88 * np.log(2), rel=1e-12)

    def test_bce_saturated_predictions(self):
        tgt = np.array([[1.0, 0.0], [0.0, 1.0]])
        logits = t((tgt * 2 - 1) * 50.0)
        assert float(ops.binary_cross_entropy_sum(logits, tgt).data) < 1e-12

    def test_bce_direct_formula_oracle(self):
        rng = np.random.default_rng(6)
        z = rng.standard_normal((3, 2))
        tgt = (rng.random((3, 2)) > 0.5).astype(float)
        s = 1 / (1 + np.exp(-z))
        expect = float(np.mean(np.sum(-tgt * np.log(s) - (1 - tgt) * np.log(1 - s), axis=0)))
        got = float(ops.binary_cross_entropy_sum(t(z), tgt).data)
        assert got == pytest.approx(expect, rel=1e-10)

    def test_bce_shape_mismatch(self):
        with pytest.raises(ValueError):
            ops.binary_cross_entropy_sum(t(np.zeros((3, 2))), np.zeros((2, 3)))


class TestStructuralOps:
    def test_repeat_frames(self):
        y = ops.repeat_frames(t([[1.0, 2.0]]), 2)
        assert y.data.tolist() == [[1.0, 1.0, 2.0, 2.0]]

    def test_decimate_positions(self):
        x = t(np.arange(10, dtype=float).reshape(1, 10))
        y = ops.decimate(x, 3, 2, 3)
        assert y.data.tolist() == [[3.0, 5.0, 7.0]]

    def test_extend_with_bias(self):
        b = Parameter(np.array([1.0, -2.0]), "b")
        y = ops.extend_time_with_bias(t(np.zeros((2, 3))), b, 2)
        assert y.time == 5
        assert y.data[:, 3:].T.tolist() == [[1.0, -2.0], [1.0, -2.0]]
