"""Layer forward semantics, initializer contracts, and gradient checks.

The LSTM cell is verified against an independent scalar reimplementation of
the five gate equations; batch norm moments are asserted analytically.
"""

import numpy as np
import pytest

from ganreg import layers as L
from ganreg import tensor as T
from ganreg.tensor import Tensor


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


class TestEmbedding:
    def make_table(self, rng, v=6, n=4, trainable=True):
        m = rng.normal(size=(v, n))
        m[0] = 0.0
        return L.EmbeddingTable(matrix=Tensor(m, requires_grad=trainable))

    def test_pad_row_is_zero(self, rng):
        table = self.make_table(rng)
        out = L.embed_lookup([0], table)
        assert np.array_equal(out.data, np.zeros((1, 4)))

    def test_row_matches_table(self, rng):
        table = self.make_table(rng)
        out = L.embed_lookup([3], table)
        assert np.array_equal(out.data[0], table.matrix.data[3])

    def test_gradient_lands_on_looked_up_rows_only(self, rng):
        table = self.make_table(rng)
        out = L.embed_lookup([2, 2, 5], table)
        T.reduce(out, "sum").backward()
        g = table.matrix.grad
        assert np.array_equal(g[2], np.full(4, 2.0))  # looked up twice
        assert np.array_equal(g[5], np.ones(4))
        untouched = [i for i in range(6) if i not in (2, 5)]
        assert np.all(g[untouched] == 0.0)

    def test_pad_gradient_masked(self, rng):
        table = self.make_table(rng)
        T.reduce(L.embed_lookup([0, 1], table), "sum").backward()
        assert np.all(table.matrix.grad[0] == 0.0)
        assert np.all(table.matrix.grad[1] == 1.0)

    def test_out_of_range(self, rng):
        table = self.make_table(rng)
        with pytest.raises(ValueError, match="out of range"):
            L.embed_lookup([6], table)

    def test_batched_lookup(self, rng):
        table = self.make_table(rng)
        ids = np.array([[1, 2], [3, 4]])
        out = L.embed_lookup(ids, table)
        assert out.shape == (2, 2, 4)
        assert np.array_equal(out.data[1, 0], table.matrix.data[3])


def scalar_lstm_oracle(x, h, c, wx, wh, b):
    """Independent H=1 reimplementation of the five cell equations."""
    pre = [wx[j] * x + wh[j] * h + b[j] for j in range(4)]
    i, f, o = sigmoid(pre[0]), sigmoid(pre[1]), sigmoid(pre[3])
    g = np.tanh(pre[2])
    c_new = f * c + i * g
    h_new = o * np.tanh(c_new)
    return h_new, c_new


class TestLSTM:
    def zero_params(self, input_size=3, hidden=2):
        return L.LSTMParams(
            w_x=Tensor(np.zeros((4 * hidden, input_size)), requires_grad=True),
            w_h=Tensor(np.zeros((4 * hidden, hidden)), requires_grad=True),
            bias=Tensor(np.zeros(4 * hidden), requires_grad=True),
        )

    def test_zero_params_give_zero_state(self):
        p = self.zero_params()
        h, c = L.lstm_step(Tensor(np.ones(3)), Tensor(np.zeros(2)), Tensor(np.zeros(2)), p)
        assert np.all(h.data == 0.0) and np.all(c.data == 0.0)

    def test_hidden_state_strictly_bounded(self, rng):
        p = L.init_lstm(rng, 3, 4)
        for _ in range(200):
            h, _ = L.lstm_step(
                Tensor(rng.normal(scale=5, size=3)),
                Tensor(rng.uniform(-1, 1, size=4)),
                Tensor(rng.normal(scale=5, size=4)), p,
            )
            assert np.all(np.abs(h.data) < 1.0)

    def test_scalar_case_matches_oracle(self, rng):
        wx = rng.normal(size=4)
        wh = rng.normal(size=4)
        b = rng.normal(size=4)
        p = L.LSTMParams(
            w_x=Tensor(wx.reshape(4, 1)), w_h=Tensor(wh.reshape(4, 1)), bias=Tensor(b))
        x, h0, c0 = 0.7, -0.3, 0.5
        h, c = L.lstm_step(Tensor([x]), Tensor([h0]), Tensor([c0]), p)
        h_ref, c_ref = scalar_lstm_oracle(x, h0, c0, wx, wh, b)
        assert abs(h.item() - h_ref) < 1e-12
        assert abs(c.item() - c_ref) < 1e-12

    def test_unroll_t1_equals_step(self, rng):
        p = L.init_lstm(rng, 3, 2)
        x = rng.normal(size=(1, 3))
        h0 = Tensor(rng.normal(size=2))
        c0 = Tensor(rng.normal(size=2))
        out = L.lstm_unroll(Tensor(x), h0, c0, p)
        h_step, _ = L.lstm_step(Tensor(x[0]), h0, c0, p)
        assert np.allclose(out.data[0], h_step.data, atol=1e-15)

    def test_unroll_zero_params(self):
        p = self.zero_params()
        out = L.lstm_unroll(Tensor(np.ones((4, 3))), Tensor(np.zeros(2)), Tensor(np.zeros(2)), p)
        assert np.all(out.data == 0.0)

    def test_unroll_gradients(self, rng):
        p = L.init_lstm(rng, 2, 2)
        h0 = Tensor(rng.normal(size=2))
        c0 = Tensor(rng.normal(size=2))
        seq = Tensor(rng.normal(size=(3, 2)))

        def f(t):
            return T.reduce(T.square(L.lstm_unroll(t, h0, c0, p)), "sum")

        assert T.grad_check(f, seq) < 1e-5

    def test_dimension_mismatch(self, rng):
        p = L.init_lstm(rng, 3, 2)
        with pytest.raises(ValueError, match="do not match"):
            L.lstm_step(Tensor(np.zeros(4)), Tensor(np.zeros(2)), Tensor(np.zeros(2)), p)


class TestBatchNorm:
    def test_constant_channel_goes_to_zero(self):
        p = L.init_batch_norm(2, )
        x = Tensor(np.full((2, 2, 3), 7.0))
        out = L.batch_norm(x, p, "train")
        assert np.max(np.abs(out.data)) < 1e-3

    def test_train_mode_moments(self, rng):
        p = L.init_batch_norm(3)
        p.eps = 1e-12
        x = Tensor(rng.normal(loc=2.0, scale=1.5, size=(4, 3, 5)))
        out = L.batch_norm(x, p, "train").data
        for ch in range(3):
            vals = out[:, ch, :]
            n = vals.size
            assert abs(vals.mean()) < 1e-9
            # biased normalization: unbiased sample variance comes out n/(n-1)
            assert abs(vals.var(ddof=1) - n / (n - 1)) < 1e-6

    def test_eval_mode_neutral_stats_is_identity(self, rng):
        p = L.init_batch_norm(2)
        x = rng.normal(size=(3, 2, 4))
        out = L.batch_norm(Tensor(x), p, "eval").data
        assert np.max(np.abs(out - x / np.sqrt(1 + p.eps))) < 1e-12
        assert np.max(np.abs(out - x)) < 1e-4  # identity up to eps

    def test_running_stats_update(self, rng):
        p = L.init_batch_norm(1)
        x = rng.normal(loc=5.0, size=(8, 1, 8))
        L.batch_norm(Tensor(x), p, "train")
        mu = x.mean()
        assert abs(p.running_mean[0] - (0.9 * 0.0 + 0.1 * mu)) < 1e-12

    def test_train_needs_two_positions(self):
        p = L.init_batch_norm(1)
        with pytest.raises(ValueError, match=">= 2"):
            L.batch_norm(Tensor(np.ones((1, 1, 1))), p, "train")


class TestResidualBlock:
    def test_zeroed_branch_is_relu(self, rng):
        blk = L.init_residual_block(rng, 2, 3)
        blk.conv1.data[:] = 0.0
        blk.conv2.data[:] = 0.0
        x = rng.normal(size=(2, 2, 5))
        out = L.residual_block(Tensor(x), blk, "train")
        assert np.array_equal(out.data, np.maximum(x, 0.0))

    def test_shape_preserved(self, rng):
        blk = L.init_residual_block(rng, 3, 3)
        x = Tensor(rng.normal(size=(2, 3, 7)))
        assert L.residual_block(x, blk, "train").shape == (2, 3, 7)

    def test_parameter_gradients(self, rng):
        blk = L.init_residual_block(rng, 2, 3)
        x = Tensor(rng.normal(size=(2, 2, 5)))

        def f(t):
            rebuilt = L.ResidualBlockParams(conv1=t, bn1=blk.bn1, conv2=blk.conv2, bn2=blk.bn2)
            return T.reduce(T.square(L.residual_block(x, rebuilt, "train")), "sum")

        assert T.grad_check(f, blk.conv1.detach()) < 1e-4


class TestLinear:
    def test_zero_weights_give_bias(self, rng):
        p = L.LinearParams(weights=Tensor(np.zeros((3, 4))), bias=Tensor(rng.normal(size=3)))
        out = L.linear(Tensor(rng.normal(size=(2, 4))), p)
        assert np.array_equal(out.data, np.tile(p.bias.data, (2, 1)))

    def test_identity(self, rng):
        p = L.LinearParams(weights=Tensor(np.eye(4)), bias=Tensor(np.zeros(4)))
        x = rng.normal(size=4)
        assert np.allclose(L.linear(Tensor(x), p).data, x, atol=1e-15)

    def test_gradient(self, rng):
        x = Tensor(rng.normal(size=(2, 3)))
        p = L.init_linear(rng, 2, 3)

        def f(t):
            return T.reduce(T.square(L.linear(x, L.LinearParams(weights=t, bias=p.bias))), "sum")

        assert T.grad_check(f, p.weights.detach()) < 1e-8

    def test_dimension_mismatch(self, rng):
        p = L.init_linear(rng, 2, 3)
        with pytest.raises(ValueError, match="input dim"):
            L.linear(Tensor(np.zeros(4)), p)


class TestInit:
    def test_deterministic(self):
        a = L.init_lstm(np.random.default_rng(9), 5, 7)
        b = L.init_lstm(np.random.default_rng(9), 5, 7)
        assert np.array_equal(a.w_x.data, b.w_x.data)
        assert np.array_equal(a.w_h.data, b.w_h.data)

    def test_forget_bias_slice_is_one(self):
        p = L.init_lstm(np.random.default_rng(0), 4, 6)
        assert np.all(p.bias.data[6:12] == 1.0)
        assert np.all(p.bias.data[:6] == 0.0)
        assert np.all(p.bias.data[12:] == 0.0)

    def test_uniform_moments(self):
        w = L.glorot_uniform(np.random.default_rng(3), (64, 64), 64, 64)
        a = np.sqrt(6.0 / 128.0)
        assert abs(w.std() - a / np.sqrt(3.0)) < 0.2 * (a / np.sqrt(3.0))
        assert np.max(np.abs(w)) <= a

    def test_zero_init_linear(self):
        p = L.init_linear(np.random.default_rng(0), 1, 8, zero=True)
        assert np.all(p.weights.data == 0.0) and np.all(p.bias.data == 0.0)

    def test_embedding_pad_row(self):
        t = L.init_embedding(np.random.default_rng(0), 10, 4)
        assert np.all(t.matrix.data[0] == 0.0)
        assert not np.all(t.matrix.data[1] == 0.0)
