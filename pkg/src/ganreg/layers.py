"""Neural building blocks: embeddings, LSTM cell, batch norm, residual conv
blocks, fully connected layers, and their initializers.

Parameter containers are plain dataclasses of tensors; the functions here are
pure maps from (input, parameters) to output, recorded on the autodiff graph.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .tensor import Tensor, _send


@dataclass
class EmbeddingTable:
    """V x N embedding matrix; row 0 is PAD and is pinned to zero."""

    matrix: Tensor

    def __post_init__(self):
        if self.matrix.ndim != 2:
            raise ValueError("embedding matrix must be rank 2")

    @property
    def vocab_size(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def trainable(self) -> bool:
        return self.matrix.requires_grad

    @trainable.setter
    def trainable(self, flag: bool) -> None:
        self.matrix.requires_grad = bool(flag)


def embed_lookup(ids, table: EmbeddingTable) -> Tensor:
    """Gather embedding rows: ids [D] -> [D, N], ids [B, D] -> [B, D, N].

    Backward scatters gradients into the looked-up rows only; the PAD row's
    contribution is masked so row 0 stays exactly zero under training.
    """
    idx = np.asarray(ids)
    if idx.size == 0:
        raise ValueError("empty id sequence")
    if idx.min() < 0 or idx.max() >= table.vocab_size:
        raise ValueError(
            f"token id out of range [0, {table.vocab_size}): {int(idx.min())}..{int(idx.max())}"
        )
    mat = table.matrix
    out = Tensor._from_op(mat.data[idx], (mat,), "embed_lookup")
    if out.requires_grad:
        def _bw(g):
            gm = np.zeros_like(mat.data)
            np.add.at(gm, idx.reshape(-1), g.reshape(-1, mat.shape[1]))
            gm[0] = 0.0
            _send(mat, gm)
        out._backward = _bw
    return out


@dataclass
class LSTMParams:
    """Gate order along the 4H axis is fixed: input, forget, cell, output."""

    w_x: Tensor  # [4H, I]
    w_h: Tensor  # [4H, H]
    bias: Tensor  # [4H]

    @property
    def hidden_size(self) -> int:
        return self.w_h.shape[1]

    @property
    def input_size(self) -> int:
        return self.w_x.shape[1]

    def tensors(self) -> list[Tensor]:
        return [self.w_x, self.w_h, self.bias]


def lstm_step(x: Tensor, h: Tensor, c: Tensor, p: LSTMParams) -> tuple[Tensor, Tensor]:
    """One LSTM cell update; accepts vectors [I] or batches [B, I]."""
    H = p.hidden_size
    single = x.ndim == 1
    if single:
        x, h, c = (T.reshape(t, (1, t.shape[0])) for t in (x, h, c))
    if x.shape[1] != p.input_size or h.shape[1] != H or c.shape[1] != H:
        raise ValueError(
            f"lstm_step: shapes {x.shape}/{h.shape}/{c.shape} do not match params "
            f"(I={p.input_size}, H={H})"
        )
    gates = T.add(
        T.add(T.matmul(x, T.transpose(p.w_x, (1, 0))), T.matmul(h, T.transpose(p.w_h, (1, 0)))),
        p.bias,
    )
    i = T.activation(gates[:, 0:H], "sigmoid")
    f = T.activation(gates[:, H:2 * H], "sigmoid")
    g = T.activation(gates[:, 2 * H:3 * H], "tanh")
    o = T.activation(gates[:, 3 * H:4 * H], "sigmoid")
    c_new = T.add(T.mul(f, c), T.mul(i, g))
    h_new = T.mul(o, T.activation(c_new, "tanh"))
    if single:
        h_new = T.reshape(h_new, (H,))
        c_new = T.reshape(c_new, (H,))
    return h_new, c_new


def lstm_unroll(inputs: Tensor, h0: Tensor, c0: Tensor, p: LSTMParams) -> Tensor:
    """Run the cell over a [T, I] sequence, returning all hidden states [T, H]."""
    if inputs.ndim != 2:
        raise ValueError(f"lstm_unroll expects [T, I], got {inputs.shape}")
    steps = []
    h, c = h0, c0
    for t in range(inputs.shape[0]):
        h, c = lstm_step(inputs[t, :], h, c, p)
        steps.append(T.reshape(h, (1, p.hidden_size)))
    return T.concat_n(steps, axis=0)


@dataclass
class BatchNormParams:
    gamma: Tensor  # [C]
    beta: Tensor  # [C]
    running_mean: np.ndarray = field(repr=False, default=None)
    running_var: np.ndarray = field(repr=False, default=None)
    momentum: float = 0.1
    eps: float = 1e-5

    def __post_init__(self):
        c = self.gamma.shape[0]
        if self.running_mean is None:
            self.running_mean = np.zeros(c, dtype=self.gamma.dtype)
        if self.running_var is None:
            self.running_var = np.ones(c, dtype=self.gamma.dtype)
        if not (0.0 < self.momentum < 1.0):
            raise ValueError("momentum must lie in (0, 1)")
        if self.eps <= 0:
            raise ValueError("eps must be positive")

    def tensors(self) -> list[Tensor]:
        return [self.gamma, self.beta]


def batch_norm(x: Tensor, p: BatchNormParams, mode: str = "train",
               update_running: bool | None = None) -> Tensor:
    """Per-channel normalization of a [B, C, L] tensor.

    Train mode normalizes with batch statistics (biased variance) and, unless
    ``update_running`` is False, folds them into the running statistics
    (unbiased variance) via momentum; eval mode normalizes with the running
    statistics.  Both modes apply the gamma/beta affine.  Training passes
    over generated batches disable the running update so the eval-mode
    statistics track the real-document distribution.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"unknown batch_norm mode {mode!r}")
    if x.ndim != 3:
        raise ValueError(f"batch_norm expects [B, C, L], got {x.shape}")
    B, C, L = x.shape
    if C != p.gamma.shape[0]:
        raise ValueError(f"channel mismatch: input {C}, params {p.gamma.shape[0]}")

    if mode == "train":
        n = B * L
        if n < 2:
            raise ValueError("train-mode batch norm needs B*L >= 2")
        mu = T.mean_over(x, (0, 2), keepdims=True)  # [1,C,1]
        xc = T.sub(x, T.expand(mu, x.shape))
        var = T.mean_over(T.square(xc), (0, 2), keepdims=True)
        denom = T.sqrt(T.add(var, Tensor(np.full(var.shape, p.eps, dtype=x.dtype))))
        xn = T.div(xc, T.expand(denom, x.shape))
        if update_running is None or update_running:
            m = p.momentum
            p.running_mean = (1.0 - m) * p.running_mean + m * mu.data.reshape(-1)
            p.running_var = (1.0 - m) * p.running_var + m * var.data.reshape(-1) * (n / (n - 1))
    else:
        rm = Tensor(p.running_mean.reshape(1, C, 1).copy())
        rs = Tensor(np.sqrt(p.running_var.reshape(1, C, 1) + p.eps))
        xn = T.div(T.sub(x, T.expand(rm, x.shape)), T.expand(rs, x.shape))
    gamma = T.expand(T.reshape(p.gamma, (1, C, 1)), x.shape)
    beta = T.expand(T.reshape(p.beta, (1, C, 1)), x.shape)
    return T.add(T.mul(xn, gamma), beta)


@dataclass
class ResidualBlockParams:
    """Two same-padding convolutions with batch norms and an identity skip."""

    conv1: Tensor  # [C, C, K]
    bn1: BatchNormParams
    conv2: Tensor  # [C, C, K]
    bn2: BatchNormParams

    def __post_init__(self):
        if self.conv1.shape[0] != self.conv1.shape[1] or self.conv1.shape != self.conv2.shape:
            raise ValueError("residual block convs must be square and matching")

    @property
    def kernel_size(self) -> int:
        return self.conv1.shape[2]

    def tensors(self) -> list[Tensor]:
        return [self.conv1, *self.bn1.tensors(), self.conv2, *self.bn2.tensors()]


def residual_block(x: Tensor, p: ResidualBlockParams, mode: str = "train",
                   update_running: bool | None = None) -> Tensor:
    """relu( BN2(conv2( relu(BN1(conv1(x))) )) + x ); length-preserving."""
    pad = (p.kernel_size - 1) // 2
    h = T.activation(batch_norm(T.conv1d(x, p.conv1, pad), p.bn1, mode, update_running), "relu")
    h = batch_norm(T.conv1d(h, p.conv2, pad), p.bn2, mode, update_running)
    return T.activation(T.add(h, x), "relu")


@dataclass
class LinearParams:
    weights: Tensor  # [Out, In]
    bias: Tensor  # [Out]

    def tensors(self) -> list[Tensor]:
        return [self.weights, self.bias]


def linear(x: Tensor, p: LinearParams) -> Tensor:
    """x W^T + b for a vector [In] or a batch [B, In]."""
    single = x.ndim == 1
    if single:
        x = T.reshape(x, (1, x.shape[0]))
    if x.shape[1] != p.weights.shape[1]:
        raise ValueError(f"linear: input dim {x.shape[1]} != {p.weights.shape[1]}")
    out = T.add(T.matmul(x, T.transpose(p.weights, (1, 0))), p.bias)
    if single:
        out = T.reshape(out, (p.weights.shape[0],))
    return out


# -- initialization ------------------------------------------------------------


def glorot_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int,
                   fan_out: int, dtype=np.float64) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape).astype(dtype)


def init_linear(rng: np.random.Generator, out_dim: int, in_dim: int,
                zero: bool = False, dtype=np.float64) -> LinearParams:
    if zero:
        w = np.zeros((out_dim, in_dim), dtype=dtype)
    else:
        w = glorot_uniform(rng, (out_dim, in_dim), in_dim, out_dim, dtype)
    return LinearParams(
        weights=Tensor(w, requires_grad=True),
        bias=Tensor(np.zeros(out_dim, dtype=dtype), requires_grad=True),
    )


def init_lstm(rng: np.random.Generator, input_size: int, hidden: int,
              dtype=np.float64) -> LSTMParams:
    w_x = glorot_uniform(rng, (4 * hidden, input_size), input_size, 4 * hidden, dtype)
    w_h = glorot_uniform(rng, (4 * hidden, hidden), hidden, 4 * hidden, dtype)
    bias = np.zeros(4 * hidden, dtype=dtype)
    bias[hidden:2 * hidden] = 1.0  # forget gate opens at the start of training
    return LSTMParams(
        w_x=Tensor(w_x, requires_grad=True),
        w_h=Tensor(w_h, requires_grad=True),
        bias=Tensor(bias, requires_grad=True),
    )


def init_conv(rng: np.random.Generator, c_out: int, c_in: int, k: int,
              dtype=np.float64) -> Tensor:
    w = glorot_uniform(rng, (c_out, c_in, k), c_in * k, c_out * k, dtype)
    return Tensor(w, requires_grad=True)


def init_batch_norm(channels: int, dtype=np.float64) -> BatchNormParams:
    return BatchNormParams(
        gamma=Tensor(np.ones(channels, dtype=dtype), requires_grad=True),
        beta=Tensor(np.zeros(channels, dtype=dtype), requires_grad=True),
    )


def init_residual_block(rng: np.random.Generator, channels: int, k: int,
                        dtype=np.float64) -> ResidualBlockParams:
    return ResidualBlockParams(
        conv1=init_conv(rng, channels, channels, k, dtype),
        bn1=init_batch_norm(channels, dtype),
        conv2=init_conv(rng, channels, channels, k, dtype),
        bn2=init_batch_norm(channels, dtype),
    )


def init_embedding(rng: np.random.Generator, vocab_size: int, dim: int,
                   trainable: bool = True, dtype=np.float64) -> EmbeddingTable:
    m = glorot_uniform(rng, (vocab_size, dim), dim, dim, dtype)
    m[0] = 0.0  # PAD row
    t = Tensor(m, requires_grad=trainable)
    return EmbeddingTable(matrix=t)
