"""Generator / discriminator assembly.

The generator is an LSTM sentence decoder conditioned on noise plus an
optional target label: it emits one soft token distribution per position and
feeds the expected embedding of each step back in as the next input.  The
discriminator is a 1-d residual CNN over embedded documents with two scalar
heads, one judging realness and one predicting the label.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import layers as L
from . import tensor as T
from .layers import (
    EmbeddingTable,
    LinearParams,
    LSTMParams,
    ResidualBlockParams,
)
from .tensor import Tensor


@dataclass
class ModelConfig:
    vocab_size: int          # V, including PAD and UNK
    embed_dim: int           # N
    doc_len: int             # D
    gen_hidden: int = 32     # H
    noise_dim: int = 16      # Z
    channels: int = 16       # C
    kernel_size: int = 3     # K, odd so residual blocks preserve length
    n_blocks: int = 4
    temperature: float = 1.0
    conditional: bool = True

    def __post_init__(self):
        for name in ("vocab_size", "embed_dim", "doc_len", "gen_hidden",
                     "noise_dim", "channels", "kernel_size", "n_blocks"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.kernel_size % 2 == 0:
            raise ValueError("kernel_size must be odd (same-length residual convs)")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")

    @property
    def cond_dim(self) -> int:
        return self.noise_dim + (1 if self.conditional else 0)


class DiscriminatorOutput(NamedTuple):
    adv_logit: Tensor  # [B] pre-sigmoid realness scores
    y_hat: Tensor      # [B] regression predictions


@dataclass
class GeneratorNet:
    h0_proj: LinearParams   # cond -> H
    c0_proj: LinearParams   # cond -> H
    lstm: LSTMParams        # input size N
    out_proj: LinearParams  # H -> V
    embedding: EmbeddingTable

    def named_parameters(self) -> dict[str, Tensor]:
        return {
            "generator/h0_proj/w": self.h0_proj.weights,
            "generator/h0_proj/b": self.h0_proj.bias,
            "generator/c0_proj/w": self.c0_proj.weights,
            "generator/c0_proj/b": self.c0_proj.bias,
            "generator/lstm/w_x": self.lstm.w_x,
            "generator/lstm/w_h": self.lstm.w_h,
            "generator/lstm/b": self.lstm.bias,
            "generator/out_proj/w": self.out_proj.weights,
            "generator/out_proj/b": self.out_proj.bias,
        }


@dataclass
class DiscriminatorNet:
    conv_in: Tensor                     # [C, N, K]
    blocks: list[ResidualBlockParams]
    fc: LinearParams                    # C -> C, shared trunk head
    adv_head: LinearParams              # C -> 1, zero-initialized
    reg_head: LinearParams              # C -> 1, zero-initialized

    def named_parameters(self) -> dict[str, Tensor]:
        params = {"discriminator/conv_in": self.conv_in}
        for i, blk in enumerate(self.blocks):
            params[f"discriminator/block{i}/conv1"] = blk.conv1
            params[f"discriminator/block{i}/bn1/gamma"] = blk.bn1.gamma
            params[f"discriminator/block{i}/bn1/beta"] = blk.bn1.beta
            params[f"discriminator/block{i}/conv2"] = blk.conv2
            params[f"discriminator/block{i}/bn2/gamma"] = blk.bn2.gamma
            params[f"discriminator/block{i}/bn2/beta"] = blk.bn2.beta
        params["discriminator/fc/w"] = self.fc.weights
        params["discriminator/fc/b"] = self.fc.bias
        params["discriminator/adv_head/w"] = self.adv_head.weights
        params["discriminator/adv_head/b"] = self.adv_head.bias
        params["discriminator/reg_head/w"] = self.reg_head.weights
        params["discriminator/reg_head/b"] = self.reg_head.bias
        return params


def build_model(cfg: ModelConfig, seed: int, embedding: EmbeddingTable | None = None,
                dtype=np.float64) -> tuple[GeneratorNet, DiscriminatorNet]:
    """Initialize both nets deterministically from (cfg, seed).

    When no embedding table is supplied, a synthesized one (seeded, PAD row
    zero) is created with the configured vocabulary size and dimension.
    """
    rng = np.random.default_rng(seed)
    if embedding is None:
        embedding = L.init_embedding(rng, cfg.vocab_size, cfg.embed_dim, dtype=dtype)
    elif embedding.vocab_size != cfg.vocab_size or embedding.dim != cfg.embed_dim:
        raise ValueError(
            f"embedding table {embedding.matrix.shape} does not match config "
            f"(V={cfg.vocab_size}, N={cfg.embed_dim})"
        )
    gen = GeneratorNet(
        h0_proj=L.init_linear(rng, cfg.gen_hidden, cfg.cond_dim, dtype=dtype),
        c0_proj=L.init_linear(rng, cfg.gen_hidden, cfg.cond_dim, dtype=dtype),
        lstm=L.init_lstm(rng, cfg.embed_dim, cfg.gen_hidden, dtype=dtype),
        out_proj=L.init_linear(rng, cfg.vocab_size, cfg.gen_hidden, dtype=dtype),
        embedding=embedding,
    )
    disc = DiscriminatorNet(
        conv_in=L.init_conv(rng, cfg.channels, cfg.embed_dim, cfg.kernel_size, dtype=dtype),
        blocks=[
            L.init_residual_block(rng, cfg.channels, cfg.kernel_size, dtype=dtype)
            for _ in range(cfg.n_blocks)
        ],
        fc=L.init_linear(rng, cfg.channels, cfg.channels, dtype=dtype),
        adv_head=L.init_linear(rng, 1, cfg.channels, zero=True, dtype=dtype),
        reg_head=L.init_linear(rng, 1, cfg.channels, zero=True, dtype=dtype),
    )
    return gen, disc


def generate_batch(g: GeneratorNet, z: np.ndarray, y_cond: np.ndarray,
                   cfg: ModelConfig) -> Tensor:
    """Decode a batch of soft sequences: z [B, Z], y_cond [B] -> [B, D, V].

    The initial LSTM state comes from tanh projections of (z, y_cond); each
    step's input is the expected embedding of the previous step's soft token
    distribution, with a zero (PAD-like) vector at step one.
    """
    z = np.asarray(z, dtype=g.lstm.w_x.dtype)
    if z.ndim != 2 or z.shape[1] != cfg.noise_dim:
        raise ValueError(f"noise must be [B, {cfg.noise_dim}], got {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError("non-finite noise input")
    B = z.shape[0]
    if cfg.conditional:
        y = np.asarray(y_cond, dtype=z.dtype).reshape(B, 1)
        if not np.all(np.isfinite(y)):
            raise ValueError("non-finite condition input")
        cond = Tensor(np.concatenate([z, y], axis=1))
    else:
        cond = Tensor(z)

    h = T.activation(L.linear(cond, g.h0_proj), "tanh")
    c = T.activation(L.linear(cond, g.c0_proj), "tanh")
    x = Tensor(np.zeros((B, cfg.embed_dim), dtype=z.dtype))
    inv_tau = 1.0 / cfg.temperature
    rows = []
    for _ in range(cfg.doc_len):
        h, c = L.lstm_step(x, h, c, g.lstm)
        logits = L.linear(h, g.out_proj)
        row = T.softmax_rows(T.mul(logits, inv_tau))  # [B, V]
        rows.append(T.reshape(row, (B, 1, cfg.vocab_size)))
        x = T.matmul(row, g.embedding.matrix)  # expected embedding feedback
    return T.concat_n(rows, axis=1)


def generate(g: GeneratorNet, z: np.ndarray, y_cond: float, cfg: ModelConfig) -> Tensor:
    """Single-sample decode: z [Z], scalar condition -> soft sequence [D, V]."""
    z = np.asarray(z)
    if z.ndim != 1:
        raise ValueError(f"expected a noise vector, got shape {z.shape}")
    out = generate_batch(g, z[None, :], np.asarray([y_cond]), cfg)
    return T.reshape(out, (cfg.doc_len, cfg.vocab_size))


def soft_embed(s: Tensor, table: EmbeddingTable) -> Tensor:
    """Expected embedding of soft sequences: [D, V] -> [D, N], batched too."""
    if s.shape[-1] != table.vocab_size:
        raise ValueError(f"vocab size mismatch: {s.shape[-1]} vs {table.vocab_size}")
    if s.ndim == 2:
        return T.matmul(s, table.matrix)
    if s.ndim == 3:
        B, D, V = s.shape
        flat = T.matmul(T.reshape(s, (B * D, V)), table.matrix)
        return T.reshape(flat, (B, D, table.dim))
    raise ValueError(f"soft_embed expects rank 2 or 3, got {s.shape}")


def straight_through(s: Tensor) -> Tensor:
    """One-hot rows at the argmax on the forward pass, identity backward.

    Ties resolve to the lowest index.  The gradient received by ``s`` equals
    the gradient emitted downstream, unchanged.
    """
    idx = np.argmax(s.data, axis=-1)
    hard = np.zeros_like(s.data)
    np.put_along_axis(hard, idx[..., None], 1.0, axis=-1)
    out = Tensor._from_op(hard, (s,), "straight_through")
    if out.requires_grad:
        out._backward = lambda g: T._send(s, g)
    return out


def discriminate(d: DiscriminatorNet, doc: Tensor, mode: str = "train",
                 update_running: bool | None = None) -> DiscriminatorOutput:
    """Score documents: doc [D, N] or [B, D, N] -> (adv logits, predictions).

    The trunk is conv -> residual blocks -> global average pool over length ->
    shared fully connected layer with relu; both heads read the shared trunk.
    ``update_running`` gates the batch-norm running-statistic updates (train
    mode defaults to updating; forwards over generated batches pass False).
    """
    single = doc.ndim == 2
    x = T.reshape(doc, (1,) + doc.shape) if single else doc
    if x.ndim != 3:
        raise ValueError(f"discriminate expects [B, D, N], got {doc.shape}")
    x = T.transpose(x, (0, 2, 1))  # channels-first: [B, N, D]
    pad = (d.conv_in.shape[2] - 1) // 2
    h = T.conv1d(x, d.conv_in, pad)
    for blk in d.blocks:
        h = L.residual_block(h, blk, mode, update_running)
    pooled = T.mean_over(h, (2,))  # [B, C]
    trunk = T.activation(L.linear(pooled, d.fc), "relu")
    adv = T.reshape(L.linear(trunk, d.adv_head), (x.shape[0],))
    y_hat = T.reshape(L.linear(trunk, d.reg_head), (x.shape[0],))
    return DiscriminatorOutput(adv_logit=adv, y_hat=y_hat)


def decode_tokens(s, vocab) -> list[str]:
    """Greedy-decode a soft sequence through the vocabulary.

    Per-row argmax (ties to the lowest id), PAD rendered as the empty string,
    trailing PADs trimmed.
    """
    rows = s.data if isinstance(s, Tensor) else np.asarray(s)
    ids = np.argmax(rows, axis=-1)
    last = len(ids)
    while last > 0 and ids[last - 1] == 0:
        last -= 1
    return ["" if i == 0 else vocab.id_to_token[i] for i in ids[:last]]


def parameter_count(cfg: ModelConfig, include_embedding: bool = True) -> int:
    """Closed-form parameter count implied by the configuration."""
    h, z, v, n, c, k = (cfg.gen_hidden, cfg.noise_dim, cfg.vocab_size,
                        cfg.embed_dim, cfg.channels, cfg.kernel_size)
    cond = cfg.cond_dim
    gen = 2 * (h * cond + h) + (4 * h * n + 4 * h * h + 4 * h) + (v * h + v)
    per_block = 2 * (c * c * k) + 4 * c
    disc = c * n * k + cfg.n_blocks * per_block + (c * c + c) + 2 * (c + 1)
    emb = v * n if include_embedding else 0
    return gen + disc + emb
