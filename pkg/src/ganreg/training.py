"""Losses, optimizer, and the semi-supervised alternating training loop.

The discriminator sees three document streams per step: labeled and unlabeled
real documents (union judged "real"), and generated documents judged "fake",
with a mean-absolute-error regression term on the labeled subset.  The
generator is updated through the fully differentiable soft-sequence path to
make its fakes score as real.  Everything is driven by one seeded RNG, so a
run is a pure function of (config, data).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import layers as L
from . import model as M
from . import tensor as T
from .tensor import Tensor, _send


class TrainingDiverged(RuntimeError):
    """Raised when a loss turns non-finite; carries the offending step."""


@dataclass
class TrainConfig:
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    lambda_reg: float = 1.0
    batch_labeled: int = 32
    batch_unlabeled: int = 32
    batch_generated: int = 32
    epochs: int = 10
    seed: int = 0
    d_steps: int = 1
    precision: str = "float64"
    generation_path: str = "soft"     # soft | straight_through
    train_embeddings: bool = False
    regress_generated: bool = False

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("betas must lie in [0, 1)")
        if self.lambda_reg < 0:
            raise ValueError("lambda_reg must be >= 0")
        for name in ("batch_labeled", "batch_unlabeled", "batch_generated", "d_steps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.seed < 0:
            raise ValueError("seed must be a non-negative integer")
        if self.precision not in ("float64", "float32"):
            raise ValueError(f"unknown precision {self.precision!r}")
        if self.generation_path not in ("soft", "straight_through"):
            raise ValueError(f"unknown generation_path {self.generation_path!r}")

    @property
    def dtype(self):
        return np.float64 if self.precision == "float64" else np.float32


# -- losses ---------------------------------------------------------------------


def mae_loss(y_hat: Tensor, y) -> Tensor:
    """Mean absolute error; the subgradient at zero residual is zero."""
    y = y if isinstance(y, Tensor) else Tensor(np.asarray(y, dtype=np.float64))
    if y_hat.shape != y.shape:
        raise ValueError(f"mae_loss: length mismatch {y_hat.shape} vs {y.shape}")
    return T.reduce(T.absolute(T.sub(y_hat, y)), "mean")


def bce_with_logits(logits: Tensor, target: float) -> Tensor:
    """Mean binary cross-entropy against a constant 0/1 target, in stable form."""
    if target not in (0, 1, 0.0, 1.0):
        raise ValueError("target must be 0 or 1")
    t = float(target)
    x = logits.data
    per = np.maximum(x, 0.0) - x * t + np.log1p(np.exp(-np.abs(x)))
    out = Tensor._from_op(np.asarray(per.mean()).reshape(1), (logits,), "bce_logits")
    if out.requires_grad:
        sig = T._stable_sigmoid(x)
        n = x.size
        out._backward = lambda g: _send(logits, g.reshape(()) * (sig - t) / n)
    return out


def discriminator_loss(real_logits: Tensor, fake_logits: Tensor,
                       y_hat_labeled: Tensor | None, y_labeled,
                       lambda_reg: float) -> Tensor:
    """bce(real, 1) + bce(fake, 0) + lambda_reg * mae(labeled predictions)."""
    adv = T.add(bce_with_logits(real_logits, 1.0), bce_with_logits(fake_logits, 0.0))
    if lambda_reg == 0.0:
        return adv
    if y_hat_labeled is None or y_hat_labeled.size == 0:
        raise ValueError("regression term requires a non-empty labeled batch")
    return T.add(adv, T.mul(mae_loss(y_hat_labeled, y_labeled), float(lambda_reg)))


def generator_loss(fake_logits: Tensor) -> Tensor:
    """Non-saturating objective: make fakes score as real."""
    return bce_with_logits(fake_logits, 1.0)


# -- optimizer --------------------------------------------------------------------


class Adam:
    """Bias-corrected adaptive-moment optimizer over named parameter tensors."""

    def __init__(self, params: dict[str, Tensor], lr: float = 2e-4, beta1: float = 0.5,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = dict(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            g = p.grad
            m, v = self.m[name], self.v[name]
            if g is None:
                m *= self.beta1
                v *= self.beta2
            else:
                m *= self.beta1
                m += (1.0 - self.beta1) * g
                v *= self.beta2
                v += (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# -- training loop -----------------------------------------------------------------


@dataclass
class StepMetrics:
    d_loss: float
    g_loss: float
    mae: float


@dataclass
class EpochMetrics:
    epoch: int
    d_loss: float
    g_loss: float
    train_mae: float
    val_mae: float
    val_rmse: float


@dataclass
class TrainResult:
    history: list[EpochMetrics]
    best_params: dict[str, np.ndarray] | None
    best_epoch: int | None
    best_val_mae: float


def make_batches(items, batch_size: int, seed: int, epoch: int) -> list[list]:
    """Deterministic (seed, epoch)-keyed shuffle, split into batches.

    The final partial batch is kept.
    """
    items = list(items)
    if not items:
        raise ValueError("cannot batch an empty example list")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    rng = np.random.default_rng([seed, epoch])
    order = rng.permutation(len(items))
    return [[items[i] for i in order[k:k + batch_size]]
            for k in range(0, len(items), batch_size)]


class _Cycler:
    """Endless batch stream over one example pool, reshuffled per pass."""

    def __init__(self, n: int, batch_size: int, seed: int):
        self._n, self._bs, self._seed = n, batch_size, seed
        self._pass = 0
        self._queue: list[list[int]] = []

    def next(self) -> np.ndarray:
        if not self._queue:
            self._queue = make_batches(range(self._n), self._bs, self._seed, self._pass)
            self._pass += 1
        return np.asarray(self._queue.pop(0), dtype=np.int64)


@dataclass
class TrainState:
    gen: M.GeneratorNet
    disc: M.DiscriminatorNet
    mcfg: M.ModelConfig
    tcfg: TrainConfig
    opt_g: Adam
    opt_d: Adam
    rng: np.random.Generator
    label_pool: np.ndarray
    step: int = 0


def init_train_state(gen: M.GeneratorNet, disc: M.DiscriminatorNet, mcfg: M.ModelConfig,
                     tcfg: TrainConfig, labeled_labels: np.ndarray) -> TrainState:
    gen.embedding.trainable = tcfg.train_embeddings
    d_params = disc.named_parameters()
    if tcfg.train_embeddings:
        # The table updates with the discriminator phase only (real-document
        # gradients); generator-phase contributions are cleared, not applied.
        d_params = {**d_params, "embedding/matrix": gen.embedding.matrix}
    opt_d = Adam(d_params, tcfg.lr, tcfg.beta1, tcfg.beta2, tcfg.eps)
    opt_g = Adam(gen.named_parameters(), tcfg.lr, tcfg.beta1, tcfg.beta2, tcfg.eps)
    return TrainState(
        gen=gen, disc=disc, mcfg=mcfg, tcfg=tcfg, opt_g=opt_g, opt_d=opt_d,
        rng=np.random.default_rng(tcfg.seed), label_pool=np.asarray(labeled_labels, dtype=np.float64),
    )


def _sample_condition(state: TrainState, count: int) -> tuple[np.ndarray, np.ndarray]:
    z = state.rng.standard_normal((count, state.mcfg.noise_dim))
    y_cond = state.rng.choice(state.label_pool, size=count, replace=True)
    return z, y_cond


def _generated_docs(state: TrainState, z: np.ndarray, y_cond: np.ndarray) -> Tensor:
    soft = M.generate_batch(state.gen, z, y_cond, state.mcfg)
    if state.tcfg.generation_path == "straight_through":
        soft = M.straight_through(soft)
    return M.soft_embed(soft, state.gen.embedding)


def _check_finite(value: float, what: str, step: int) -> None:
    if not np.isfinite(value):
        raise TrainingDiverged(f"{what} became non-finite ({value}) at step {step}")


def train_step(state: TrainState, lab_ids: np.ndarray, lab_y: np.ndarray,
               unlab_ids: np.ndarray | None) -> StepMetrics:
    """One alternation: d_steps discriminator updates, then one generator update."""
    tcfg = state.tcfg
    table = state.gen.embedding
    n_lab = lab_ids.shape[0]
    if n_lab == 0:
        raise ValueError("labeled batch must be non-empty")
    use_unlab = unlab_ids is not None and unlab_ids.size > 0

    d_loss_val = mae_val = 0.0
    for _ in range(tcfg.d_steps):
        z, y_cond = _sample_condition(state, tcfg.batch_generated)
        with T.no_grad():
            fake_docs = _generated_docs(state, z, y_cond)
        fake_docs = fake_docs.detach()

        # The adversarial real set is the union of the labeled and unlabeled
        # streams; each stream runs its own forward pass so the labeled
        # batch is normalized identically with or without unlabeled data.
        out_lab = M.discriminate(state.disc, L.embed_lookup(lab_ids, table), "train")
        real_logits = out_lab.adv_logit
        if use_unlab:
            out_unlab = M.discriminate(state.disc, L.embed_lookup(unlab_ids, table), "train")
            real_logits = T.concat(real_logits, out_unlab.adv_logit, axis=0)
        out_fake = M.discriminate(state.disc, fake_docs, "train", update_running=False)
        y_hat_lab = out_lab.y_hat
        d_loss = discriminator_loss(real_logits, out_fake.adv_logit,
                                    y_hat_lab, lab_y, tcfg.lambda_reg)
        if tcfg.regress_generated and tcfg.lambda_reg > 0:
            d_loss = T.add(d_loss, T.mul(mae_loss(out_fake.y_hat, y_cond), tcfg.lambda_reg))
        d_loss_val = d_loss.item()
        _check_finite(d_loss_val, "discriminator loss", state.step)
        mae_val = float(np.mean(np.abs(y_hat_lab.data - lab_y)))

        state.opt_d.zero_grad()
        d_loss.backward()
        state.opt_d.step()

    z, y_cond = _sample_condition(state, tcfg.batch_generated)
    gen_docs = _generated_docs(state, z, y_cond)
    out_fake = M.discriminate(state.disc, gen_docs, "train", update_running=False)
    g_loss = generator_loss(out_fake.adv_logit)
    g_loss_val = g_loss.item()
    _check_finite(g_loss_val, "generator loss", state.step)

    state.opt_g.zero_grad()
    g_loss.backward()
    state.opt_g.step()

    state.step += 1
    return StepMetrics(d_loss=d_loss_val, g_loss=g_loss_val, mae=mae_val)


def evaluate(disc: M.DiscriminatorNet, table: L.EmbeddingTable, ids: np.ndarray,
             labels: np.ndarray, batch_size: int = 256) -> dict[str, float]:
    """MAE and RMSE of the regression head in eval mode over a labeled set."""
    if len(ids) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    preds = predict(disc, table, ids, batch_size)
    err = preds - np.asarray(labels, dtype=np.float64)
    return {"mae": float(np.mean(np.abs(err))),
            "rmse": float(np.sqrt(np.mean(err * err)))}


def predict(disc: M.DiscriminatorNet, table: L.EmbeddingTable, ids: np.ndarray,
            batch_size: int = 256) -> np.ndarray:
    """Regression-head predictions for encoded documents, eval mode."""
    out = []
    with T.no_grad():
        for k in range(0, len(ids), batch_size):
            docs = L.embed_lookup(np.asarray(ids[k:k + batch_size]), table)
            out.append(M.discriminate(disc, docs, "eval").y_hat.data)
    return np.concatenate(out, axis=0)


def train(gen: M.GeneratorNet, disc: M.DiscriminatorNet, mcfg: M.ModelConfig,
          tcfg: TrainConfig, labeled_ids: np.ndarray, labeled_y: np.ndarray,
          unlabeled_ids: np.ndarray | None, val_ids: np.ndarray,
          val_y: np.ndarray) -> TrainResult:
    """Full training run; retains the best-validation parameter snapshot.

    An epoch is one pass over the labeled stream; the unlabeled stream cycles
    independently so every step sees both.  With no unlabeled documents the
    adversarial real set degenerates to the labeled batch alone.
    """
    if len(labeled_ids) == 0:
        raise ValueError("labeled set must be non-empty")
    state = init_train_state(gen, disc, mcfg, tcfg, labeled_y)
    use_unlab = unlabeled_ids is not None and len(unlabeled_ids) > 0
    cycler = _Cycler(len(unlabeled_ids), tcfg.batch_unlabeled, tcfg.seed + 1) if use_unlab else None

    history: list[EpochMetrics] = []
    best_params: dict[str, np.ndarray] | None = None
    best_epoch: int | None = None
    best_val = float("inf")

    for epoch in range(tcfg.epochs):
        step_stats: list[StepMetrics] = []
        for batch in make_batches(range(len(labeled_ids)), tcfg.batch_labeled, tcfg.seed, epoch):
            idx = np.asarray(batch, dtype=np.int64)
            unlab = unlabeled_ids[cycler.next()] if cycler is not None else None
            step_stats.append(train_step(state, labeled_ids[idx], labeled_y[idx], unlab))
        val = evaluate(disc, gen.embedding, val_ids, val_y)
        rec = EpochMetrics(
            epoch=epoch + 1,
            d_loss=float(np.mean([s.d_loss for s in step_stats])),
            g_loss=float(np.mean([s.g_loss for s in step_stats])),
            train_mae=float(np.mean([s.mae for s in step_stats])),
            val_mae=val["mae"],
            val_rmse=val["rmse"],
        )
        history.append(rec)
        if rec.val_mae < best_val:
            best_val = rec.val_mae
            best_epoch = epoch + 1
            best_params = snapshot_params(gen, disc)
    return TrainResult(history=history, best_params=best_params,
                       best_epoch=best_epoch, best_val_mae=best_val)


def snapshot_params(gen: M.GeneratorNet, disc: M.DiscriminatorNet) -> dict[str, np.ndarray]:
    params = {"embedding/matrix": gen.embedding.matrix.data.copy()}
    for name, p in {**gen.named_parameters(), **disc.named_parameters()}.items():
        params[name] = p.data.copy()
    # Running batch-norm statistics belong to the snapshot: eval mode needs them.
    for i, blk in enumerate(disc.blocks):
        params[f"discriminator/block{i}/bn1/running_mean"] = blk.bn1.running_mean.copy()
        params[f"discriminator/block{i}/bn1/running_var"] = blk.bn1.running_var.copy()
        params[f"discriminator/block{i}/bn2/running_mean"] = blk.bn2.running_mean.copy()
        params[f"discriminator/block{i}/bn2/running_var"] = blk.bn2.running_var.copy()
    return params


def restore_params(gen: M.GeneratorNet, disc: M.DiscriminatorNet,
                   params: dict[str, np.ndarray]) -> None:
    named = {"embedding/matrix": gen.embedding.matrix,
             **gen.named_parameters(), **disc.named_parameters()}
    for name, tensor in named.items():
        if name not in params:
            raise KeyError(f"snapshot is missing parameter {name!r}")
        if tensor.data.shape != params[name].shape:
            raise ValueError(f"shape mismatch restoring {name!r}")
        tensor.data = params[name].copy()
    for i, blk in enumerate(disc.blocks):
        blk.bn1.running_mean = params[f"discriminator/block{i}/bn1/running_mean"].copy()
        blk.bn1.running_var = params[f"discriminator/block{i}/bn1/running_var"].copy()
        blk.bn2.running_mean = params[f"discriminator/block{i}/bn2/running_mean"].copy()
        blk.bn2.running_var = params[f"discriminator/block{i}/bn2/running_var"].copy()
