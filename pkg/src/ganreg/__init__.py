"""Semi-supervised text regression with an adversarial generator.

An LSTM decoder generates soft token sequences conditioned on noise and a
target value; a residual 1-d CNN discriminator both judges realness and
predicts the real-valued label, trained with mean absolute error plus
adversarial losses on corpora where only some documents are labeled.
"""

from .baseline import RidgeModel, mean_pool, ridge_fit, ridge_predict
from .data import (
    CorpusSplit,
    EncodedDataset,
    Example,
    Vocabulary,
    encode_document,
    load_corpus,
    load_embeddings,
    predict_mean_mae,
    synth_corpus,
    tokenize,
)
from .estimators import GanTextRegressor, RidgeTextRegressor
from .layers import EmbeddingTable
from .model import (
    DiscriminatorNet,
    DiscriminatorOutput,
    GeneratorNet,
    ModelConfig,
    build_model,
    decode_tokens,
    discriminate,
    generate,
    generate_batch,
    soft_embed,
    straight_through,
)
from .tensor import Tensor, grad_check
from .training import (
    Adam,
    EpochMetrics,
    TrainConfig,
    TrainingDiverged,
    TrainResult,
    bce_with_logits,
    discriminator_loss,
    evaluate,
    generator_loss,
    mae_loss,
    train,
    train_step,
)

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "CorpusSplit",
    "DiscriminatorNet",
    "DiscriminatorOutput",
    "EmbeddingTable",
    "EncodedDataset",
    "EpochMetrics",
    "Example",
    "GanTextRegressor",
    "GeneratorNet",
    "ModelConfig",
    "RidgeModel",
    "RidgeTextRegressor",
    "Tensor",
    "TrainConfig",
    "TrainResult",
    "TrainingDiverged",
    "Vocabulary",
    "bce_with_logits",
    "build_model",
    "decode_tokens",
    "discriminate",
    "discriminator_loss",
    "encode_document",
    "evaluate",
    "generate",
    "generate_batch",
    "generator_loss",
    "grad_check",
    "load_corpus",
    "load_embeddings",
    "mae_loss",
    "mean_pool",
    "predict_mean_mae",
    "ridge_fit",
    "ridge_predict",
    "soft_embed",
    "straight_through",
    "synth_corpus",
    "tokenize",
    "train",
    "train_step",
]
