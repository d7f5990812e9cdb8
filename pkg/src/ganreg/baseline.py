"""Linear comparison arm: ridge regression over mean-pooled embeddings.

Solved in closed form from the normal equations with a partial-pivoting
Gaussian elimination (LAPACK's ``gesv`` via ``numpy.linalg.solve``); the bias
rides along as an unregularized constant feature.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import PAD_ID, EncodedDataset
from .layers import EmbeddingTable


@dataclass
class RidgeModel:
    weights: np.ndarray  # [N]
    bias: float
    alpha: float


def mean_pool(doc: np.ndarray, pad_mask: np.ndarray) -> np.ndarray:
    """Mean of the non-PAD rows of a [D, N] document matrix."""
    keep = ~np.asarray(pad_mask, dtype=bool)
    if not keep.any():
        raise ValueError("cannot pool an all-PAD document")
    return np.asarray(doc)[keep].mean(axis=0)


def pool_dataset(dataset: EncodedDataset, table: EmbeddingTable) -> np.ndarray:
    """Mean-pooled embedding features for every document: [n, N]."""
    docs = table.matrix.data[dataset.ids]          # [n, D, N]
    keep = (dataset.ids != PAD_ID)                  # [n, D]
    counts = keep.sum(axis=1)
    if np.any(counts == 0):
        raise ValueError("dataset contains an all-PAD document")
    return (docs * keep[:, :, None]).sum(axis=1) / counts[:, None]


def ridge_fit(X: np.ndarray, y: np.ndarray, alpha: float) -> RidgeModel:
    """Closed-form ridge fit; the bias column is not regularized."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ValueError(f"bad shapes: X {X.shape}, y {y.shape}")
    if X.shape[0] < 1:
        raise ValueError("need at least one sample")
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    n = X.shape[1]
    Xa = np.concatenate([X, np.ones((X.shape[0], 1))], axis=1)
    A = Xa.T @ Xa
    A[np.arange(n), np.arange(n)] += alpha
    b = Xa.T @ y
    try:
        w = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        raise ValueError(
            "normal equations are singular (rank-deficient features at alpha=0); "
            "use alpha > 0"
        ) from None
    residual = float(np.max(np.abs(A @ w - b)))
    if residual >= 1e-8 * max(1.0, float(np.max(np.abs(b)))):
        raise ValueError(f"linear solve residual too large: {residual}")
    return RidgeModel(weights=w[:n], bias=float(w[n]), alpha=alpha)


def ridge_predict(model: RidgeModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.weights.shape[0]:
        raise ValueError(f"feature dim {X.shape} does not match model "
                         f"({model.weights.shape[0]})")
    return X @ model.weights + model.bias
