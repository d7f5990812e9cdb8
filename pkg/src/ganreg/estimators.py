"""Scikit-learn style estimators over the adversarial training engine.

``GanTextRegressor`` fits on raw text with partially missing targets (NaN
marks an unlabeled document) and predicts real values with the trained
discriminator head.  ``RidgeTextRegressor`` wraps the pooled-embedding ridge
baseline behind the same interface.  Both compose with sklearn tooling
(``clone``, pipelines, ``cross_val_score``) via ``BaseEstimator``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError

from . import baseline as BL
from . import data as D
from . import layers as L
from . import model as M
from . import training as E


def check_text_input(X) -> list[str]:
    """Validate that X is a non-empty sequence of strings."""
    if isinstance(X, str):
        raise ValueError("X must be a sequence of documents, not a single string")
    docs = list(X)
    if not docs:
        raise ValueError("X is empty")
    for i, doc in enumerate(docs):
        if not isinstance(doc, str):
            raise ValueError(f"X[{i}] is {type(doc).__name__}, expected str")
    return docs


def check_targets(y, n: int, allow_missing: bool) -> np.ndarray:
    """Validate targets; NaN marks a missing (unlabeled) entry when allowed."""
    arr = np.asarray(y, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] != n:
        raise ValueError(f"y must be 1-d of length {n}, got shape {arr.shape}")
    if np.any(np.isinf(arr)):
        raise ValueError("y contains infinities")
    if not allow_missing and np.any(np.isnan(arr)):
        raise ValueError("y contains NaN but this estimator needs full labels")
    if allow_missing and not np.any(~np.isnan(arr)):
        raise ValueError("y has no finite entries; at least one label is required")
    return arr


def _resolve_embeddings(embeddings, docs: list[str], embed_dim: int, seed: int):
    """Load a table from file, or synthesize one over the corpus vocabulary."""
    if embeddings is not None:
        return D.load_embeddings(embeddings)
    tokens = sorted({t for doc in docs for t in D.tokenize(doc)})
    if not tokens:
        raise ValueError("corpus tokenizes to nothing; cannot build a vocabulary")
    vocab = D.Vocabulary.from_tokens(tokens)
    rng = np.random.default_rng([seed, len(tokens)])
    table = L.init_embedding(rng, len(vocab), embed_dim, trainable=True)
    return vocab, table


class GanTextRegressor(BaseEstimator, RegressorMixin):
    """Semi-supervised text regressor trained adversarially.

    Parameters mirror the engine configuration; ``embeddings`` optionally
    names a pretrained embedding file, otherwise seeded random vectors of
    ``embed_dim`` dimensions are synthesized over the training vocabulary.

    Unlabeled documents are passed in ``fit`` as rows whose ``y`` is NaN.
    """

    def __init__(self, embeddings=None, embed_dim=8, doc_len=16, gen_hidden=32,
                 noise_dim=16, channels=16, kernel_size=3, n_blocks=4,
                 temperature=1.0, conditional=True, lr=2e-4, beta1=0.5,
                 beta2=0.999, lambda_reg=1.0, batch_labeled=32,
                 batch_unlabeled=32, batch_generated=32, epochs=10, d_steps=1,
                 seed=0, generation_path="soft", train_embeddings=False,
                 regress_generated=False, validation_fraction=0.1):
        self.embeddings = embeddings
        self.embed_dim = embed_dim
        self.doc_len = doc_len
        self.gen_hidden = gen_hidden
        self.noise_dim = noise_dim
        self.channels = channels
        self.kernel_size = kernel_size
        self.n_blocks = n_blocks
        self.temperature = temperature
        self.conditional = conditional
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.lambda_reg = lambda_reg
        self.batch_labeled = batch_labeled
        self.batch_unlabeled = batch_unlabeled
        self.batch_generated = batch_generated
        self.epochs = epochs
        self.d_steps = d_steps
        self.seed = seed
        self.generation_path = generation_path
        self.train_embeddings = train_embeddings
        self.regress_generated = regress_generated
        self.validation_fraction = validation_fraction

    def fit(self, X, y):
        docs = check_text_input(X)
        targets = check_targets(y, len(docs), allow_missing=True)
        self.vocab_, self.embedding_ = _resolve_embeddings(
            self.embeddings, docs, self.embed_dim, self.seed)

        ids = np.stack([
            D.encode_document(D.tokenize(doc), self.vocab_, self.doc_len)
            for doc in docs
        ])
        labeled_mask = ~np.isnan(targets)
        lab_ids, lab_y = ids[labeled_mask], targets[labeled_mask]
        unlab_ids = ids[~labeled_mask] if np.any(~labeled_mask) else None

        # Validation carved from the labeled pool; tiny pools validate on
        # themselves rather than starving the training stream.
        n_val = int(round(self.validation_fraction * len(lab_y)))
        if 0 < n_val < len(lab_y):
            order = np.random.default_rng([self.seed, 97]).permutation(len(lab_y))
            val_idx, fit_idx = order[:n_val], order[n_val:]
        else:
            val_idx = fit_idx = np.arange(len(lab_y))

        self.model_config_ = M.ModelConfig(
            vocab_size=len(self.vocab_), embed_dim=self.embedding_.dim,
            doc_len=self.doc_len, gen_hidden=self.gen_hidden,
            noise_dim=self.noise_dim, channels=self.channels,
            kernel_size=self.kernel_size, n_blocks=self.n_blocks,
            temperature=self.temperature, conditional=self.conditional,
        )
        tcfg = E.TrainConfig(
            lr=self.lr, beta1=self.beta1, beta2=self.beta2,
            lambda_reg=self.lambda_reg, batch_labeled=self.batch_labeled,
            batch_unlabeled=self.batch_unlabeled,
            batch_generated=self.batch_generated, epochs=self.epochs,
            seed=self.seed, d_steps=self.d_steps,
            generation_path=self.generation_path,
            train_embeddings=self.train_embeddings,
            regress_generated=self.regress_generated,
        )
        self.generator_, self.discriminator_ = M.build_model(
            self.model_config_, self.seed, embedding=self.embedding_)
        result = E.train(self.generator_, self.discriminator_, self.model_config_,
                         tcfg, lab_ids[fit_idx], lab_y[fit_idx], unlab_ids,
                         lab_ids[val_idx], lab_y[val_idx])
        if result.best_params is not None:
            E.restore_params(self.generator_, self.discriminator_, result.best_params)
        self.history_ = result.history
        self.label_pool_ = lab_y
        return self

    def predict(self, X):
        self._check_fitted()
        docs = check_text_input(X)
        ids = np.stack([
            D.encode_document(D.tokenize(doc), self.vocab_, self.doc_len)
            for doc in docs
        ])
        return E.predict(self.discriminator_, self.embedding_, ids)

    def sample(self, n: int, seed: int = 0) -> list[tuple[float, str]]:
        """Decode ``n`` generated documents as (condition, text) pairs."""
        self._check_fitted()
        rng = np.random.default_rng(seed)
        out = []
        for _ in range(n):
            z = rng.standard_normal(self.model_config_.noise_dim)
            y_cond = float(rng.choice(self.label_pool_))
            soft = M.generate(self.generator_, z, y_cond, self.model_config_)
            tokens = [t for t in M.decode_tokens(soft, self.vocab_) if t]
            out.append((y_cond, " ".join(tokens)))
        return out

    def _check_fitted(self):
        if not hasattr(self, "discriminator_"):
            raise NotFittedError("call fit before predict")


class RidgeTextRegressor(BaseEstimator, RegressorMixin):
    """Closed-form ridge regression over mean-pooled document embeddings."""

    def __init__(self, embeddings=None, embed_dim=8, doc_len=16, alpha=1e-6, seed=0):
        self.embeddings = embeddings
        self.embed_dim = embed_dim
        self.doc_len = doc_len
        self.alpha = alpha
        self.seed = seed

    def fit(self, X, y):
        docs = check_text_input(X)
        targets = check_targets(y, len(docs), allow_missing=False)
        self.vocab_, self.embedding_ = _resolve_embeddings(
            self.embeddings, docs, self.embed_dim, self.seed)
        features = self._features(docs)
        self.model_ = BL.ridge_fit(features, targets, self.alpha)
        return self

    def predict(self, X):
        if not hasattr(self, "model_"):
            raise NotFittedError("call fit before predict")
        return BL.ridge_predict(self.model_, self._features(check_text_input(X)))

    def _features(self, docs: list[str]) -> np.ndarray:
        ids = np.stack([
            D.encode_document(D.tokenize(doc), self.vocab_, self.doc_len)
            for doc in docs
        ])
        return BL.pool_dataset(D.EncodedDataset(ids=ids), self.embedding_)
