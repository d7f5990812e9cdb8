"""Ridge baseline: pooling semantics, planted-solution recovery, ridge limits,
and optimality against an exhaustive weight grid."""

import itertools

import numpy as np
import pytest

from ganreg import baseline as B
from ganreg import data as D


class TestMeanPool:
    def test_single_row(self, rng):
        r = rng.normal(size=4)
        assert np.array_equal(B.mean_pool(r[None, :], [False]), r)

    def test_opposite_rows_cancel(self, rng):
        r = rng.normal(size=4)
        out = B.mean_pool(np.stack([r, -r]), [False, False])
        assert np.max(np.abs(out)) < 1e-15

    def test_pad_rows_excluded(self, rng):
        r = rng.normal(size=4)
        out = B.mean_pool(np.stack([r, np.zeros(4)]), [False, True])
        assert np.array_equal(out, r)

    def test_all_pad_rejected(self):
        with pytest.raises(ValueError, match="all-PAD"):
            B.mean_pool(np.zeros((2, 3)), [True, True])


class TestRidgeFit:
    def planted(self, rng, m=60, n=5, noise=0.0):
        w_star = rng.normal(size=n)
        b_star = rng.normal()
        X = rng.normal(size=(m, n))
        y = X @ w_star + b_star + (noise * rng.normal(size=m) if noise else 0.0)
        return X, y, w_star, b_star

    def test_planted_solution_recovered(self, rng):
        X, y, w_star, b_star = self.planted(rng)
        model = B.ridge_fit(X, y, alpha=1e-8)
        assert np.max(np.abs(model.weights - w_star)) < 1e-6
        assert abs(model.bias - b_star) < 1e-6
        preds = B.ridge_predict(model, X)
        assert np.mean(np.abs(preds - y)) < 1e-6

    def test_huge_alpha_shrinks_to_mean(self, rng):
        X, y, _, _ = self.planted(rng)
        small = B.ridge_fit(X, y, alpha=1e-8)
        big = B.ridge_fit(X, y, alpha=1e9)
        assert np.linalg.norm(big.weights) < 1e-6 * np.linalg.norm(small.weights)
        assert abs(big.bias - y.mean()) < 1e-4

    def test_two_point_line(self):
        model = B.ridge_fit(np.array([[1.0], [2.0]]), np.array([1.0, 2.0]), alpha=0.0)
        assert abs(model.weights[0] - 1.0) < 1e-12
        assert abs(model.bias) < 1e-12

    def test_normal_equation_residual(self, rng):
        X, y, _, _ = self.planted(rng, m=300, n=8, noise=0.3)
        for alpha in (0.0, 1e-4, 1.0):
            model = B.ridge_fit(X, y, alpha)
            n = X.shape[1]
            Xa = np.concatenate([X, np.ones((X.shape[0], 1))], axis=1)
            A = Xa.T @ Xa + np.diag([alpha] * n + [0.0])
            w = np.concatenate([model.weights, [model.bias]])
            assert np.max(np.abs(A @ w - Xa.T @ y)) < 1e-8

    def test_alpha_monotone_shrinkage(self, rng):
        X, y, _, _ = self.planted(rng, noise=0.5)
        norms = [np.linalg.norm(B.ridge_fit(X, y, a).weights)
                 for a in (1e-6, 1e-2, 1.0, 1e2, 1e4)]
        assert all(a >= b for a, b in zip(norms, norms[1:]))

    def test_singular_at_alpha_zero_reports(self, rng):
        col = rng.normal(size=(20, 1))
        X = np.concatenate([col, col], axis=1)  # rank deficient
        with pytest.raises(ValueError, match="alpha > 0"):
            B.ridge_fit(X, X[:, 0], alpha=0.0)


class TestRidgePredict:
    def test_zero_weights_constant(self):
        model = B.RidgeModel(weights=np.zeros(3), bias=2.5, alpha=0.0)
        assert np.array_equal(B.ridge_predict(model, np.ones((4, 3))), np.full(4, 2.5))

    def test_least_squares_beats_weight_grid(self, rng):
        """SSE at the fit is no worse than any (w1, w2) on a 1e-2 grid."""
        X = rng.normal(size=(40, 2))
        y = X @ np.array([0.4, -0.7]) + 0.2 + 0.05 * rng.normal(size=40)
        model = B.ridge_fit(X, y, alpha=0.0)
        fit_sse = np.sum((B.ridge_predict(model, X) - y) ** 2)
        grid = np.arange(-1.0, 1.0 + 1e-9, 1e-2)
        b = model.bias  # grid over weights; bias from the fit
        best = min(
            np.sum((X @ np.array([w1, w2]) + b - y) ** 2)
            for w1, w2 in itertools.product(grid, grid)
        )
        assert fit_sse <= best + 1e-12

    def test_affine_linearity(self, rng):
        model = B.RidgeModel(weights=rng.normal(size=3), bias=1.7, alpha=0.0)
        X1 = rng.normal(size=(5, 3))
        X2 = rng.normal(size=(5, 3))
        lhs = B.ridge_predict(model, X1 + X2)
        rhs = B.ridge_predict(model, X1) + B.ridge_predict(model, X2) - model.bias
        assert np.max(np.abs(lhs - rhs)) < 1e-12

    def test_dimension_mismatch(self):
        model = B.RidgeModel(weights=np.zeros(3), bias=0.0, alpha=0.0)
        with pytest.raises(ValueError, match="feature dim"):
            B.ridge_predict(model, np.zeros((2, 4)))


class TestOnSyntheticCorpus:
    def test_noiseless_linear_corpus_exact(self):
        split, vocab, table = D.synth_corpus(500, 0, 200, doc_len=8,
                                             noise_sigma=0.0, seed=4)
        enc_tr = D.encode_dataset(split.labeled, vocab, 8, require_labels=True)
        enc_te = D.encode_dataset(split.validation, vocab, 8, require_labels=True)
        model = B.ridge_fit(B.pool_dataset(enc_tr, table), enc_tr.labels, alpha=1e-8)
        preds = B.ridge_predict(model, B.pool_dataset(enc_te, table))
        assert np.mean(np.abs(preds - enc_te.labels)) < 1e-6

    def test_pool_dataset_matches_mean_pool(self, rng):
        split, vocab, table = D.synth_corpus(5, 0, 0, doc_len=4, noise_sigma=0.0, seed=9)
        enc = D.encode_dataset(split.labeled, vocab, 6, require_labels=True)  # padded
        X = B.pool_dataset(enc, table)
        for i, e in enumerate(split.labeled):
            doc = table.matrix.data[enc.ids[i]]
            ref = B.mean_pool(doc, enc.ids[i] == 0)
            assert np.allclose(X[i], ref, atol=1e-15)
