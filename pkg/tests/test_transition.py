#!/usr/bin/env python3
"""
Unit tests for transition.py
"""
import os
import sys
import tempfile
import unittest
from pathlib import Path

import numpy as np

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from classifier import Adam, Classifier, ce_grad
from core_math import DirichletParams, SeededRng, dirichlet_samples
from noisy_data import generate_gaussian_mixture
from transition import (
    AnchorEstimationError,
    SingularTransitionError,
    TransitionMatrix,
    apply,
    corrupt,
    estimate_anchor,
    estimation_error,
    invert,
)


class _PosteriorClassifier:
    """Predicts T applied to a fixed clean posterior."""

    def __init__(self, mixture, T):
        self.mixture = mixture
        self.T = T

    def predict_proba(self, features):
        return apply(self.T, self.mixture.posterior(features))


class _ConstantClassifier:
    def __init__(self, row):
        self.row = np.asarray(row, dtype=np.float64)

    def predict_proba(self, features):
        return np.tile(self.row, (len(features), 1))


class TestTransitionMatrix(unittest.TestCase):
    def test_entries_are_read_only(self):
        T = TransitionMatrix.identity(3)
        with self.assertRaises(ValueError):
            T.entries[0, 0] = 0.5

    def test_rejects_malformed(self):
        for bad in ([[0.5, 0.5]], [[1.2, 0.0], [-0.2, 1.0]], [[np.nan, 0.0], [1.0, 1.0]]):
            with self.subTest(bad=bad):
                with self.assertRaises(ValueError):
                    TransitionMatrix(np.array(bad))

    def test_pair_flip_rejects_out_of_range(self):
        with self.assertRaises(ValueError):
            TransitionMatrix.pair_flip(3, 0.2, {0: 3})

    def test_csv_round_trip(self):
        T = TransitionMatrix.symmetric(4, 0.37)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "T.csv"
            T.to_csv(path)
            loaded = TransitionMatrix.from_csv(path)
        np.testing.assert_array_equal(loaded.entries, T.entries)


class TestApplyAndInvert(unittest.TestCase):
    def test_identity_is_a_no_op(self):
        p = np.array([[0.2, 0.5, 0.3], [1.0, 0.0, 0.0]])
        np.testing.assert_array_equal(apply(TransitionMatrix.identity(3), p), p)

    def test_apply_keeps_prob_vectors(self):
        T = TransitionMatrix.pair_flip(3, 0.3, {0: 1, 1: 2, 2: 0})
        q = apply(T, np.array([1.0, 0.0, 0.0]))
        np.testing.assert_allclose(q, [0.7, 0.3, 0.0])
        batch = SeededRng(0).uniform(size=(20, 3))
        batch /= batch.sum(axis=1, keepdims=True)
        np.testing.assert_allclose(apply(T, batch).sum(axis=1), 1.0, atol=1e-12)

    def test_apply_rejects_wrong_width(self):
        with self.assertRaises(ValueError):
            apply(TransitionMatrix.identity(3), np.array([0.5, 0.5]))

    def test_inverse(self):
        T = TransitionMatrix.symmetric(4, 0.4)
        np.testing.assert_allclose(T.entries @ invert(T), np.eye(4), atol=1e-12)

    def test_inverse_of_random_well_conditioned_matrices(self):
        for seed in range(5):
            with self.subTest(seed=seed):
                rng = SeededRng(seed)
                mixing = dirichlet_samples(DirichletParams(1.0, np.full(5, 0.2)), 5, rng).T
                T = TransitionMatrix(0.7 * np.eye(5) + 0.3 * mixing)
                np.testing.assert_allclose(invert(T) @ T.entries, np.eye(5), atol=1e-9)

    def test_singular_raises(self):
        T = TransitionMatrix(np.full((2, 2), 0.5))
        with self.assertRaises(SingularTransitionError):
            invert(T)
        # symmetric noise at rate (C-1)/C has identical columns
        with self.assertRaises(SingularTransitionError):
            invert(TransitionMatrix.symmetric(4, 0.75))


class TestCorrupt(unittest.TestCase):
    def test_corrupted_entries(self):
        T = corrupt(TransitionMatrix.symmetric(4, 0.2), 0.1)
        np.testing.assert_allclose(np.diag(T.entries), 0.7)
        self.assertAlmostEqual(T.entries[0, 1], 0.2 / 3 + 0.1 / 3, places=12)

    def test_zero_eps_keeps_entries(self):
        T = TransitionMatrix.pair_flip(3, 0.25, {0: 1})
        np.testing.assert_allclose(corrupt(T, 0.0).entries, T.entries, atol=1e-15)

    def test_estimation_error_of_corruption(self):
        c, eps = 5, 0.05
        T = TransitionMatrix.symmetric(c, 0.3)
        expected = eps * np.sqrt(c * c / (c - 1))
        self.assertAlmostEqual(estimation_error(corrupt(T, eps), T), expected, places=12)
        self.assertEqual(estimation_error(T, T), 0.0)

    def test_corruption_is_undone_by_negated_eps(self):
        T = TransitionMatrix.pair_flip(4, 0.3, {0: 1, 1: 2, 2: 3, 3: 0})
        for eps in (0.01, 0.05, 0.1):
            with self.subTest(eps=eps):
                np.testing.assert_allclose(corrupt(corrupt(T, eps), -eps).entries, T.entries, atol=1e-12)

    def test_too_large_eps_raises(self):
        with self.assertRaises(ValueError):
            corrupt(TransitionMatrix.identity(3), 1.5)


class TestAnchorEstimation(unittest.TestCase):
    """Tests for estimate_anchor."""

    def test_recovers_true_transition_from_oracle_classifier(self):
        ds = generate_gaussian_mixture(3, 2, 6000, 10.0, SeededRng(0))
        T = TransitionMatrix.pair_flip(3, 0.3, {0: 1, 1: 2, 2: 0})
        clf = _PosteriorClassifier(ds.posterior_oracle, T)
        for rank_by in ("class", "argmax"):
            with self.subTest(rank_by=rank_by):
                estimate = estimate_anchor(clf, ds, fraction=0.03, rank_by=rank_by)
                self.assertLess(estimation_error(estimate, T), 1e-3)

    def test_columns_are_stochastic(self):
        ds = generate_gaussian_mixture(4, 4, 800, 1.0, SeededRng(1))
        estimate = estimate_anchor(_PosteriorClassifier(ds.posterior_oracle, TransitionMatrix.symmetric(4, 0.2)), ds)
        np.testing.assert_allclose(estimate.entries.sum(axis=0), 1.0, atol=1e-12)

    def test_trained_classifier_on_clean_labels_gives_identity(self):
        rng = SeededRng(4)
        ds = generate_gaussian_mixture(3, 4, 3000, 10.0, rng)
        clf = Classifier.initialize(4, 3)
        opt = Adam(lr=0.05)
        for _ in range(200):
            opt.step(clf, ce_grad(clf, ds.features, ds.noisy_labels))
        estimate = estimate_anchor(clf, ds)
        self.assertLess(np.abs(estimate.entries - np.eye(3)).max(), 0.05)

    def test_full_fraction_on_uniform_posterior_averages_every_prediction(self):
        rng = SeededRng(5)
        ds = generate_gaussian_mixture(3, 4, 500, 0.0, rng)
        clf = Classifier.initialize(4, 3)
        clf.params = rng.normal(size=clf.num_params)
        mean = clf.predict_proba(ds.features).mean(axis=0)
        estimate = estimate_anchor(clf, ds, fraction=1.0)
        np.testing.assert_allclose(estimate.entries, np.tile(mean[:, None], (1, 3)), atol=1e-12)

    def test_class_with_no_prediction_raises(self):
        ds = generate_gaussian_mixture(2, 1, 50, 1.0, SeededRng(2))
        with self.assertRaises(AnchorEstimationError) as ctx:
            estimate_anchor(_ConstantClassifier([0.6, 0.4]), ds, rank_by="argmax")
        self.assertEqual(ctx.exception.class_index, 1)

    def test_rejects_bad_arguments(self):
        ds = generate_gaussian_mixture(2, 1, 10, 1.0, SeededRng(3))
        clf = _ConstantClassifier([0.5, 0.5])
        with self.assertRaises(ValueError):
            estimate_anchor(clf, ds, fraction=0.0)
        with self.assertRaises(ValueError):
            estimate_anchor(clf, ds, rank_by="margin")


if __name__ == "__main__":
    unittest.main()
