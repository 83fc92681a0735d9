#!/usr/bin/env python3
"""
Unit tests for noisy_data.py and noise_presets.py
"""
import os
import sys
import tempfile
import unittest
from pathlib import Path

import numpy as np

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import noise_presets
from core_math import SeededRng
from noisy_data import (
    GaussianMixture,
    NoiseSpec,
    NoisyDataset,
    cyclic_pair_map,
    empirical_confusion,
    generate_gaussian_mixture,
    inject_noise,
    load_csv,
    noise_transition,
    sample_clean_split,
    save_csv,
    superclass_pair_map,
)
from transition import TransitionMatrix


def _clean_labels(num_classes, count, seed=0):
    labels = SeededRng(seed).integers(0, num_classes, size=count)
    return NoisyDataset(
        features=np.zeros((count, 1)),
        clean_labels=labels,
        noisy_labels=labels.copy(),
        num_classes=num_classes,
    )


class TestGaussianMixture(unittest.TestCase):
    """Tests for generate_gaussian_mixture and the posterior oracle."""

    def test_well_separated_bayes_accuracy(self):
        ds = generate_gaussian_mixture(2, 2, 100, 10.0, SeededRng(0))
        fresh = sample_clean_split(ds.posterior_oracle, 10_000, SeededRng(1))
        bayes = fresh.clean_posterior().argmax(axis=1)
        self.assertGreater(np.mean(bayes == fresh.clean_labels), 0.999)

    def test_zero_separation_gives_uniform_posterior(self):
        ds = generate_gaussian_mixture(3, 4, 50, 0.0, SeededRng(2))
        np.testing.assert_allclose(ds.clean_posterior(), np.full((50, 3), 1.0 / 3), atol=1e-12)

    def test_minimum_size(self):
        ds = generate_gaussian_mixture(2, 1, 2, 3.0, SeededRng(3))
        self.assertEqual(len(ds), 2)
        again = generate_gaussian_mixture(2, 1, 2, 3.0, SeededRng(3))
        np.testing.assert_array_equal(ds.clean_labels, again.clean_labels)

    def test_starts_noise_free(self):
        ds = generate_gaussian_mixture(4, 16, 500, 3.0, SeededRng(4))
        np.testing.assert_array_equal(ds.clean_labels, ds.noisy_labels)
        self.assertFalse(ds.is_noisy.any())

    def test_means_are_pairwise_separated(self):
        ds = generate_gaussian_mixture(4, 6, 10, 2.5, SeededRng(0))
        means = ds.posterior_oracle.means
        dist = np.linalg.norm(means[:, None, :] - means[None, :, :], axis=2)
        off = dist[~np.eye(4, dtype=bool)]
        np.testing.assert_allclose(off, 2.5, atol=1e-12)

    def test_posterior_rows_are_prob_vectors(self):
        mixture = GaussianMixture(np.array([[0.0, 0.0], [3.0, 0.0], [0.0, 3.0]]))
        post = mixture.posterior(SeededRng(5).normal(size=(200, 2)) * 4)
        self.assertTrue(np.all(post >= 0))
        np.testing.assert_allclose(post.sum(axis=1), 1.0, atol=1e-12)

    def test_rejects_bad_arguments(self):
        rng = SeededRng(0)
        with self.assertRaises(ValueError):
            generate_gaussian_mixture(1, 2, 10, 1.0, rng)
        with self.assertRaises(ValueError):
            generate_gaussian_mixture(3, 2, 2, 1.0, rng)
        with self.assertRaises(ValueError):
            generate_gaussian_mixture(3, 2, 10, -1.0, rng)
        with self.assertRaises(ValueError):
            generate_gaussian_mixture(4, 2, 10, 1.0, rng)

    def test_instances_iterate_in_order(self):
        ds = generate_gaussian_mixture(3, 2, 5, 2.0, SeededRng(6))
        instances = list(ds)
        self.assertEqual(len(instances), 5)
        self.assertEqual(instances[2].clean_label, int(ds.clean_labels[2]))
        np.testing.assert_array_equal(instances[2].features, ds.features[2])


class TestNoiseInjection(unittest.TestCase):
    """Tests for inject_noise."""

    def test_symmetric_transition(self):
        T = noise_transition(NoiseSpec(kind="symmetric", rate=0.2), 10)
        np.testing.assert_allclose(np.diag(T.entries), 0.8)
        self.assertAlmostEqual(T.entries[1, 0], 0.2 / 9, places=12)

    def test_zero_rate_is_identity(self):
        ds = _clean_labels(5, 1000)
        noisy, T = inject_noise(ds, NoiseSpec(kind="symmetric", rate=0.0, seed=3))
        np.testing.assert_array_equal(T.entries, np.eye(5))
        np.testing.assert_array_equal(noisy.noisy_labels, ds.clean_labels)

    def test_symmetric_flip_fraction(self):
        ds = _clean_labels(4, 100_000)
        noisy, _ = inject_noise(ds, NoiseSpec(kind="symmetric", rate=0.5, seed=7))
        self.assertLess(abs(noisy.is_noisy.mean() - 0.5), 0.006)

    def test_empirical_confusion_converges(self):
        cases = [
            NoiseSpec(kind="symmetric", rate=0.2, seed=1),
            NoiseSpec(kind="symmetric", rate=0.5, seed=2),
            NoiseSpec(kind="asymmetric", rate=0.4, seed=3),
        ]
        ds = _clean_labels(2, 100_000, seed=9)
        for spec in cases:
            with self.subTest(kind=spec.kind, rate=spec.rate):
                noisy, T = inject_noise(ds, spec)
                self.assertLess(np.max(np.abs(empirical_confusion(noisy) - T.entries)), 0.01)

    def test_asymmetric_pairs(self):
        T = noise_transition(NoiseSpec(kind="asymmetric", rate=0.3, pair_map={0: 1, 1: 0}), 3)
        expected = np.array([[0.7, 0.3, 0.0], [0.3, 0.7, 0.0], [0.0, 0.0, 1.0]])
        np.testing.assert_allclose(T.entries, expected)

    def test_asymmetric_defaults_to_cyclic(self):
        T = noise_transition(NoiseSpec(kind="asymmetric", rate=0.25), 4)
        self.assertEqual(cyclic_pair_map(4), {0: 1, 1: 2, 2: 3, 3: 0})
        self.assertAlmostEqual(T.entries[1, 0], 0.25)
        self.assertAlmostEqual(T.entries[0, 3], 0.25)

    def test_explicit_matrix(self):
        M = TransitionMatrix(np.array([[0.9, 0.3], [0.1, 0.7]]))
        noisy, T = inject_noise(_clean_labels(2, 10), NoiseSpec(kind="matrix", matrix=M, seed=0))
        self.assertIs(T, M)
        with self.assertRaises(ValueError):
            noise_transition(NoiseSpec(kind="matrix", matrix=M), 3)

    def test_rejects_bad_specs(self):
        with self.assertRaises(ValueError):
            NoiseSpec(kind="symmetric", rate=1.0)
        with self.assertRaises(ValueError):
            NoiseSpec(kind="matrix")
        with self.assertRaises(ValueError):
            NoiseSpec(kind="instance")
        with self.assertRaises(ValueError):
            TransitionMatrix(np.array([[0.9, 0.3], [0.2, 0.7]]))

    def test_never_mutates_input_and_is_reproducible(self):
        ds = generate_gaussian_mixture(3, 3, 2000, 2.0, SeededRng(1))
        features, clean = ds.features.copy(), ds.clean_labels.copy()
        spec = NoiseSpec(kind="symmetric", rate=0.4, seed=12)
        first, _ = inject_noise(ds, spec)
        second, _ = inject_noise(ds, spec)
        np.testing.assert_array_equal(ds.features, features)
        np.testing.assert_array_equal(ds.clean_labels, clean)
        np.testing.assert_array_equal(ds.noisy_labels, clean)
        np.testing.assert_array_equal(first.noisy_labels, second.noisy_labels)
        self.assertIs(first.posterior_oracle, ds.posterior_oracle)

    def test_superclass_pair_map(self):
        self.assertEqual(superclass_pair_map([[0, 1, 2], [3, 4]]), {0: 1, 1: 2, 2: 0, 3: 4, 4: 3})
        with self.assertRaises(ValueError):
            superclass_pair_map([[0, 1], [1, 2]])


class TestCsv(unittest.TestCase):
    def test_round_trip(self):
        ds = generate_gaussian_mixture(3, 4, 40, 2.0, SeededRng(0))
        noisy, _ = inject_noise(ds, NoiseSpec(kind="symmetric", rate=0.3, seed=1))
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "train.csv"
            save_csv(noisy, path)
            header = path.read_text().splitlines()[0]
            self.assertEqual(header, "f0,f1,f2,f3,clean,noisy")
            loaded = load_csv(path, num_classes=3)
        np.testing.assert_array_equal(loaded.features, noisy.features)
        np.testing.assert_array_equal(loaded.clean_labels, noisy.clean_labels)
        np.testing.assert_array_equal(loaded.noisy_labels, noisy.noisy_labels)
        self.assertIsNone(loaded.posterior_oracle)

    def test_rejects_foreign_header(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "other.csv"
            path.write_text("a,b,c\n1,2,3\n")
            with self.assertRaises(ValueError):
                load_csv(path)


class TestNoisePresets(unittest.TestCase):
    """Tests for the YAML preset loader."""

    def test_bundled_presets_load(self):
        presets = noise_presets.reload_presets()
        for name in ("cifar10-asym", "sym-20", "sym-50", "pair-cyclic", "superclass-demo"):
            self.assertIn(name, presets)
        self.assertIs(noise_presets.get_preset("SYM-20"), presets["sym-20"])

    def test_cifar10_map(self):
        spec = noise_presets.get_preset("cifar10-asym").to_noise_spec(10, seed=4)
        self.assertEqual(spec.pair_map, {9: 1, 2: 0, 4: 7, 3: 5, 5: 3})
        T = noise_transition(spec, 10)
        self.assertAlmostEqual(T.entries[1, 9], 0.4)
        self.assertAlmostEqual(T.entries[5, 3], 0.4)
        self.assertAlmostEqual(T.entries[3, 5], 0.4)
        self.assertEqual(T.entries[0, 0], 1.0)
        with self.assertRaises(ValueError):
            noise_presets.get_preset("cifar10-asym").to_noise_spec(4)

    def test_groups_and_rate_override(self):
        preset = noise_presets.get_preset("superclass-demo")
        spec = preset.to_noise_spec(4, rate=0.1)
        self.assertEqual(spec.pair_map, {0: 1, 1: 0, 2: 3, 3: 2})
        self.assertEqual(spec.rate, 0.1)

    def test_malformed_file_is_skipped(self):
        with tempfile.TemporaryDirectory() as tmp:
            Path(tmp, "good.yaml").write_text("name: good\nkind: symmetric\nrate: 0.1\n")
            Path(tmp, "bad.yaml").write_text("name: bad\nkind: instance\n")
            with self.assertLogs("noise_presets", level="ERROR"):
                presets = noise_presets.load_noise_presets(Path(tmp))
        self.assertEqual(list(presets), ["good"])

    def test_missing_directory(self):
        with self.assertLogs("noise_presets", level="WARNING"):
            self.assertEqual(noise_presets.load_noise_presets(Path("/nonexistent/presets")), {})


if __name__ == "__main__":
    unittest.main()
