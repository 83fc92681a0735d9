#!/usr/bin/env python3
"""
Noisy data - synthetic Gaussian-mixture datasets with an exact clean posterior,
plus class-conditional label-noise injection.

Usage:
    rng = SeededRng(0)
    train = generate_gaussian_mixture(num_classes=4, dim=16, count=20000, separation=3.0, rng=rng)
    test = sample_clean_split(train.posterior_oracle, 4000, rng)
    noisy, T = inject_noise(train, NoiseSpec(kind="symmetric", rate=0.4, seed=1))
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterator, NamedTuple, Optional, Union

import numpy as np
from scipy.special import softmax

from core_math import SeededRng
from transition import TransitionMatrix

logger = logging.getLogger(__name__)

NOISE_KINDS = ("symmetric", "asymmetric", "matrix")


class Instance(NamedTuple):
    features: np.ndarray
    clean_label: int
    noisy_label: int


# =============================================================================
# Gaussian mixture with closed-form posterior
# =============================================================================

def _simplex_means(num_classes: int, dim: int, separation: float) -> np.ndarray:
    """Vertices of a regular simplex with pairwise distance `separation`, zero-padded to `dim`."""
    c = num_classes
    vertices = np.eye(c) - 1.0 / c
    basis, _ = np.linalg.qr(vertices[:, : c - 1])
    coords = vertices @ basis * (separation / np.sqrt(2.0))
    means = np.zeros((c, dim))
    means[:, : c - 1] = coords
    return means


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Isotropic unit-variance components with uniform class priors."""
    means: np.ndarray

    @property
    def num_classes(self) -> int:
        return int(self.means.shape[0])

    @property
    def dim(self) -> int:
        return int(self.means.shape[1])

    def posterior(self, features: np.ndarray) -> np.ndarray:
        """Exact p(Y|x) by Bayes rule; rows are ProbVectors."""
        x = np.atleast_2d(np.asarray(features, dtype=np.float64))
        sq = np.sum((x[:, None, :] - self.means[None, :, :]) ** 2, axis=2)
        return softmax(-0.5 * sq, axis=1)

    __call__ = posterior

    def sample(self, count: int, rng: SeededRng):
        """Draw (features, labels) from the clean generative process."""
        labels = rng.integers(0, self.num_classes, size=count)
        features = self.means[labels] + rng.normal(size=(count, self.dim))
        return features, labels.astype(np.int64)


# =============================================================================
# Dataset
# =============================================================================

@dataclass(frozen=True, eq=False)
class NoisyDataset:
    """Features with hidden clean labels and observed noisy labels."""
    features: np.ndarray
    clean_labels: np.ndarray
    noisy_labels: np.ndarray
    num_classes: int
    posterior_oracle: Optional[GaussianMixture] = field(default=None, compare=False)

    def __post_init__(self):
        n = self.features.shape[0]
        if self.features.ndim != 2:
            raise ValueError(f"features must be 2-d, got shape {self.features.shape}")
        if self.clean_labels.shape != (n,) or self.noisy_labels.shape != (n,):
            raise ValueError("label arrays must have one entry per instance")
        for name, labels in (("clean", self.clean_labels), ("noisy", self.noisy_labels)):
            if n and (labels.min() < 0 or labels.max() >= self.num_classes):
                raise ValueError(f"{name} labels out of range [0, {self.num_classes})")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features contain non-finite values")

    def __len__(self) -> int:
        return int(self.features.shape[0])

    def __iter__(self) -> Iterator[Instance]:
        for i in range(len(self)):
            yield self.instance(i)

    def instance(self, i: int) -> Instance:
        return Instance(self.features[i], int(self.clean_labels[i]), int(self.noisy_labels[i]))

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def is_noisy(self) -> np.ndarray:
        """Mask of instances whose noisy label differs from the clean one."""
        return self.noisy_labels != self.clean_labels

    def clean_posterior(self) -> np.ndarray:
        if self.posterior_oracle is None:
            raise ValueError("dataset has no posterior oracle")
        return self.posterior_oracle.posterior(self.features)


def generate_gaussian_mixture(
    num_classes: int,
    dim: int,
    count: int,
    separation: float,
    rng: SeededRng,
) -> NoisyDataset:
    """Sample a clean dataset (noisy == clean) from a simplex-placed Gaussian mixture."""
    if num_classes < 2:
        raise ValueError(f"num_classes must be >= 2, got {num_classes}")
    if count < num_classes:
        raise ValueError(f"count must be >= num_classes ({num_classes}), got {count}")
    if dim < num_classes - 1:
        raise ValueError(f"dim must be >= num_classes - 1 ({num_classes - 1}), got {dim}")
    if not np.isfinite(separation) or separation < 0:
        raise ValueError(f"separation must be a non-negative real, got {separation!r}")
    mixture = GaussianMixture(_simplex_means(num_classes, dim, separation))
    return sample_clean_split(mixture, count, rng)


def sample_clean_split(mixture: GaussianMixture, count: int, rng: SeededRng) -> NoisyDataset:
    """Fresh clean instances from the same generative process (the test split)."""
    features, labels = mixture.sample(count, rng)
    return NoisyDataset(
        features=features,
        clean_labels=labels,
        noisy_labels=labels.copy(),
        num_classes=mixture.num_classes,
        posterior_oracle=mixture,
    )


# =============================================================================
# Noise injection
# =============================================================================

@dataclass(frozen=True)
class NoiseSpec:
    """Class-conditional noise: symmetric(rate), asymmetric(rate, pair_map) or an explicit T."""
    kind: str = "symmetric"
    rate: float = 0.0
    pair_map: Optional[Dict[int, int]] = None
    matrix: Optional[TransitionMatrix] = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}; expected one of {NOISE_KINDS}")
        if not 0.0 <= self.rate < 1.0:
            raise ValueError(f"noise rate must be in [0, 1), got {self.rate!r}")
        if self.kind == "matrix" and self.matrix is None:
            raise ValueError("matrix noise needs a TransitionMatrix")


def cyclic_pair_map(num_classes: int) -> Dict[int, int]:
    """k -> k+1 (mod C)."""
    return {k: (k + 1) % num_classes for k in range(num_classes)}


def superclass_pair_map(groups) -> Dict[int, int]:
    """Each class flips to the next class inside its group (cyclically)."""
    mapping: Dict[int, int] = {}
    for group in groups:
        group = [int(k) for k in group]
        for i, k in enumerate(group):
            if k in mapping:
                raise ValueError(f"class {k} appears in more than one group")
            mapping[k] = group[(i + 1) % len(group)]
    return mapping


def noise_transition(spec: NoiseSpec, num_classes: int) -> TransitionMatrix:
    """The true T that inject_noise samples from."""
    if spec.kind == "symmetric":
        return TransitionMatrix.symmetric(num_classes, spec.rate)
    if spec.kind == "asymmetric":
        pair_map = spec.pair_map if spec.pair_map is not None else cyclic_pair_map(num_classes)
        return TransitionMatrix.pair_flip(num_classes, spec.rate, pair_map)
    if spec.matrix.num_classes != num_classes:
        raise ValueError(f"noise matrix is {spec.matrix.num_classes}-class, dataset has {num_classes}")
    return spec.matrix


def inject_noise(ds: NoisyDataset, spec: NoiseSpec):
    """Draw each noisy label from column clean_label of T.

    Returns (new dataset, T); features and clean labels are shared, never modified.
    """
    T = noise_transition(spec, ds.num_classes)
    rng = SeededRng(spec.seed)
    noisy = np.empty_like(ds.clean_labels)
    # one categorical draw per clean class keeps the stream independent of instance order within a class
    for k in range(ds.num_classes):
        idx = np.flatnonzero(ds.clean_labels == k)
        if idx.size:
            noisy[idx] = rng.choice(ds.num_classes, size=idx.size, p=T.entries[:, k])
    flipped = int(np.sum(noisy != ds.clean_labels))
    logger.info("Injected %s noise (rate=%.3f): %d/%d labels flipped", spec.kind, spec.rate, flipped, len(ds))
    return replace(ds, noisy_labels=noisy), T


def empirical_confusion(ds: NoisyDataset) -> np.ndarray:
    """Column-normalized counts: entry (j, k) estimates p(noisy=j | clean=k)."""
    c = ds.num_classes
    counts = np.zeros((c, c))
    np.add.at(counts, (ds.noisy_labels, ds.clean_labels), 1.0)
    totals = counts.sum(axis=0, keepdims=True)
    return np.divide(counts, totals, out=np.zeros_like(counts), where=totals > 0)


# =============================================================================
# CSV export / import
# =============================================================================

def save_csv(ds: NoisyDataset, path: Union[str, Path]) -> None:
    """Header f0,...,f{d-1},clean,noisy; features written with round-trip precision."""
    header = ",".join([f"f{j}" for j in range(ds.dim)] + ["clean", "noisy"])
    table = np.column_stack([ds.features, ds.clean_labels, ds.noisy_labels])
    fmt = ["%.17g"] * ds.dim + ["%d", "%d"]
    np.savetxt(path, table, delimiter=",", header=header, comments="", fmt=fmt)


def load_csv(path: Union[str, Path], num_classes: Optional[int] = None) -> NoisyDataset:
    """Read a dataset written by save_csv; the posterior oracle is not recoverable."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip().split(",")
    if header[-2:] != ["clean", "noisy"]:
        raise ValueError(f"{path}: expected trailing columns clean,noisy, got {header[-2:]}")
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    clean = table[:, -2].astype(np.int64)
    noisy = table[:, -1].astype(np.int64)
    if num_classes is None:
        num_classes = int(max(clean.max(), noisy.max())) + 1
    return NoisyDataset(
        features=table[:, :-2].copy(),
        clean_labels=clean,
        noisy_labels=noisy,
        num_classes=num_classes,
    )
