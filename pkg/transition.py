#!/usr/bin/env python3
"""
Transition matrix - T[j, k] = p(noisy=j | clean=k), column-stochastic.

Covers application to posteriors, inversion (Backward correction), anchor-point
estimation from a noisy-label classifier, and controlled corruption.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Dict, Union

import numpy as np

if TYPE_CHECKING:
    from noisy_data import NoisyDataset

logger = logging.getLogger(__name__)

COLUMN_TOL = 1e-9
ENTRY_TOL = 1e-12
MAX_CONDITION = 1e12
DEFAULT_ANCHOR_FRACTION = 0.03


class SingularTransitionError(ArithmeticError):
    """Raised when T is too ill-conditioned to invert."""

    def __init__(self, condition: float):
        super().__init__(f"transition matrix is near-singular (condition number {condition:.3g} >= {MAX_CONDITION:g})")
        self.condition = condition


class AnchorEstimationError(ValueError):
    """Raised when a class has no anchor candidates."""

    def __init__(self, class_index: int, reason: str):
        super().__init__(f"class {class_index}: {reason}")
        self.class_index = class_index


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """Column-stochastic C x C matrix; row = noisy label, column = clean label."""
    entries: np.ndarray

    def __post_init__(self):
        t = np.array(self.entries, dtype=np.float64)
        if t.ndim != 2 or t.shape[0] != t.shape[1]:
            raise ValueError(f"transition matrix must be square, got shape {t.shape}")
        if not np.all(np.isfinite(t)):
            raise ValueError("transition matrix has non-finite entries")
        if t.min() < -ENTRY_TOL or t.max() > 1.0 + ENTRY_TOL:
            raise ValueError(f"transition entries must lie in [0, 1] (found [{t.min():.3g}, {t.max():.3g}])")
        sums = t.sum(axis=0)
        bad = np.flatnonzero(np.abs(sums - 1.0) > COLUMN_TOL)
        if bad.size:
            raise ValueError(f"column {int(bad[0])} sums to {sums[bad[0]]!r}; T must be column-stochastic")
        t.setflags(write=False)
        object.__setattr__(self, "entries", t)

    @property
    def num_classes(self) -> int:
        return int(self.entries.shape[0])

    @classmethod
    def identity(cls, num_classes: int) -> "TransitionMatrix":
        return cls(np.eye(num_classes))

    @classmethod
    def symmetric(cls, num_classes: int, rate: float) -> "TransitionMatrix":
        """T_kk = 1 - rate, T_jk = rate / (C - 1)."""
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"noise rate must be in [0, 1), got {rate!r}")
        off = rate / (num_classes - 1)
        t = np.full((num_classes, num_classes), off)
        np.fill_diagonal(t, 1.0 - rate)
        return cls(t)

    @classmethod
    def pair_flip(cls, num_classes: int, rate: float, pair_map: Dict[int, int]) -> "TransitionMatrix":
        """T_kk = 1 - rate and T_{pair(k), k} = rate; classes mapped to themselves stay clean."""
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"noise rate must be in [0, 1), got {rate!r}")
        t = np.eye(num_classes)
        for k, j in pair_map.items():
            k, j = int(k), int(j)
            if not (0 <= k < num_classes and 0 <= j < num_classes):
                raise ValueError(f"pair map entry {k} -> {j} out of range for {num_classes} classes")
            if j != k:
                t[k, k] = 1.0 - rate
                t[j, k] = rate
        return cls(t)

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "TransitionMatrix":
        return cls(np.loadtxt(path, delimiter=",", ndmin=2))

    def to_csv(self, path: Union[str, Path]) -> None:
        np.savetxt(path, self.entries, delimiter=",", fmt="%.17g")

    def __repr__(self) -> str:
        return f"TransitionMatrix(C={self.num_classes}, diag={np.round(np.diag(self.entries), 4).tolist()})"


def apply(T: TransitionMatrix, p: np.ndarray) -> np.ndarray:
    """p(noisy|x) = T p(clean|x); p may be one vector or a batch of row vectors."""
    p = np.asarray(p, dtype=np.float64)
    if p.shape[-1] != T.num_classes:
        raise ValueError(f"posterior has {p.shape[-1]} classes, T has {T.num_classes}")
    return p @ T.entries.T


def invert(T: TransitionMatrix) -> np.ndarray:
    """T^-1; entries may be negative."""
    condition = float(np.linalg.cond(T.entries))
    if not np.isfinite(condition) or condition >= MAX_CONDITION:
        raise SingularTransitionError(condition)
    return np.linalg.inv(T.entries)


def corrupt(T: TransitionMatrix, eps: float) -> TransitionMatrix:
    """Subtract eps from the diagonal and add eps/(C-1) to every off-diagonal entry."""
    c = T.num_classes
    t = T.entries + eps / (c - 1)
    t[np.diag_indices(c)] = np.diag(T.entries) - eps
    if t.min() < -ENTRY_TOL or t.max() > 1.0 + ENTRY_TOL:
        raise ValueError(f"corrupting with eps={eps!r} leaves entries outside [0, 1]")
    return TransitionMatrix(np.clip(t, 0.0, 1.0))


def estimation_error(estimate: TransitionMatrix, truth: TransitionMatrix) -> float:
    """Frobenius (l2) norm of the estimation gap."""
    return float(np.linalg.norm(estimate.entries - truth.entries))


def estimate_anchor(
    classifier,
    ds: "NoisyDataset",
    fraction: float = DEFAULT_ANCHOR_FRACTION,
    rank_by: str = "class",
) -> TransitionMatrix:
    """Estimate T from a classifier of p(noisy|x).

    Column k is the mean predicted vector over the top `fraction` of instances
    ranked by predicted probability of class k, renormalized to sum to 1.
    With rank_by="argmax" only instances predicted as k are candidates.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction!r}")
    if rank_by not in ("class", "argmax"):
        raise ValueError(f"rank_by must be 'class' or 'argmax', got {rank_by!r}")
    probs = np.asarray(classifier.predict_proba(ds.features), dtype=np.float64)
    c = ds.num_classes
    predicted = probs.argmax(axis=1)
    columns = np.empty((c, c))
    for k in range(c):
        candidates = np.arange(len(probs)) if rank_by == "class" else np.flatnonzero(predicted == k)
        if candidates.size == 0:
            raise AnchorEstimationError(k, "no instance is predicted as this class")
        take = max(1, int(np.ceil(fraction * candidates.size)))
        order = np.argsort(-probs[candidates, k], kind="stable")[:take]
        column = probs[candidates[order]].mean(axis=0)
        columns[:, k] = np.clip(column, 0.0, None) / np.clip(column, 0.0, None).sum()
    logger.debug("Anchor estimate (fraction=%.3f, rank_by=%s): diag=%s", fraction, rank_by, np.diag(columns))
    return TransitionMatrix(columns)
