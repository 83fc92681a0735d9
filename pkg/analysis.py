#!/usr/bin/env python3
"""
Analysis - diagnostics of how the weights and the trained model treat noisy labels.

All reports are pure functions of their inputs and serialize with to_dict().
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from classifier import Classifier, per_sample_ce
from core_math import DirichletParams, SeededRng, dirichlet_samples, mahalanobis_distance
from risk import MARKER_RTOL, DwsConfig, ResampleCounts, SampleWeights, above_marker, compute_weights
from transition import TransitionMatrix

logger = logging.getLogger(__name__)

HISTOGRAM_BUCKETS = 50
CONFIDENCE_THRESHOLD = 0.5


def _validated_length(name: str, size: int, expected: int) -> None:
    if size != expected:
        raise ValueError(f"{name} has {size} entries, dataset has {expected}")


# =============================================================================
# Reports
# =============================================================================

@dataclass
class WeightHistogramReport:
    """Histogram of batch-scale weights split by hidden label correctness.

    noisy_below_fraction is None when the pool has no noisy-labelled sample.
    """
    edges: List[float]
    clean_counts: List[int]
    noisy_counts: List[int]
    threshold: float
    noisy_below_fraction: Optional[float]
    clean_below_fraction: Optional[float]

    def to_dict(self) -> dict:
        return asdict(self)

    def to_csv(self, path: Union[str, Path]) -> None:
        table = np.column_stack([self.edges[:-1], self.edges[1:], self.clean_counts, self.noisy_counts])
        np.savetxt(path, table, delimiter=",", header="lower,upper,clean,noisy", comments="",
                   fmt=["%.17g", "%.17g", "%d", "%d"])


@dataclass
class ResampleQualityReport:
    precision: float
    recall: float
    f1: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ConfidenceSplitReport:
    """Noisy-labelled samples split by model probability on their noisy label."""
    certain: int
    uncertain: int
    threshold: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RiskVarianceReport:
    empirical: float
    closed_form: float
    alpha: float
    redraws: int

    def to_dict(self) -> dict:
        return asdict(self)


def write_reports_json(reports: dict, path: Union[str, Path]) -> None:
    """Write {name: report} as one JSON document; reports may be dataclasses or dicts."""
    payload = {name: r.to_dict() if hasattr(r, "to_dict") else r for name, r in reports.items()}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# =============================================================================
# Operations
# =============================================================================

def weight_histogram(weights: SampleWeights, ds, batch_size: int,
                     buckets: int = HISTOGRAM_BUCKETS) -> WeightHistogramReport:
    """Bucket batch-scale weights normalized_i * |pool| / B against the 1/B marker.

    A weight counts as below the marker only when normalized_i * |pool| < 1 by more
    than MARKER_RTOL, so uniform weights sit on the marker for any |pool|.
    """
    n = len(ds)
    _validated_length("weights", len(weights), n)
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    scaled = weights.normalized * (n / batch_size)
    threshold = 1.0 / batch_size
    upper = float(scaled.max()) if scaled.size and scaled.max() > 0 else threshold
    edges = np.linspace(0.0, upper, buckets + 1)
    noisy = ds.is_noisy
    clean_counts, _ = np.histogram(scaled[~noisy], bins=edges)
    noisy_counts, _ = np.histogram(scaled[noisy], bins=edges)

    relative = weights.normalized * n

    def below(mask):
        if not mask.any():
            return None
        return float(np.mean(relative[mask] < 1.0 - MARKER_RTOL))

    return WeightHistogramReport(
        edges=edges.tolist(),
        clean_counts=clean_counts.astype(int).tolist(),
        noisy_counts=noisy_counts.astype(int).tolist(),
        threshold=threshold,
        noisy_below_fraction=below(noisy),
        clean_below_fraction=below(~noisy),
    )


def weight_marker_counts(weights: SampleWeights, ds) -> Tuple[int, int]:
    """(clean, noisy) counts of samples whose batch-scale weight exceeds the 1/B marker.

    normalized_i * |pool| / B > 1/B does not depend on B.
    """
    _validated_length("weights", len(weights), len(ds))
    above = above_marker(weights)
    noisy = ds.is_noisy
    return int(np.sum(above & ~noisy)), int(np.sum(above & noisy))


def resample_quality(counts: ResampleCounts, ds) -> ResampleQualityReport:
    """Precision is the correctly-labelled share of resampled mass; recall is the share
    of correctly-labelled instances drawn at least once."""
    n = len(ds)
    _validated_length("counts", counts.counts.size, n)
    mass = float(counts.counts.sum())
    if mass <= 0:
        raise ValueError("resampled multiset is empty")
    correct = ~ds.is_noisy
    precision = float(counts.counts[correct].sum()) / mass
    recall = float(np.mean(counts.counts[correct] >= 1)) if correct.any() else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return ResampleQualityReport(precision=precision, recall=recall, f1=f1)


def confidence_split(c: Classifier, ds, threshold: float = CONFIDENCE_THRESHOLD) -> ConfidenceSplitReport:
    """Count noisy-labelled instances with f(x)_noisy >= threshold as certain."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold!r}")
    idx = np.flatnonzero(ds.is_noisy)
    if idx.size == 0:
        return ConfidenceSplitReport(certain=0, uncertain=0, threshold=threshold)
    probs = c.predict_proba(ds.features[idx])
    confidence = probs[np.arange(idx.size), ds.noisy_labels[idx]]
    certain = int(np.sum(confidence >= threshold))
    return ConfidenceSplitReport(certain=certain, uncertain=int(idx.size) - certain, threshold=threshold)


def closed_form_variance(losses: np.ndarray, mu: np.ndarray, alpha: float, num_weight_samples: int = 1) -> float:
    """Var(sum_i w_i l_i) for w ~ Dir(alpha mu), averaged over M_w draws.

    Written as sum_i mu_i (l_i - lbar)^2 / (alpha + 1), which equals l^T Sigma l.
    """
    lbar = float(mu @ losses)
    return float(mu @ (losses - lbar) ** 2) / ((alpha + 1.0) * num_weight_samples)


def risk_variance_estimate(c: Classifier, T: TransitionMatrix, features, labels, cfg: DwsConfig,
                           redraws: int, rng: SeededRng) -> RiskVarianceReport:
    """Monte-Carlo variance of the DWS loss over weight redraws at fixed parameters,
    next to its closed form."""
    if redraws < 2:
        raise ValueError(f"redraws must be >= 2, got {redraws}")
    weights = compute_weights(c, T, features, labels)
    losses = per_sample_ce(c, features, labels)
    params = DirichletParams(cfg.alpha, weights.normalized)
    m = cfg.num_weight_samples
    draws = dirichlet_samples(params, redraws * m, rng).reshape(redraws, m, -1)
    values = (draws @ losses).mean(axis=1)
    return RiskVarianceReport(
        empirical=float(np.var(values, ddof=1)),
        closed_form=closed_form_variance(losses, weights.normalized, cfg.alpha, m),
        alpha=float(cfg.alpha),
        redraws=int(redraws),
    )


def weight_distance(mu: Sequence[float], mu_star: Sequence[float], alphas: Sequence[float], m: int = 1) -> dict:
    """Mahalanobis distance of mu* from the mean of m Dir(alpha mu) draws, per alpha."""
    mu = np.asarray(mu, dtype=np.float64)
    return {float(a): mahalanobis_distance(mu_star, DirichletParams(float(a), mu), m, space="closed") for a in alphas}
