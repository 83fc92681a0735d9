#!/usr/bin/env python3
"""
Risk strategies - how a noisy-label batch becomes a loss and a gradient.

    ce      plain cross entropy (mean)
    fl      Forward correction through T
    bw      Backward correction through T^-1
    rw      importance reweighting, raw weights f_y / (T f)_y (mean)
    dws     Dirichlet weight sampling, w ~ Dir(alpha * mu)
    rent    multinomial resampling of the RW weights
    snl     Gaussian label perturbation (sum)
    rw-snl  reweighting plus label perturbation (mean)
    rw-threshold
            keep samples whose weight beats 1/n, resample them uniformly

Per-sample weights are constants with respect to the classifier parameters in
every gradient. Loss >= 0 holds for ce, fl, rw, dws, rent and rw-threshold; bw, snl and rw-snl
carry signed coefficients and can go negative.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from classifier import (
    BatchGrad,
    Classifier,
    backward_loss_grad,
    ce_grad,
    forward_loss_grad,
    soft_target_ce_grad,
    weighted_ce_grad,
)
from core_math import DirichletParams, SeededRng, dirichlet_samples, multinomial_sample
from transition import TransitionMatrix

logger = logging.getLogger(__name__)

RISKS = ("ce", "fl", "bw", "rw", "dws", "rent", "snl", "rw-snl", "rw-threshold")
WEIGHTED_RISKS = ("rw", "dws", "rent", "rw-snl", "rw-threshold")
RENT_STRATEGIES = ("batch", "global", "global-class")
DENOMINATOR_CLAMP = 1e-12
# relative slack around the uniform weight 1/n
MARKER_RTOL = 1e-12


class MissingPosteriorOracleError(ValueError):
    """Raised when oracle weights are requested for a dataset without a posterior oracle."""


# =============================================================================
# Weights
# =============================================================================

@dataclass(frozen=True, eq=False)
class SampleWeights:
    """raw_i = f(x_i)_y / (T f(x_i))_y and its normalization over the pool."""
    raw: np.ndarray
    normalized: np.ndarray
    clamped: np.ndarray = field(default=None)
    fallback: bool = False

    def __len__(self) -> int:
        return int(self.raw.size)

    @property
    def num_clamped(self) -> int:
        return 0 if self.clamped is None else int(np.sum(self.clamped))


@dataclass(frozen=True, eq=False)
class ResampleCounts:
    counts: np.ndarray
    budget: int

    def __post_init__(self):
        if int(self.counts.sum()) != self.budget:
            raise ValueError(f"counts sum to {int(self.counts.sum())}, budget is {self.budget}")


@dataclass(frozen=True, eq=False)
class OracleWeights:
    """mu* built from exact clean posteriors; raw is the unnormalized ratio."""
    mu_star: np.ndarray
    raw: np.ndarray


@dataclass(frozen=True)
class DwsConfig:
    alpha: float = 1.0
    num_weight_samples: int = 1

    def __post_init__(self):
        if not np.isfinite(self.alpha) or self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha!r}")
        if int(self.num_weight_samples) != self.num_weight_samples or self.num_weight_samples < 1:
            raise ValueError(f"num_weight_samples must be a positive integer, got {self.num_weight_samples!r}")


@dataclass(frozen=True)
class RentConfig:
    """Resampling budget (absolute, or a ratio of the pool) and pool strategy."""
    budget: Optional[int] = None
    budget_ratio: float = 1.0
    strategy: str = "batch"

    def __post_init__(self):
        if self.strategy not in RENT_STRATEGIES:
            raise ValueError(f"unknown RENT strategy {self.strategy!r}; expected one of {RENT_STRATEGIES}")
        if self.budget is not None and (int(self.budget) != self.budget or self.budget < 1):
            raise ValueError(f"budget must be a positive integer, got {self.budget!r}")
        if not self.budget_ratio > 0:
            raise ValueError(f"budget_ratio must be positive, got {self.budget_ratio!r}")

    def resolve_budget(self, pool_size: int) -> int:
        if self.budget is not None:
            return int(self.budget)
        return max(1, int(round(self.budget_ratio * pool_size)))


def importance_ratios(probs: np.ndarray, T: TransitionMatrix, labels) -> Tuple[np.ndarray, np.ndarray]:
    """(p_y / (T p)_y, clamp mask) for rows of clean-posterior estimates."""
    labels = np.asarray(labels, dtype=np.int64)
    rows = np.arange(labels.size)
    noisy = probs @ T.entries.T
    denom = noisy[rows, labels]
    clamped = denom < DENOMINATOR_CLAMP
    return probs[rows, labels] / np.maximum(denom, DENOMINATOR_CLAMP), clamped


def normalize_weights(raw: np.ndarray, clamped: Optional[np.ndarray] = None) -> SampleWeights:
    total = float(raw.sum())
    if total > 0:
        return SampleWeights(raw=raw, normalized=raw / total, clamped=clamped)
    logger.warning("All %d raw weights are zero; falling back to uniform weights", raw.size)
    return SampleWeights(raw=raw, normalized=np.full(raw.size, 1.0 / raw.size), clamped=clamped, fallback=True)


def compute_weights(c: Classifier, T: TransitionMatrix, features, labels) -> SampleWeights:
    """Importance weights of a pool of (x, noisy label) pairs under the current classifier."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ValueError("cannot compute weights for an empty pool")
    raw, clamped = importance_ratios(c.predict_proba(features), T, labels)
    if clamped.any():
        logger.debug("clamped %d weight denominators at %g", int(clamped.sum()), DENOMINATOR_CLAMP)
    return normalize_weights(raw, clamped)


def oracle_weights(ds, T: TransitionMatrix) -> OracleWeights:
    """mu* from the exact clean posterior, with p(noisy | x) = T p(clean | x)."""
    if ds.posterior_oracle is None:
        raise MissingPosteriorOracleError("dataset has no posterior oracle; oracle weights need exact p(Y|x)")
    raw, _ = importance_ratios(ds.clean_posterior(), T, ds.noisy_labels)
    return OracleWeights(mu_star=normalize_weights(raw).normalized, raw=raw)


def _check_batch(features, labels) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ValueError("batch is empty")
    if np.asarray(features).shape[0] != labels.size:
        raise ValueError("features and labels have different lengths")
    return labels


# =============================================================================
# Strategy losses
# =============================================================================

def rw_loss_grad(c: Classifier, T: TransitionMatrix, features, labels,
                 weights: Optional[SampleWeights] = None) -> BatchGrad:
    """(1/n) sum raw_i * CE_i with raw weights held constant."""
    labels = _check_batch(features, labels)
    if weights is None:
        weights = compute_weights(c, T, features, labels)
    return weighted_ce_grad(c, features, labels, weights.raw / labels.size)


def dws_weights(weights: SampleWeights, cfg: DwsConfig, rng: SeededRng) -> np.ndarray:
    """Average of M_w draws from Dir(alpha * mu)."""
    draws = dirichlet_samples(DirichletParams(cfg.alpha, weights.normalized), cfg.num_weight_samples, rng)
    return draws.mean(axis=0)


def dws_loss_grad(c: Classifier, T: TransitionMatrix, features, labels, cfg: DwsConfig, rng: SeededRng,
                  weights: Optional[SampleWeights] = None) -> BatchGrad:
    """(1/M_w) sum_j sum_i w_i^j CE_i; mu is renormalized over this batch."""
    labels = _check_batch(features, labels)
    if weights is None:
        weights = compute_weights(c, T, features, labels)
    return weighted_ce_grad(c, features, labels, dws_weights(weights, cfg, rng))


def _class_budgets(class_sizes: np.ndarray, budget: int) -> np.ndarray:
    """Split budget proportionally to class sizes (largest remainder)."""
    share = budget * class_sizes / class_sizes.sum()
    base = np.floor(share).astype(np.int64)
    order = np.argsort(-(share - base), kind="stable")
    base[order[: budget - int(base.sum())]] += 1
    return base


def rent_resample(weights: SampleWeights, cfg: RentConfig, rng: SeededRng, labels=None) -> ResampleCounts:
    """Counts n ~ Multi(M; normalized weights) over the pool.

    For "global-class" the pool is split by noisy label and each class draws
    its share of M from its own renormalized weights.
    """
    pool = len(weights)
    budget = cfg.resolve_budget(pool)
    if cfg.strategy != "global-class":
        return ResampleCounts(counts=multinomial_sample(budget, weights.normalized, rng), budget=budget)

    if labels is None:
        raise ValueError("global-class resampling needs the noisy labels of the pool")
    labels = np.asarray(labels, dtype=np.int64)
    classes, sizes = np.unique(labels, return_counts=True)
    counts = np.zeros(pool, dtype=np.int64)
    for k, class_budget in zip(classes, _class_budgets(sizes.astype(np.float64), budget)):
        if class_budget == 0:
            continue
        idx = np.flatnonzero(labels == k)
        w = weights.normalized[idx]
        if w.sum() <= 0:
            logger.warning("Class %d has zero total weight; resampling it uniformly", int(k))
            w = np.ones(idx.size)
        counts[idx] = multinomial_sample(int(class_budget), w, rng)
    return ResampleCounts(counts=counts, budget=budget)


def rent_loss_grad(c: Classifier, T: TransitionMatrix, features, labels, cfg: RentConfig, rng: SeededRng,
                   weights: Optional[SampleWeights] = None) -> BatchGrad:
    """(1/M) sum_i n_i CE_i, counts drawn over this batch and held constant."""
    labels = _check_batch(features, labels)
    if weights is None:
        weights = compute_weights(c, T, features, labels)
    drawn = rent_resample(weights, cfg, rng, labels=labels)
    return weighted_ce_grad(c, features, labels, drawn.counts / drawn.budget)


def above_marker(weights: SampleWeights) -> np.ndarray:
    """Mask of normalized_i > 1/n, i.e. weights beating the uniform weight of the pool."""
    return weights.normalized * len(weights) > 1.0 + MARKER_RTOL


def threshold_resample(weights: SampleWeights, cfg: RentConfig, rng: SeededRng) -> ResampleCounts:
    """Counts ~ Multi(M; uniform over the samples above the 1/n marker).

    When no weight clears the marker the whole pool is drawn from.
    """
    keep = above_marker(weights)
    if not keep.any():
        logger.debug("No weight above 1/%d; resampling the whole pool uniformly", len(weights))
        keep = np.ones(len(weights), dtype=bool)
    budget = cfg.resolve_budget(len(weights))
    return ResampleCounts(counts=multinomial_sample(budget, keep.astype(np.float64), rng), budget=budget)


def threshold_loss_grad(c: Classifier, T: TransitionMatrix, features, labels, cfg: RentConfig, rng: SeededRng,
                        weights: Optional[SampleWeights] = None) -> BatchGrad:
    """(1/M) sum_i n_i CE_i with n drawn by threshold_resample over this batch."""
    labels = _check_batch(features, labels)
    if weights is None:
        weights = compute_weights(c, T, features, labels)
    drawn = threshold_resample(weights, cfg, rng)
    return weighted_ce_grad(c, features, labels, drawn.counts / drawn.budget)


def _label_noise(rng: SeededRng, shape, noise: Optional[np.ndarray]) -> np.ndarray:
    if noise is None:
        return rng.normal(size=shape)
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != shape:
        raise ValueError(f"noise has shape {noise.shape}, expected {shape}")
    return noise


def snl_loss_grad(c: Classifier, features, labels, sigma: float, rng: SeededRng,
                  noise: Optional[np.ndarray] = None) -> BatchGrad:
    """sum_i CE_i + sigma sum_ik z_ik (-log f(x_i)_k), z ~ N(0, 1) fresh per call."""
    if not sigma >= 0:
        raise ValueError(f"sigma must be >= 0, got {sigma!r}")
    labels = _check_batch(features, labels)
    z = _label_noise(rng, (labels.size, c.num_classes), noise)
    coeffs = sigma * z
    coeffs[np.arange(labels.size), labels] += 1.0
    return soft_target_ce_grad(c, features, coeffs)


def rw_snl_loss_grad(c: Classifier, T: TransitionMatrix, features, labels, sigma: float, rng: SeededRng,
                     weights: Optional[SampleWeights] = None, noise: Optional[np.ndarray] = None) -> BatchGrad:
    """(1/n) sum_i raw_i (CE_i + sigma sum_k z_ik (-log f(x_i)_k))."""
    if not sigma >= 0:
        raise ValueError(f"sigma must be >= 0, got {sigma!r}")
    labels = _check_batch(features, labels)
    if weights is None:
        weights = compute_weights(c, T, features, labels)
    z = _label_noise(rng, (labels.size, c.num_classes), noise)
    coeffs = sigma * z
    coeffs[np.arange(labels.size), labels] += 1.0
    return soft_target_ce_grad(c, features, coeffs * (weights.raw / labels.size)[:, None])


# =============================================================================
# Epoch-level resampling (global strategies)
# =============================================================================

def resample_epoch(c: Classifier, T: TransitionMatrix, ds, cfg: RentConfig, rng: SeededRng) -> np.ndarray:
    """Shuffled index stream of one resampled epoch over the whole training set.

    Index i appears n_i times; the training loop consumes it with plain CE.
    """
    weights = compute_weights(c, T, ds.features, ds.noisy_labels)
    drawn = rent_resample(weights, cfg, rng, labels=ds.noisy_labels)
    stream = np.repeat(np.arange(len(ds)), drawn.counts)
    return stream[rng.permutation(stream.size)]


# =============================================================================
# Strategy objects
# =============================================================================

@dataclass
class RiskStrategy:
    """A named strategy with its hyperparameters and (where needed) T."""
    name: str
    T: Optional[TransitionMatrix] = None
    dws: DwsConfig = field(default_factory=DwsConfig)
    rent: RentConfig = field(default_factory=RentConfig)
    sigma: float = 0.0

    def __post_init__(self):
        if self.name not in RISKS:
            raise ValueError(f"unknown risk {self.name!r}; expected one of {RISKS}")
        if self.needs_transition and self.T is None:
            raise ValueError(f"risk {self.name!r} needs a transition matrix")

    @property
    def needs_transition(self) -> bool:
        return self.name not in ("ce", "snl")

    @property
    def uses_weights(self) -> bool:
        return self.name in WEIGHTED_RISKS

    @property
    def resamples_epoch(self) -> bool:
        """True when resampling happens once per epoch instead of per batch."""
        return self.name == "rent" and self.rent.strategy != "batch"

    def loss_grad(self, c: Classifier, features, labels, rng: SeededRng) -> BatchGrad:
        name = self.name
        if name == "ce" or self.resamples_epoch:
            return ce_grad(c, features, labels)
        if name == "fl":
            return forward_loss_grad(c, self.T, features, labels)
        if name == "bw":
            return backward_loss_grad(c, self.T, features, labels)
        if name == "rw":
            return rw_loss_grad(c, self.T, features, labels)
        if name == "dws":
            return dws_loss_grad(c, self.T, features, labels, self.dws, rng)
        if name == "rent":
            return rent_loss_grad(c, self.T, features, labels, self.rent, rng)
        if name == "rw-threshold":
            return threshold_loss_grad(c, self.T, features, labels, self.rent, rng)
        if name == "snl":
            return snl_loss_grad(c, features, labels, self.sigma, rng)
        return rw_snl_loss_grad(c, self.T, features, labels, self.sigma, rng)

    def describe(self) -> str:
        if self.name == "dws":
            return f"dws(alpha={self.dws.alpha:g}, M_w={self.dws.num_weight_samples})"
        budget = self.rent.budget if self.rent.budget is not None else f"{self.rent.budget_ratio:g}x"
        if self.name == "rent":
            return f"rent({self.rent.strategy}, budget={budget})"
        if self.name == "rw-threshold":
            return f"rw-threshold(budget={budget})"
        if self.name in ("snl", "rw-snl"):
            return f"{self.name}(sigma={self.sigma:g})"
        return self.name


def make_strategy(
    name: str,
    T: Optional[TransitionMatrix] = None,
    alpha: float = 1.0,
    num_weight_samples: int = 1,
    budget: Optional[int] = None,
    budget_ratio: float = 1.0,
    strategy: str = "batch",
    sigma: float = 0.0,
) -> RiskStrategy:
    return RiskStrategy(
        name=name,
        T=T,
        dws=DwsConfig(alpha=alpha, num_weight_samples=num_weight_samples),
        rent=RentConfig(budget=budget, budget_ratio=budget_ratio, strategy=strategy),
        sigma=sigma,
    )


# =============================================================================
# Consistency on an enumerable domain
# =============================================================================

@dataclass(frozen=True, eq=False)
class ToyDomain:
    """Finite domain: point masses px, clean posteriors p(Y|x) and a fixed classifier output f(x)."""
    px: np.ndarray
    posterior: np.ndarray
    outputs: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.px, dtype=np.float64)
        post = np.atleast_2d(np.asarray(self.posterior, dtype=np.float64))
        out = np.atleast_2d(np.asarray(self.outputs, dtype=np.float64))
        if abs(px.sum() - 1.0) > 1e-9 or np.any(px < 0):
            raise ValueError("px must be a probability vector")
        if post.shape != (px.size, post.shape[1]) or out.shape != post.shape:
            raise ValueError("posterior and outputs must be (points, classes) arrays matching px")
        for name, table in (("posterior", post), ("outputs", out)):
            if np.any(table < 0) or np.any(np.abs(table.sum(axis=1) - 1.0) > 1e-9):
                raise ValueError(f"{name} rows must be probability vectors")
        object.__setattr__(self, "px", px)
        object.__setattr__(self, "posterior", post)
        object.__setattr__(self, "outputs", out)

    @property
    def num_classes(self) -> int:
        return int(self.posterior.shape[1])

    def losses(self, points, labels) -> np.ndarray:
        p = self.outputs[points, labels]
        return -np.log(np.maximum(p, 1e-12))

    def clean_risk(self) -> float:
        """R_l = E_{x, y} l(f(x), y) by full enumeration."""
        losses = -np.log(np.maximum(self.outputs, 1e-12))
        return float(np.sum(self.px[:, None] * self.posterior * losses))

    def sample_noisy(self, count: int, T: TransitionMatrix, rng: SeededRng):
        """(point indices, noisy labels) drawn x ~ px, y ~ p(Y|x), noisy ~ T[:, y]."""
        points = rng.choice(self.px.size, size=count, p=self.px)
        u = rng.uniform(size=count)
        clean = (u[:, None] > np.cumsum(self.posterior[points], axis=1)).sum(axis=1)
        clean = np.minimum(clean, self.num_classes - 1)
        v = rng.uniform(size=count)
        noisy = (v[:, None] > np.cumsum(T.entries[:, clean].T, axis=1)).sum(axis=1)
        return points, np.minimum(noisy, self.num_classes - 1)

    def oracle_raw_weights(self, points, noisy, T: TransitionMatrix) -> np.ndarray:
        raw, _ = importance_ratios(self.posterior[points], T, noisy)
        return raw


@dataclass
class ConsistencyReport:
    exact_risk: float
    mean_empirical_risk: float
    gap: float
    relative_gap: float
    rmse: float
    sample_size: int
    trials: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def rent_consistency_check(domain: ToyDomain, T: TransitionMatrix, sample_size: int, trials: int,
                           rng: SeededRng, budget: Optional[int] = None) -> ConsistencyReport:
    """Compare RENT empirical risks under oracle weights with the exact clean risk."""
    if sample_size < 1 or trials < 1:
        raise ValueError("sample_size and trials must be >= 1")
    cfg = RentConfig(budget=budget)
    exact = domain.clean_risk()
    risks = np.empty(trials)
    for t in range(trials):
        points, noisy = domain.sample_noisy(sample_size, T, rng)
        weights = normalize_weights(domain.oracle_raw_weights(points, noisy, T))
        drawn = rent_resample(weights, cfg, rng)
        risks[t] = float(drawn.counts @ domain.losses(points, noisy)) / drawn.budget
    mean = float(risks.mean())
    gap = abs(mean - exact)
    return ConsistencyReport(
        exact_risk=exact,
        mean_empirical_risk=mean,
        gap=gap,
        relative_gap=gap / exact if exact > 0 else gap,
        rmse=float(np.sqrt(np.mean((risks - exact) ** 2))),
        sample_size=int(sample_size),
        trials=int(trials),
    )


def consistency_rate(domain: ToyDomain, T: TransitionMatrix, sizes: Sequence[int], trials: int,
                     rng: SeededRng) -> Tuple[float, List[ConsistencyReport]]:
    """Log-log slope of the per-trial RMS gap against sample size (about -0.5)."""
    if len(sizes) < 2:
        raise ValueError("need at least two sample sizes")
    reports = [rent_consistency_check(domain, T, n, trials, rng) for n in sizes]
    slope = np.polyfit(np.log([r.sample_size for r in reports]), np.log([r.rmse for r in reports]), 1)[0]
    logger.info("Consistency rate over N=%s: slope %.3f", list(sizes), slope)
    return float(slope), reports
