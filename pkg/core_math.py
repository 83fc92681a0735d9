#!/usr/bin/env python3
"""
Core math - seeded sampling and small dense algebra for per-sample weights.

All randomness goes through SeededRng; there is no module-level generator.

Usage:
    rng = SeededRng(7)
    params = DirichletParams(alpha=1.0, mu=np.array([0.7, 0.2, 0.1]))
    w = dirichlet_sample(params, rng)
    mean, cov = dirichlet_moments(params)
    counts = multinomial_sample(10, w, rng)
"""

from __future__ import annotations

import logging
import zlib
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import softmax

logger = logging.getLogger(__name__)

ProbVector = np.ndarray
SquareMatrix = np.ndarray

SIMPLEX_TOL = 1e-9
MIN_GAMMA_SHAPE = 1e-8
PINV_RTOL = 1e-12


class RankDeficiencyError(ArithmeticError):
    """Raised when a covariance loses rank beyond the pseudo-inverse tolerance."""


# =============================================================================
# Random streams
# =============================================================================

class SeededRng:
    """Splittable seeded random stream (numpy PCG64 under a SeedSequence).

    Handles are not meant to be shared across threads; give each worker its own
    via spawn() or child().
    """

    def __init__(self, seed: Union[int, np.random.SeedSequence]):
        if isinstance(seed, np.random.SeedSequence):
            self._seq = seed
        else:
            self._seq = np.random.SeedSequence(int(seed))
        self._gen = np.random.Generator(np.random.PCG64(self._seq))

    def spawn(self, n: int) -> List["SeededRng"]:
        """Independent child streams, in order."""
        return [SeededRng(s) for s in self._seq.spawn(n)]

    def child(self, name: str) -> "SeededRng":
        """Named child stream; the same name always yields the same stream."""
        key = tuple(self._seq.spawn_key) + (zlib.crc32(name.encode("utf-8")),)
        return SeededRng(np.random.SeedSequence(self._seq.entropy, spawn_key=key))

    def uniform(self, size=None) -> np.ndarray:
        return self._gen.random(size)

    def normal(self, size=None) -> np.ndarray:
        return self._gen.standard_normal(size)

    def standard_gamma(self, shape, size=None) -> np.ndarray:
        return self._gen.standard_gamma(shape, size)

    def integers(self, low: int, high: Optional[int] = None, size=None) -> np.ndarray:
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, n: int, size=None, p: Optional[np.ndarray] = None) -> np.ndarray:
        return self._gen.choice(n, size=size, p=p)

    def multinomial(self, m: int, p: np.ndarray) -> np.ndarray:
        return self._gen.multinomial(m, p)

    def __repr__(self) -> str:
        return f"SeededRng(entropy={self._seq.entropy}, spawn_key={self._seq.spawn_key})"


# =============================================================================
# Probability vectors
# =============================================================================

def check_prob_vector(values: Sequence[float], name: str = "p") -> ProbVector:
    """Return values as a float64 vector, raising ValueError if it is off the simplex."""
    p = np.asarray(values, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-d vector, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValueError(f"{name} has non-finite entries")
    if np.any(p < 0):
        raise ValueError(f"{name} has negative entries (min {p.min():.3g})")
    total = p.sum()
    if abs(total - 1.0) > SIMPLEX_TOL:
        raise ValueError(f"{name} sums to {total!r}, expected 1 within {SIMPLEX_TOL}")
    return p


@dataclass(frozen=True, eq=False)
class DirichletParams:
    """Dir(alpha * mu): concentration alpha and mean mu."""
    alpha: float
    mu: ProbVector

    def __post_init__(self):
        if not np.isfinite(self.alpha) or self.alpha <= 0:
            raise ValueError(f"alpha must be a positive finite real, got {self.alpha!r}")
        object.__setattr__(self, "mu", check_prob_vector(self.mu, "mu"))

    @property
    def dim(self) -> int:
        return int(self.mu.size)

    @property
    def shapes(self) -> np.ndarray:
        """Gamma shapes alpha*mu_i, clamped away from zero."""
        return np.maximum(self.alpha * self.mu, MIN_GAMMA_SHAPE)


# =============================================================================
# Sampling
# =============================================================================

def dirichlet_samples(params: DirichletParams, count: int, rng: SeededRng) -> np.ndarray:
    """Draw `count` vectors from Dir(alpha*mu); returns an array of shape (count, N).

    Gamma(a_i, 1) draws are normalized in log space. Shapes below 1 use the
    Gamma(a+1) * U^(1/a) boost so tiny concentrations still land on a vertex
    instead of underflowing to an all-zero draw.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    n = params.dim
    if n == 1:
        return np.ones((count, 1))
    a = params.shapes
    small = a < 1.0
    g = rng.standard_gamma(np.where(small, a + 1.0, a), size=(count, n))
    u = rng.uniform(size=(count, n))
    with np.errstate(divide="ignore"):
        log_g = np.log(g)
        log_g = np.where(small, log_g + np.log(u) / a, log_g)
    # an all -inf row only happens with probability ~2**-53 per coordinate
    return softmax(log_g, axis=1)


def dirichlet_sample(params: DirichletParams, rng: SeededRng) -> ProbVector:
    """One draw w ~ Dir(alpha*mu) on the N-simplex."""
    return dirichlet_samples(params, 1, rng)[0]


def dirichlet_moments(params: DirichletParams) -> Tuple[ProbVector, SquareMatrix]:
    """Mean and covariance of Dir(alpha*mu).

    cov_ii = mu_i(1-mu_i)/(alpha+1), cov_ik = -mu_i mu_k/(alpha+1).
    """
    mu = params.mu
    cov = (np.diag(mu) - np.outer(mu, mu)) / (params.alpha + 1.0)
    return mu.copy(), cov


def multinomial_sample(m: int, p: Sequence[float], rng: SeededRng) -> np.ndarray:
    """Counts n ~ Multi(m; p); non-negative integers summing to m."""
    if int(m) != m or m < 1:
        raise ValueError(f"m must be a positive integer, got {m!r}")
    p = np.asarray(p, dtype=np.float64)
    if np.any(np.isnan(p)):
        raise ValueError("p contains NaN")
    if np.any(p < 0) or p.sum() <= 0:
        raise ValueError("p must be non-negative with positive mass")
    return rng.multinomial(int(m), p / p.sum()).astype(np.int64)


# =============================================================================
# Mahalanobis distance of the weight mean
# =============================================================================

def _tangent_basis(n: int) -> np.ndarray:
    """Orthonormal basis (n, n-1) of the sum-zero subspace."""
    centered = np.eye(n) - 1.0 / n
    q, _ = np.linalg.qr(centered[:, : n - 1])
    return q


def _alpha_free_quadratic(delta: np.ndarray, mu: np.ndarray, space: str) -> float:
    """delta^T S^+ delta with S = diag(mu) - mu mu^T, i.e. Sigma = S/(alpha+1)."""
    if space == "closed":
        if np.any(mu <= 0):
            raise RankDeficiencyError("closed form needs strictly positive mu")
        return float(np.sum(delta * delta / mu))

    s = np.diag(mu) - np.outer(mu, mu)
    if space == "full":
        return float(delta @ np.linalg.pinv(s, rcond=PINV_RTOL, hermitian=True) @ delta)
    if space != "tangent":
        raise ValueError(f"unknown space {space!r}; expected tangent, full or closed")

    basis = _tangent_basis(mu.size)
    s_t = basis.T @ s @ basis
    eig, vec = np.linalg.eigh(s_t)
    cutoff = PINV_RTOL * max(float(eig.max()), 0.0)
    if eig.min() <= cutoff:
        raise RankDeficiencyError(
            f"tangent covariance has {int(np.sum(eig <= cutoff))} eigenvalue(s) below {cutoff:.3g}"
        )
    coords = vec.T @ (basis.T @ delta)
    return float(np.sum(coords * coords / eig))


def mahalanobis_distance(
    target: Sequence[float],
    params: DirichletParams,
    m: int,
    space: str = "tangent",
) -> float:
    """Distance between target weights mu* and the mean of m Dirichlet draws.

    sqrt(M (alpha+1) (mu*-mu)^T S^-1 (mu*-mu)), with S^-1 taken on the simplex
    tangent space ("tangent"), as a full-space pseudo-inverse ("full"), or via
    the exact closed form sum(d_i^2 / mu_i) ("closed"). All three agree for
    displacements that sum to zero.
    """
    if int(m) != m or m < 1:
        raise ValueError(f"m must be a positive integer, got {m!r}")
    target = check_prob_vector(target, "target")
    if target.size != params.dim:
        raise ValueError(f"target has dimension {target.size}, params have {params.dim}")
    delta = target - params.mu
    if params.dim == 1 or not np.any(delta):
        return 0.0
    quad = _alpha_free_quadratic(delta, params.mu, space)
    return float(np.sqrt(m * (params.alpha + 1.0) * max(quad, 0.0)))
