#!/usr/bin/env python3
"""
Classifier - softmax model f(x) = softmax(g(x; theta)) with hand-written gradients.

Two architectures share one flat parameter vector:
    linear: g(x) = W x + b
    mlp:    g(x) = W2 relu(W1 x + b1) + b2

Every cross-entropy style loss here reduces to soft_target_ce_grad(), which takes
a per-sample coefficient matrix c and computes sum_ik c_ik * (-log f(x_i)_k).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
from scipy.special import log_softmax, softmax

from core_math import SeededRng
from transition import TransitionMatrix, invert

logger = logging.getLogger(__name__)

ARCHITECTURES = ("linear", "mlp")
LOG_CLAMP = 1e-12
_LOG_FLOOR = float(np.log(LOG_CLAMP))


class NonFiniteGradientError(ValueError):
    """Raised by an optimizer step when the gradient has a NaN or inf."""

    def __init__(self, index: int, value: float):
        super().__init__(f"non-finite gradient at parameter {index}: {value!r}")
        self.index = index


@dataclass
class BatchGrad:
    """Loss value and its gradient with respect to the flat parameter vector."""
    loss: float
    grad: np.ndarray
    clamped: int = 0


# =============================================================================
# Model
# =============================================================================

class Classifier:
    """Linear or one-hidden-layer ReLU softmax classifier."""

    def __init__(
        self,
        input_dim: int,
        num_classes: int,
        architecture: str = "linear",
        hidden_width: int = 64,
        params: Optional[np.ndarray] = None,
    ):
        if architecture not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {architecture!r}; expected one of {ARCHITECTURES}")
        if input_dim < 1 or num_classes < 2:
            raise ValueError(f"need input_dim >= 1 and num_classes >= 2, got {input_dim}, {num_classes}")
        if architecture == "mlp" and hidden_width < 1:
            raise ValueError(f"hidden_width must be >= 1, got {hidden_width}")
        self.input_dim = int(input_dim)
        self.num_classes = int(num_classes)
        self.architecture = architecture
        self.hidden_width = int(hidden_width) if architecture == "mlp" else 0
        size = sum(int(np.prod(shape)) for _, shape in self.shapes)
        if params is None:
            params = np.zeros(size)
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (size,):
            raise ValueError(f"{architecture} classifier needs {size} parameters, got shape {params.shape}")
        self.params = params.copy()

    @classmethod
    def initialize(
        cls,
        input_dim: int,
        num_classes: int,
        architecture: str = "linear",
        hidden_width: int = 64,
        rng: Optional[SeededRng] = None,
    ) -> "Classifier":
        """Zeros for linear; Kaiming-style uniform weights and zero biases for mlp."""
        clf = cls(input_dim, num_classes, architecture, hidden_width)
        if architecture == "mlp":
            if rng is None:
                raise ValueError("mlp initialization needs an rng")
            views = clf.unpack()
            for name, fan_in in (("w1", input_dim), ("w2", hidden_width)):
                bound = np.sqrt(6.0 / fan_in)
                views[name][...] = (2.0 * rng.uniform(size=views[name].shape) - 1.0) * bound
        return clf

    @property
    def shapes(self) -> List[Tuple[str, Tuple[int, ...]]]:
        d, c, h = self.input_dim, self.num_classes, self.hidden_width
        if self.architecture == "linear":
            return [("w", (c, d)), ("b", (c,))]
        return [("w1", (h, d)), ("b1", (h,)), ("w2", (c, h)), ("b2", (c,))]

    @property
    def num_params(self) -> int:
        return int(self.params.size)

    def unpack(self, flat: Optional[np.ndarray] = None) -> Dict[str, np.ndarray]:
        """Named views into a flat vector (the parameters by default)."""
        flat = self.params if flat is None else flat
        views, offset = {}, 0
        for name, shape in self.shapes:
            size = int(np.prod(shape))
            views[name] = flat[offset:offset + size].reshape(shape)
            offset += size
        return views

    def copy(self) -> "Classifier":
        return Classifier(self.input_dim, self.num_classes, self.architecture, self.hidden_width or 64, self.params)

    def _check_features(self, features) -> np.ndarray:
        x = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if x.shape[1] != self.input_dim:
            raise ValueError(f"expected {self.input_dim} features, got {x.shape[1]}")
        if not np.all(np.isfinite(x)):
            raise ValueError("features contain non-finite values")
        return x

    def _forward(self, x: np.ndarray):
        p = self.unpack()
        if self.architecture == "linear":
            return x @ p["w"].T + p["b"], None
        pre = x @ p["w1"].T + p["b1"]
        hidden = np.maximum(pre, 0.0)
        return hidden @ p["w2"].T + p["b2"], (pre, hidden)

    def logits(self, features) -> np.ndarray:
        return self._forward(self._check_features(features))[0]

    def predict_proba(self, features) -> np.ndarray:
        return softmax(self.logits(features), axis=1)

    def predict(self, features) -> np.ndarray:
        return self.logits(features).argmax(axis=1)

    def backprop(self, features, dlogits: np.ndarray) -> np.ndarray:
        """Flat gradient given dLoss/dlogits for each row of features."""
        x = self._check_features(features)
        _, cache = self._forward(x)
        grad = np.zeros_like(self.params)
        g = self.unpack(grad)
        if self.architecture == "linear":
            g["w"][...] = dlogits.T @ x
            g["b"][...] = dlogits.sum(axis=0)
            return grad
        pre, hidden = cache
        g["w2"][...] = dlogits.T @ hidden
        g["b2"][...] = dlogits.sum(axis=0)
        dpre = (dlogits @ self.unpack()["w2"]) * (pre > 0.0)
        g["w1"][...] = dpre.T @ x
        g["b1"][...] = dpre.sum(axis=0)
        return grad

    def __repr__(self) -> str:
        extra = f", hidden={self.hidden_width}" if self.architecture == "mlp" else ""
        return f"Classifier({self.architecture}, d={self.input_dim}, C={self.num_classes}{extra})"


def forward(c: Classifier, x) -> np.ndarray:
    """f(x) for a single feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"forward takes one feature vector, got shape {x.shape}")
    return c.predict_proba(x[None, :])[0]


def accuracy(c: Classifier, features, labels) -> float:
    labels = np.asarray(labels)
    if labels.size == 0:
        return 0.0
    return float(np.mean(c.predict(features) == labels))


# =============================================================================
# Losses
# =============================================================================

def _onehot(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, num_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def clamped_log_proba(c: Classifier, features):
    """(probabilities, log-probabilities floored at log 1e-12, floor mask)."""
    z = c.logits(features)
    log_p = log_softmax(z, axis=1)
    mask = log_p < _LOG_FLOOR
    return np.exp(log_p), np.maximum(log_p, _LOG_FLOOR), mask


def per_sample_ce(c: Classifier, features, labels) -> np.ndarray:
    """-log f(x_i)_{y_i} for each row."""
    _, log_p, _ = clamped_log_proba(c, features)
    labels = np.asarray(labels, dtype=np.int64)
    return -log_p[np.arange(labels.size), labels]


def soft_target_ce_grad(c: Classifier, features, coeffs: np.ndarray) -> BatchGrad:
    """Loss sum_ik coeffs_ik * (-log f(x_i)_k) and its exact gradient.

    Coefficients may be negative (Backward correction, label perturbation).
    A floored log-probability keeps its unclamped gradient.
    """
    probs, log_p, mask = clamped_log_proba(c, features)
    coeffs = np.asarray(coeffs, dtype=np.float64)
    loss = float(-np.sum(coeffs * log_p))
    dlogits = probs * coeffs.sum(axis=1, keepdims=True) - coeffs
    clamped = int(np.sum(mask & (coeffs != 0.0)))
    if clamped:
        logger.debug("clamped %d log-probabilities at log(%g)", clamped, LOG_CLAMP)
    return BatchGrad(loss=loss, grad=c.backprop(features, dlogits), clamped=clamped)


def weighted_ce_grad(c: Classifier, features, labels, weights) -> BatchGrad:
    """sum_i weight_i * (-log f(x_i)_{label_i})."""
    weights = np.asarray(weights, dtype=np.float64)
    if not np.all(np.isfinite(weights)) or np.any(weights < 0):
        raise ValueError("weights must be finite and non-negative")
    coeffs = _onehot(labels, c.num_classes) * weights[:, None]
    return soft_target_ce_grad(c, features, coeffs)


def ce_grad(c: Classifier, features, labels) -> BatchGrad:
    """Unweighted cross entropy, averaged over the batch."""
    n = len(labels)
    return weighted_ce_grad(c, features, labels, np.full(n, 1.0 / n))


def forward_loss_grad(c: Classifier, T: TransitionMatrix, features, labels) -> BatchGrad:
    """Forward correction: mean of -log (T f(x_i))_{y_i}."""
    if T.num_classes != c.num_classes:
        raise ValueError(f"T has {T.num_classes} classes, classifier has {c.num_classes}")
    labels = np.asarray(labels, dtype=np.int64)
    n = labels.size
    probs = c.predict_proba(features)
    rows = T.entries[labels]  # T[y_i, :]
    q = np.sum(rows * probs, axis=1)
    clamped_mask = q < LOG_CLAMP
    q = np.maximum(q, LOG_CLAMP)
    loss = float(np.mean(-np.log(q)))
    dlogits = probs * (1.0 - rows / q[:, None]) / n
    clamped = int(clamped_mask.sum())
    if clamped:
        logger.debug("forward loss clamped %d noisy-posterior entries", clamped)
    return BatchGrad(loss=loss, grad=c.backprop(features, dlogits), clamped=clamped)


def backward_loss_grad(c: Classifier, T: TransitionMatrix, features, labels) -> BatchGrad:
    """Backward correction: mean of sum_k Tinv[k, y_i] * (-log f(x_i)_k)."""
    if T.num_classes != c.num_classes:
        raise ValueError(f"T has {T.num_classes} classes, classifier has {c.num_classes}")
    labels = np.asarray(labels, dtype=np.int64)
    t_inv = invert(T)
    coeffs = t_inv[:, labels].T / labels.size
    return soft_target_ce_grad(c, features, coeffs)


# =============================================================================
# Gradient checking
# =============================================================================

def numeric_gradient(c: Classifier, loss_grad: Callable[[Classifier], BatchGrad], step: float = 1e-5) -> np.ndarray:
    """Central finite differences of loss_grad(c).loss, one parameter at a time."""
    base = c.params.copy()
    out = np.zeros_like(base)
    probe = c.copy()
    for i in range(base.size):
        probe.params = base.copy()
        probe.params[i] = base[i] + step
        upper = loss_grad(probe).loss
        probe.params[i] = base[i] - step
        out[i] = (upper - loss_grad(probe).loss) / (2.0 * step)
    return out


def gradient_error(c: Classifier, loss_grad: Callable[[Classifier], BatchGrad], step: float = 1e-5) -> float:
    """||analytic - numeric|| / max(||analytic|| + ||numeric||, 1e-12)."""
    analytic = loss_grad(c).grad
    numeric = numeric_gradient(c, loss_grad, step)
    scale = max(float(np.linalg.norm(analytic) + np.linalg.norm(numeric)), 1e-12)
    return float(np.linalg.norm(analytic - numeric)) / scale


# =============================================================================
# Optimizers
# =============================================================================

class Optimizer:
    """Base first-order optimizer; subclasses implement _update."""

    def __init__(self, lr: float):
        if not lr > 0:
            raise ValueError(f"learning rate must be positive, got {lr!r}")
        self.lr = float(lr)
        self.t = 0

    def step(self, c: Classifier, g: BatchGrad) -> Classifier:
        grad = np.asarray(g.grad, dtype=np.float64)
        if grad.shape != c.params.shape:
            raise ValueError(f"gradient shape {grad.shape} does not match parameters {c.params.shape}")
        bad = np.flatnonzero(~np.isfinite(grad))
        if bad.size:
            raise NonFiniteGradientError(int(bad[0]), float(grad[bad[0]]))
        self.t += 1
        c.params = c.params - self._update(grad)
        return c

    def _update(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class SGD(Optimizer):
    def __init__(self, lr: float = 0.01, momentum: float = 0.0):
        super().__init__(lr)
        if not 0.0 <= momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {momentum!r}")
        self.momentum = float(momentum)
        self.velocity: Optional[np.ndarray] = None

    def _update(self, grad: np.ndarray) -> np.ndarray:
        if self.momentum == 0.0:
            return self.lr * grad
        if self.velocity is None:
            self.velocity = np.zeros_like(grad)
        self.velocity = self.momentum * self.velocity + grad
        return self.lr * self.velocity


class Adam(Optimizer):
    def __init__(self, lr: float = 0.001, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        super().__init__(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.m: Optional[np.ndarray] = None
        self.v: Optional[np.ndarray] = None

    def _update(self, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(grad)
            self.v = np.zeros_like(grad)
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(kind: str, lr: float, momentum: float = 0.0, beta1: float = 0.9,
                   beta2: float = 0.999, eps: float = 1e-8) -> Optimizer:
    if kind == "sgd":
        return SGD(lr, momentum)
    if kind == "adam":
        return Adam(lr, beta1, beta2, eps)
    raise ValueError(f"unknown optimizer {kind!r}; expected sgd or adam")


def step(opt: Optimizer, c: Classifier, g: BatchGrad) -> Classifier:
    return opt.step(c, g)


# =============================================================================
# Checkpoints
# =============================================================================

def save_checkpoint(c: Classifier, path: Union[str, Path]) -> None:
    """One parameter per line, 17 significant digits, after a key=value header line."""
    header = (
        f"architecture={c.architecture},input_dim={c.input_dim},"
        f"num_classes={c.num_classes},hidden_width={c.hidden_width}"
    )
    np.savetxt(path, c.params, fmt="%.17g", header=header)


def load_checkpoint(path: Union[str, Path]) -> Classifier:
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().lstrip("#").strip()
    meta = dict(item.split("=", 1) for item in header.split(","))
    params = np.loadtxt(path, ndmin=1)
    return Classifier(
        input_dim=int(meta["input_dim"]),
        num_classes=int(meta["num_classes"]),
        architecture=meta["architecture"],
        hidden_width=int(meta["hidden_width"]) or 64,
        params=params,
    )
