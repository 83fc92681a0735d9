#!/usr/bin/env python3
"""
Harness - experiment configs, the seeded training loop, sweeps and the run analyzer.

Output layout:
    <out_dir>/<config_hash>/manifest.json
    <out_dir>/<config_hash>/config.json
    <out_dir>/<config_hash>/<seed>/metrics.csv
    <out_dir>/<config_hash>/<seed>/result.json
    <out_dir>/<config_hash>/<seed>/reports.json
    <out_dir>/<config_hash>/<seed>/weight_histogram.csv
    <out_dir>/<config_hash>/<seed>/transition.csv

Usage:
    cfg = load_config("configs/desk.json")
    results = run_experiment(cfg)
    table = alpha_sweep(cfg, [0.1, 1.0, 10.0])
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
import yaml
from scipy.stats import spearmanr

from analysis import (
    confidence_split,
    resample_quality,
    weight_distance,
    weight_histogram,
    weight_marker_counts,
    write_reports_json,
)
from classifier import ARCHITECTURES, Classifier, accuracy, make_optimizer
from core_math import RankDeficiencyError, SeededRng
from noise_presets import get_preset, list_presets
from noisy_data import (
    NoiseSpec,
    NoisyDataset,
    empirical_confusion,
    generate_gaussian_mixture,
    inject_noise,
    load_csv,
    sample_clean_split,
)
from risk import (
    RENT_STRATEGIES,
    RISKS,
    RentConfig,
    RiskStrategy,
    SampleWeights,
    compute_weights,
    make_strategy,
    oracle_weights,
    rent_resample,
    resample_epoch,
)
from run_manifest import RunManifest
from transition import TransitionMatrix, corrupt, estimate_anchor, estimation_error

logger = logging.getLogger(__name__)

NOISE_KINDS = ("none", "symmetric", "asymmetric", "matrix")
T_SOURCES = ("true", "anchor", "corrupted", "file")
OPTIMIZERS = ("sgd", "adam")
DEFAULT_NOISE_RATE = 0.4
DISTANCE_ALPHAS = (0.1, 1.0, 10.0, 100.0)
METRIC_COLUMNS = (
    "epoch", "train_loss", "noisy_train_acc", "clean_train_acc", "test_acc", "clean_above_marker", "noisy_above_marker",
)
# keys that never change what a seed computes
UNHASHED_KEYS = ("seeds", "out_dir", "workers", "timing", "log_every")


class ConfigError(ValueError):
    """Raised for malformed or inconsistent experiment configs."""


# =============================================================================
# Config
# =============================================================================

@dataclass
class DataConfig:
    num_classes: int = 4
    dim: int = 16
    train_size: int = 20000
    test_size: int = 4000
    separation: float = 3.0
    csv_path: Optional[str] = None
    test_csv_path: Optional[str] = None


@dataclass
class NoiseConfig:
    """rate None means the preset's rate, or DEFAULT_NOISE_RATE without a preset."""
    kind: str = "symmetric"
    rate: Optional[float] = None
    preset: Optional[str] = None
    pair_map: Optional[Dict[int, int]] = None
    matrix_path: Optional[str] = None


@dataclass
class TransitionConfig:
    source: str = "true"
    anchor_fraction: float = 0.03
    rank_by: str = "class"
    warmup_epochs: int = 20
    eps: float = 0.0
    path: Optional[str] = None


@dataclass
class RiskConfig:
    name: str = "rent"
    alpha: float = 1.0
    num_weight_samples: int = 1
    budget: Optional[int] = None
    budget_ratio: float = 1.0
    strategy: str = "batch"
    sigma: float = 0.0


@dataclass
class ModelConfig:
    architecture: str = "mlp"
    hidden_width: int = 64


@dataclass
class OptimizerConfig:
    kind: str = "adam"
    lr: float = 0.001
    momentum: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


_SECTIONS = {
    "data": DataConfig,
    "noise": NoiseConfig,
    "transition": TransitionConfig,
    "risk": RiskConfig,
    "model": ModelConfig,
    "optimizer": OptimizerConfig,
}


@dataclass
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    transition: TransitionConfig = field(default_factory=TransitionConfig)
    risk: RiskConfig = field(default_factory=RiskConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    epochs: int = 100
    batch_size: int = 128
    seeds: List[int] = field(default_factory=lambda: [0])
    out_dir: str = "runs"
    workers: int = 1
    log_every: int = 10
    timing: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError(f"config must be a mapping, got {type(data).__name__}")
        top = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - top)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        kwargs: Dict[str, Any] = {}
        for key, value in data.items():
            section = _SECTIONS.get(key)
            if section is None:
                kwargs[key] = value
                continue
            value = value or {}
            allowed = {f.name for f in fields(section)}
            bad = sorted(set(value) - allowed)
            if bad:
                raise ConfigError(f"unknown key(s) in '{key}': {', '.join(bad)}")
            kwargs[key] = section(**value)
        cfg = cls(**kwargs)
        if cfg.noise.pair_map is not None:
            cfg.noise.pair_map = {int(k): int(v) for k, v in cfg.noise.pair_map.items()}
        cfg.seeds = [int(s) for s in cfg.seeds]
        cfg.validate()
        return cfg

    def validate(self) -> None:
        """Raise ConfigError for out-of-range values or missing files."""

        def need(ok: bool, message: str) -> None:
            if not ok:
                raise ConfigError(message)

        d, n, t, r = self.data, self.noise, self.transition, self.risk
        need(d.num_classes >= 2, f"data.num_classes must be >= 2, got {d.num_classes}")
        need(d.dim >= d.num_classes - 1, f"data.dim must be >= num_classes - 1, got {d.dim}")
        need(d.train_size >= d.num_classes and d.test_size >= 1, "data.train_size / test_size too small")
        need(d.separation >= 0, f"data.separation must be >= 0, got {d.separation}")
        need((d.csv_path is None) == (d.test_csv_path is None), "data.csv_path and data.test_csv_path go together")
        need(n.kind in NOISE_KINDS, f"noise.kind must be one of {NOISE_KINDS}, got {n.kind!r}")
        need(n.rate is None or 0.0 <= n.rate < 1.0, f"noise.rate must be in [0, 1), got {n.rate}")
        need(
            n.preset is None or get_preset(n.preset) is not None,
            f"unknown noise preset {n.preset!r}; available: {', '.join(list_presets())}",
        )
        need(n.kind != "matrix" or n.matrix_path is not None, "noise.kind 'matrix' needs noise.matrix_path")
        need(t.source in T_SOURCES, f"transition.source must be one of {T_SOURCES}, got {t.source!r}")
        need(0.0 < t.anchor_fraction <= 1.0, f"transition.anchor_fraction must be in (0, 1], got {t.anchor_fraction}")
        need(t.rank_by in ("class", "argmax"), f"transition.rank_by must be class or argmax, got {t.rank_by!r}")
        need(t.warmup_epochs >= 1, "transition.warmup_epochs must be >= 1")
        need(t.source != "file" or t.path is not None, "transition.source 'file' needs transition.path")
        need(r.name in RISKS, f"risk.name must be one of {RISKS}, got {r.name!r}")
        need(r.strategy in RENT_STRATEGIES, f"risk.strategy must be one of {RENT_STRATEGIES}, got {r.strategy!r}")
        need(r.alpha > 0 and r.num_weight_samples >= 1, "risk.alpha must be > 0 and num_weight_samples >= 1")
        need(r.budget is None or r.budget >= 1, f"risk.budget must be >= 1, got {r.budget}")
        need(r.budget_ratio > 0 and r.sigma >= 0, "risk.budget_ratio must be > 0 and risk.sigma >= 0")
        need(self.model.architecture in ARCHITECTURES, f"model.architecture must be one of {ARCHITECTURES}")
        need(self.model.hidden_width >= 1, "model.hidden_width must be >= 1")
        need(self.optimizer.kind in OPTIMIZERS, f"optimizer.kind must be one of {OPTIMIZERS}")
        need(self.optimizer.lr > 0, f"optimizer.lr must be > 0, got {self.optimizer.lr}")
        need(self.epochs >= 1 and self.batch_size >= 1, "epochs and batch_size must be >= 1")
        need(len(self.seeds) > 0, "seeds must not be empty")
        need(self.workers >= 1 and self.log_every >= 1, "workers and log_every must be >= 1")
        for label, path in (
            ("data.csv_path", d.csv_path),
            ("data.test_csv_path", d.test_csv_path),
            ("noise.matrix_path", n.matrix_path),
            ("transition.path", t.path if t.source == "file" else None),
        ):
            need(path is None or Path(path).is_file(), f"{label} does not exist: {path}")

    def config_hash(self) -> str:
        payload = {k: v for k, v in self.to_dict().items() if k not in UNHASHED_KEYS}
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]

    def run_dir(self) -> Path:
        return Path(self.out_dir) / self.config_hash()


def load_config(path: Union[str, Path], defaults: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """Read a JSON or YAML config; missing keys take `defaults`, then the dataclass defaults."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        # YAML 1.1 reads exponents without a dot (1e-08) as strings, so JSON goes through json
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text) or {}
    except (ValueError, yaml.YAMLError) as e:
        raise ConfigError(f"{path}: {e}") from e
    if isinstance(data, dict):
        data = {**(defaults or {}), **data}
    return ExperimentConfig.from_dict(data)


def save_config(cfg: ExperimentConfig, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def with_overrides(cfg: ExperimentConfig, **sections: Dict[str, Any]) -> ExperimentConfig:
    """Copy of cfg with section fields replaced, e.g. with_overrides(cfg, risk={"name": "rw"}).

    Top-level fields are passed under the key "top".
    """
    updated = replace(cfg, **sections.pop("top", {}))
    for name, values in sections.items():
        setattr(updated, name, replace(getattr(cfg, name), **values))
    updated.validate()
    return updated


# =============================================================================
# Results
# =============================================================================

@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    noisy_train_acc: float
    clean_train_acc: float
    test_acc: float
    # samples whose weight beats 1/B; None for risks without per-sample weights
    clean_above_marker: Optional[int] = None
    noisy_above_marker: Optional[int] = None


@dataclass
class RunResult:
    seed: int
    status: str = "completed"
    epochs: List[EpochMetrics] = field(default_factory=list)
    reports: Dict[str, Any] = field(default_factory=dict)
    transition_error: Optional[float] = None
    wall_clock: Optional[float] = None
    error: Optional[str] = None
    output_dir: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.status == "completed"

    @property
    def final_test_accuracy(self) -> Optional[float]:
        return self.epochs[-1].test_acc if self.epochs else None

    @property
    def best_test_accuracy(self) -> Optional[float]:
        return max(e.test_acc for e in self.epochs) if self.epochs else None

    def to_dict(self) -> Dict[str, Any]:
        out = {
            "seed": self.seed,
            "status": self.status,
            "epochs": len(self.epochs),
            "final": asdict(self.epochs[-1]) if self.epochs else None,
            "best_test_acc": self.best_test_accuracy,
            "transition_error": self.transition_error,
        }
        if self.error is not None:
            out["error"] = self.error
        if self.wall_clock is not None:
            out["wall_clock"] = self.wall_clock
        return out


# =============================================================================
# One seed
# =============================================================================

def _load_data(cfg: ExperimentConfig, rng: SeededRng):
    d = cfg.data
    if d.csv_path is not None:
        return load_csv(d.csv_path, d.num_classes), load_csv(d.test_csv_path, d.num_classes)
    train = generate_gaussian_mixture(d.num_classes, d.dim, d.train_size, d.separation, rng)
    return train, sample_clean_split(train.posterior_oracle, d.test_size, rng)


def _noise_spec(cfg: ExperimentConfig, seed: int) -> NoiseSpec:
    n, c = cfg.noise, cfg.data.num_classes
    if n.preset is not None:
        return get_preset(n.preset).to_noise_spec(c, seed=seed, rate=n.rate)
    rate = DEFAULT_NOISE_RATE if n.rate is None else n.rate
    matrix = TransitionMatrix.from_csv(n.matrix_path) if n.kind == "matrix" else None
    return NoiseSpec(kind=n.kind, rate=rate, pair_map=n.pair_map, matrix=matrix, seed=seed)


def _apply_noise(cfg: ExperimentConfig, train: NoisyDataset, rng: SeededRng):
    """(noisy train set, true T)."""
    if cfg.noise.kind == "none" and cfg.noise.preset is None:
        if cfg.data.csv_path is None:
            return train, TransitionMatrix.identity(train.num_classes)
        confusion = empirical_confusion(train)
        empty = confusion.sum(axis=0) == 0
        confusion[:, empty] = np.eye(train.num_classes)[:, empty]
        return train, TransitionMatrix(confusion)
    spec = _noise_spec(cfg, int(rng.integers(0, 2**31 - 1)))
    if cfg.data.csv_path is not None:
        train = NoisyDataset(train.features, train.clean_labels, train.clean_labels.copy(), train.num_classes)
    return inject_noise(train, spec)


def _build_classifier(cfg: ExperimentConfig, input_dim: int, rng: SeededRng) -> Classifier:
    return Classifier.initialize(
        input_dim,
        cfg.data.num_classes,
        architecture=cfg.model.architecture,
        hidden_width=cfg.model.hidden_width,
        rng=rng,
    )


def _build_optimizer(cfg: ExperimentConfig):
    o = cfg.optimizer
    return make_optimizer(o.kind, o.lr, momentum=o.momentum, beta1=o.beta1, beta2=o.beta2, eps=o.eps)


def train_classifier(
    clf: Classifier,
    optimizer,
    strategy: RiskStrategy,
    train: NoisyDataset,
    test: NoisyDataset,
    epochs: int,
    batch_size: int,
    rng: SeededRng,
    log_every: int = 10,
    tag: str = "",
) -> List[EpochMetrics]:
    """Fixed-epoch minibatch training; one EpochMetrics row per epoch."""
    order_rng, risk_rng = rng.child("order"), rng.child("risk")
    x, noisy = train.features, train.noisy_labels
    history: List[EpochMetrics] = []
    for epoch in range(1, epochs + 1):
        if strategy.resamples_epoch:
            stream = resample_epoch(clf, strategy.T, train, strategy.rent, risk_rng)
        else:
            stream = order_rng.permutation(len(train))
        losses = []
        for start in range(0, stream.size, batch_size):
            idx = stream[start:start + batch_size]
            g = strategy.loss_grad(clf, x[idx], noisy[idx], risk_rng)
            optimizer.step(clf, g)
            losses.append(g.loss)
        row = EpochMetrics(
            epoch=epoch,
            train_loss=float(np.mean(losses)),
            noisy_train_acc=accuracy(clf, x, noisy),
            clean_train_acc=accuracy(clf, x, train.clean_labels),
            test_acc=accuracy(clf, test.features, test.clean_labels),
        )
        if strategy.uses_weights:
            row.clean_above_marker, row.noisy_above_marker = weight_marker_counts(
                compute_weights(clf, strategy.T, x, noisy), train
            )
        history.append(row)
        level = logging.INFO if epoch % log_every == 0 or epoch == epochs else logging.DEBUG
        logger.log(
            level,
            "%s epoch %d/%d loss=%.4f noisy_acc=%.4f clean_acc=%.4f test_acc=%.4f above_marker=%s/%s",
            tag, epoch, epochs, row.train_loss, row.noisy_train_acc, row.clean_train_acc, row.test_acc,
            row.clean_above_marker, row.noisy_above_marker,
        )
    return history


def _select_transition(cfg: ExperimentConfig, true_T: TransitionMatrix, train, test, rng: SeededRng):
    t = cfg.transition
    if t.source == "true":
        return true_T
    if t.source == "corrupted":
        return corrupt(true_T, t.eps)
    if t.source == "file":
        return TransitionMatrix.from_csv(t.path)
    warm = _build_classifier(cfg, train.dim, rng.child("init"))
    train_classifier(
        warm, _build_optimizer(cfg), make_strategy("ce"), train, test,
        t.warmup_epochs, cfg.batch_size, rng.child("train"), cfg.log_every, tag="[warmup]",
    )
    return estimate_anchor(warm, train, fraction=t.anchor_fraction, rank_by=t.rank_by)


def _analyses(cfg: ExperimentConfig, clf: Classifier, T: TransitionMatrix, true_T: TransitionMatrix,
              train: NoisyDataset, rng: SeededRng) -> Dict[str, Any]:
    weights = compute_weights(clf, T, train.features, train.noisy_labels)
    counts = rent_resample(weights, RentConfig(), rng)
    reports: Dict[str, Any] = {
        "weight_histogram": weight_histogram(weights, train, cfg.batch_size),
        "resample_quality": resample_quality(counts, train),
        "confidence_split": confidence_split(clf, train),
    }
    if train.posterior_oracle is not None:
        oracle = oracle_weights(train, true_T)
        reports["oracle_weight_histogram"] = weight_histogram(
            SampleWeights(raw=oracle.raw, normalized=oracle.mu_star), train, cfg.batch_size
        )
        try:
            distances = weight_distance(weights.normalized, oracle.mu_star, DISTANCE_ALPHAS)
            reports["weight_distance"] = [{"alpha": a, "distance": d} for a, d in distances.items()]
        except RankDeficiencyError as e:
            logger.warning("Skipping weight distance: %s", e)
    return reports


def _write_metrics_csv(history: Sequence[EpochMetrics], path: Path) -> None:
    table = np.array(
        [[np.nan if getattr(row, c) is None else getattr(row, c) for c in METRIC_COLUMNS] for row in history],
        dtype=np.float64,
    )
    fmt = ["%d"] + ["%.17g"] * (len(METRIC_COLUMNS) - 1)
    np.savetxt(path, table, delimiter=",", header=",".join(METRIC_COLUMNS), comments="", fmt=fmt)


def _write_result_json(result: RunResult, path: Path) -> None:
    path.write_text(json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def run_seed(cfg: ExperimentConfig, seed: int) -> RunResult:
    """Train and evaluate one seed, writing its outputs; raises on any failure."""
    started = time.perf_counter()
    logger.info("Seed %d: %s, risk %s, T source %s", seed, cfg.config_hash(), cfg.risk.name, cfg.transition.source)
    rng = SeededRng(seed)
    seed_dir = cfg.run_dir() / str(seed)
    seed_dir.mkdir(parents=True, exist_ok=True)

    train, test = _load_data(cfg, rng.child("data"))
    train, true_T = _apply_noise(cfg, train, rng.child("noise"))
    T = _select_transition(cfg, true_T, train, test, rng.child("transition"))
    r = cfg.risk
    strategy = make_strategy(
        r.name,
        T=T,
        alpha=r.alpha,
        num_weight_samples=r.num_weight_samples,
        budget=r.budget,
        budget_ratio=r.budget_ratio,
        strategy=r.strategy,
        sigma=r.sigma,
    )
    clf = _build_classifier(cfg, train.dim, rng.child("init"))
    history = train_classifier(
        clf, _build_optimizer(cfg), strategy, train, test, cfg.epochs, cfg.batch_size,
        rng.child("train"), cfg.log_every, tag=f"[seed {seed}]",
    )
    reports = _analyses(cfg, clf, T, true_T, train, rng.child("analysis"))

    result = RunResult(
        seed=seed,
        epochs=history,
        reports=reports,
        transition_error=estimation_error(T, true_T),
        output_dir=str(seed_dir),
    )
    if cfg.timing:
        result.wall_clock = time.perf_counter() - started
    _write_metrics_csv(history, seed_dir / "metrics.csv")
    T.to_csv(seed_dir / "transition.csv")
    write_reports_json(reports, seed_dir / "reports.json")
    reports["weight_histogram"].to_csv(seed_dir / "weight_histogram.csv")
    _write_result_json(result, seed_dir / "result.json")
    logger.info("Seed %d finished: test_acc=%.4f (%s)", seed, result.final_test_accuracy, strategy.describe())
    return result


def _run_seed_guarded(cfg: ExperimentConfig, seed: int) -> RunResult:
    try:
        return run_seed(cfg, seed)
    except Exception as e:
        logger.error("Seed %d failed: %s", seed, e)
        result = RunResult(seed=seed, status="failed", error=f"{type(e).__name__}: {e}")
        seed_dir = cfg.run_dir() / str(seed)
        try:
            seed_dir.mkdir(parents=True, exist_ok=True)
            result.output_dir = str(seed_dir)
            _write_result_json(result, seed_dir / "result.json")
        except OSError as write_error:
            logger.error("Could not record failure of seed %d: %s", seed, write_error)
        return result


def run_experiment(cfg: ExperimentConfig) -> List[RunResult]:
    """One RunResult per seed, in seed order; failing seeds are recorded and skipped."""
    cfg.validate()
    run_dir = cfg.run_dir()
    run_dir.mkdir(parents=True, exist_ok=True)
    save_config(cfg, run_dir / "config.json")
    manifest = RunManifest.in_dir(run_dir)
    manifest.setdefault("created", time.strftime("%Y-%m-%dT%H:%M:%S"))
    manifest.set("config_hash", cfg.config_hash())
    manifest.set("config", cfg.to_dict())

    if cfg.workers > 1 and len(cfg.seeds) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, len(cfg.seeds))) as pool:
            results = list(pool.map(_run_seed_guarded, [cfg] * len(cfg.seeds), cfg.seeds))
    else:
        results = [_run_seed_guarded(cfg, seed) for seed in cfg.seeds]

    for result in results:
        if result.ok:
            manifest.mark_done(result.seed, final_test_acc=result.final_test_accuracy)
        else:
            manifest.mark_failed(result.seed, result.error)
    failed = [r.seed for r in results if not r.ok]
    if failed:
        logger.error("%d/%d seeds failed: %s", len(failed), len(results), failed)
    return results


# =============================================================================
# Sweeps
# =============================================================================

def _aggregate(label: str, results: Sequence[RunResult], **columns: Any) -> Dict[str, Any]:
    accs = [r.final_test_accuracy for r in results if r.ok]
    errors = [r.transition_error for r in results if r.ok and r.transition_error is not None]
    return {
        "label": label,
        **columns,
        "mean_test_acc": float(np.mean(accs)) if accs else float("nan"),
        "std_test_acc": float(np.std(accs)) if accs else float("nan"),
        "mean_transition_error": float(np.mean(errors)) if errors else float("nan"),
        "completed": len(accs),
        "seeds": len(results),
    }


def write_table(table: pd.DataFrame, path: Union[str, Path]) -> None:
    table.to_csv(path, index=False, float_format="%.17g")


def alpha_sweep(cfg: ExperimentConfig, alphas: Sequence[float]) -> pd.DataFrame:
    """DWS accuracy per alpha plus the RW and RENT endpoints.

    The Spearman correlation between -log(alpha) and accuracy is stored in
    table.attrs["spearman"] and logged, never asserted.
    """
    rows = [
        _aggregate(f"dws-{a:g}", run_experiment(with_overrides(cfg, risk={"name": "dws", "alpha": float(a)})),
                   risk="dws", alpha=float(a))
        for a in alphas
    ]
    rows.append(_aggregate("rw", run_experiment(with_overrides(cfg, risk={"name": "rw"})), risk="rw", alpha=np.inf))
    rows.append(_aggregate("rent", run_experiment(with_overrides(cfg, risk={"name": "rent"})), risk="rent", alpha=0.0))
    table = pd.DataFrame(rows)
    if len(alphas) >= 2:
        rho, _ = spearmanr(-np.log(np.asarray(alphas, dtype=np.float64)), table["mean_test_acc"][: len(alphas)])
        table.attrs["spearman"] = float(rho)
        logger.info("Spearman(-log alpha, accuracy) = %.3f", rho)
    return table


def budget_sweep(cfg: ExperimentConfig, budgets: Sequence[float]) -> pd.DataFrame:
    """RENT accuracy per budget ratio of the pool."""
    rows = []
    for ratio in budgets:
        sub = with_overrides(cfg, risk={"name": "rent", "budget": None, "budget_ratio": float(ratio)})
        rows.append(_aggregate(f"rent-{ratio:g}", run_experiment(sub), budget_ratio=float(ratio)))
    return pd.DataFrame(rows)


def sigma_sweep(cfg: ExperimentConfig, sigmas: Sequence[float]) -> pd.DataFrame:
    """SNL and RW+label-perturbation accuracy per sigma, with a RENT reference row."""
    rows = []
    for sigma in sigmas:
        for name in ("snl", "rw-snl"):
            sub = with_overrides(cfg, risk={"name": name, "sigma": float(sigma)})
            rows.append(_aggregate(f"{name}-{sigma:g}", run_experiment(sub), risk=name, sigma=float(sigma)))
    rows.append(_aggregate("rent", run_experiment(with_overrides(cfg, risk={"name": "rent"})), risk="rent", sigma=0.0))
    return pd.DataFrame(rows)


def eps_sweep(cfg: ExperimentConfig, eps_values: Sequence[float]) -> pd.DataFrame:
    """Forward and RENT accuracy under a corrupted T, with the T estimation gap per row."""
    rows = []
    for eps in eps_values:
        for name in ("fl", "rent"):
            sub = with_overrides(cfg, risk={"name": name}, transition={"source": "corrupted", "eps": float(eps)})
            rows.append(_aggregate(f"{name}-{eps:g}", run_experiment(sub), risk=name, eps=float(eps)))
    return pd.DataFrame(rows)


# =============================================================================
# Analyzer
# =============================================================================

def _config_dirs(path: Path) -> List[Path]:
    if (path / "manifest.json").exists() or (path / "config.json").exists():
        return [path]
    return sorted(p for p in path.iterdir() if p.is_dir() and (p / "config.json").exists())


def _seed_order(seed_dir: Path):
    name = seed_dir.name
    return (0, int(name), "") if name.isdigit() else (1, 0, name)


def analyze_run_dir(path: Union[str, Path]) -> pd.DataFrame:
    """Per-seed final and best-epoch test accuracy for every config under path.

    Writes summary.json next to each manifest and returns one row per config.
    """
    path = Path(path)
    if not path.is_dir():
        raise FileNotFoundError(f"run directory not found: {path}")
    rows = []
    for config_dir in _config_dirs(path):
        per_seed = []
        for seed_dir in sorted(config_dir.iterdir(), key=_seed_order):
            metrics = seed_dir / "metrics.csv"
            if not (seed_dir.is_dir() and metrics.exists()):
                continue
            frame = pd.read_csv(metrics)
            best = frame.loc[frame["test_acc"].idxmax()]
            per_seed.append({
                "seed": int(seed_dir.name) if seed_dir.name.isdigit() else seed_dir.name,
                "final_test_acc": float(frame["test_acc"].iloc[-1]),
                "best_test_acc": float(best["test_acc"]),
                "best_epoch": int(best["epoch"]),
            })
        manifest = RunManifest.in_dir(config_dir)
        final = [s["final_test_acc"] for s in per_seed]
        best = [s["best_test_acc"] for s in per_seed]
        summary = {
            "config_hash": config_dir.name,
            "risk": (manifest.get("config") or {}).get("risk", {}).get("name"),
            "seeds": per_seed,
            "failed_seeds": manifest.seeds_with_status("failed"),
            "final_mean": float(np.mean(final)) if final else None,
            "final_std": float(np.std(final)) if final else None,
            "best_mean": float(np.mean(best)) if best else None,
            "best_std": float(np.std(best)) if best else None,
        }
        (config_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        rows.append({k: v for k, v in summary.items() if k != "seeds"} | {"completed": len(per_seed)})
    return pd.DataFrame(rows)
