#!/usr/bin/env python3
"""
Noise Presets - Load named label-noise definitions from YAML files.

Presets are stored in configs/noise/*.yaml, for example:

    name: cifar10-asym
    description: Flips between visually similar classes
    kind: asymmetric
    rate: 0.4
    num_classes: 10
    pair_map: {9: 1, 2: 0, 4: 7, 3: 5, 5: 3}

An asymmetric preset gives either an explicit pair_map or class groups; with
groups every class flips to the next class of its group.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import yaml

from noisy_data import NOISE_KINDS, NoiseSpec, superclass_pair_map
from transition import TransitionMatrix

logger = logging.getLogger(__name__)


@dataclass
class NoisePreset:
    """A named noise process; num_classes is None when it fits any class count."""
    name: str
    description: str
    kind: str
    rate: float
    num_classes: Optional[int] = None
    pair_map: Dict[int, int] = field(default_factory=dict)
    groups: List[List[int]] = field(default_factory=list)
    matrix: Optional[List[List[float]]] = None

    def resolved_pair_map(self) -> Optional[Dict[int, int]]:
        if self.pair_map:
            return dict(self.pair_map)
        if self.groups:
            return superclass_pair_map(self.groups)
        return None

    def to_noise_spec(self, num_classes: int, seed: int = 0, rate: Optional[float] = None) -> NoiseSpec:
        """Instantiate for a dataset; rate overrides the preset's default."""
        if self.num_classes is not None and self.num_classes != num_classes:
            raise ValueError(f"preset {self.name!r} is for {self.num_classes} classes, dataset has {num_classes}")
        matrix = TransitionMatrix(self.matrix) if self.matrix is not None else None
        return NoiseSpec(
            kind=self.kind,
            rate=self.rate if rate is None else rate,
            pair_map=self.resolved_pair_map(),
            matrix=matrix,
            seed=seed,
        )


# Default presets directory
PRESETS_DIR = Path(__file__).parent / "configs" / "noise"


def load_preset_from_file(filepath: Path) -> Optional[NoisePreset]:
    """Load a single preset from a YAML file; malformed files are logged and skipped."""
    try:
        with open(filepath, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
        kind = data.get("kind", "symmetric")
        if kind not in NOISE_KINDS:
            raise ValueError(f"unknown kind {kind!r}")
        return NoisePreset(
            name=data.get("name", filepath.stem),
            description=data.get("description", ""),
            kind=kind,
            rate=float(data.get("rate", 0.0)),
            num_classes=data.get("num_classes"),
            pair_map={int(k): int(v) for k, v in (data.get("pair_map") or {}).items()},
            groups=[list(map(int, g)) for g in data.get("groups") or []],
            matrix=data.get("matrix"),
        )
    except Exception as e:
        logger.error("Error loading noise preset from %s: %s", filepath, e)
        return None


def load_noise_presets(presets_dir: Path = PRESETS_DIR) -> Dict[str, NoisePreset]:
    """Load all presets from YAML files, keyed by lower-case name."""
    presets = {}

    if not presets_dir.exists():
        logger.warning("Noise presets directory not found: %s", presets_dir)
        return presets

    for pattern in ["*.yaml", "*.yml"]:
        for filepath in sorted(presets_dir.glob(pattern)):
            preset = load_preset_from_file(filepath)
            if preset:
                presets[preset.name.lower()] = preset

    return presets


_presets_cache: Optional[Dict[str, NoisePreset]] = None


def get_presets() -> Dict[str, NoisePreset]:
    """Get all loaded presets (cached)."""
    global _presets_cache
    if _presets_cache is None:
        _presets_cache = load_noise_presets()
    return _presets_cache


def get_preset(name: str) -> Optional[NoisePreset]:
    """Get a preset by name (case-insensitive)."""
    return get_presets().get(name.lower())


def list_presets() -> List[str]:
    return sorted(get_presets().keys())


def reload_presets() -> Dict[str, NoisePreset]:
    """Force reload presets from disk."""
    global _presets_cache
    _presets_cache = load_noise_presets()
    return _presets_cache
