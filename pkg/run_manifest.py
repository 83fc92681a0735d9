"""Persistent manifest of an experiment output directory."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


class RunManifest:
    """JSON-backed record of a config hash directory: its config and the state of each seed.

    Only the orchestrating process writes it; workers report back through RunResult.
    """

    def __init__(self, path: Path) -> None:
        self._path = Path(path)
        self._data: Dict[str, Any] = {}
        self._load()

    @classmethod
    def in_dir(cls, run_dir: Path) -> "RunManifest":
        return cls(Path(run_dir) / MANIFEST_NAME)

    @property
    def path(self) -> Path:
        return self._path

    def _load(self) -> None:
        if self._path.exists():
            try:
                self._data = json.loads(self._path.read_text(encoding="utf-8"))
            except (OSError, ValueError) as e:
                logger.warning("Ignoring unreadable manifest %s: %s", self._path, e)
                self._data = {}

    def save(self) -> None:
        self._path.parent.mkdir(parents=True, exist_ok=True)
        self._path.write_text(json.dumps(self._data, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")

    def get(self, key: str, default: Any = None) -> Any:
        return self._data.get(key, default)

    def set(self, key: str, value: Any) -> None:
        self._data[key] = value
        self.save()

    def setdefault(self, key: str, value: Any) -> Any:
        if key not in self._data:
            self.set(key, value)
        return self._data[key]

    def _seeds(self) -> Dict[str, Dict[str, Any]]:
        return self._data.setdefault("seeds", {})

    def mark_done(self, seed: int, **info: Any) -> None:
        self._seeds()[str(seed)] = {"status": "completed", **info}
        self.save()

    def mark_failed(self, seed: int, error: str) -> None:
        self._seeds()[str(seed)] = {"status": "failed", "error": error}
        self.save()

    def seeds_with_status(self, status: str) -> List[int]:
        return sorted(int(s) for s, entry in self._data.get("seeds", {}).items() if entry.get("status") == status)

    def __repr__(self) -> str:
        return f"RunManifest({self._path})"
