"""Run manifests: per-scene provenance records for generated datasets.

A manifest is a JSONL file, one record per scene in sweep order. Output
paths are stored relative to the manifest's directory so a dataset can be
moved as a unit. Records carry the hash of every generation-relevant
setting, which is what makes interrupted sweeps resumable.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

__all__ = ["ManifestEntry", "Manifest", "config_hash"]

MANIFEST_NAME = "manifest.jsonl"


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(settings: dict) -> str:
    """Stable digest of generation-relevant settings."""
    return hashlib.sha256(_canonical(settings).encode()).hexdigest()


@dataclass(frozen=True)
class ManifestEntry:
    scene_id: str
    cell: tuple  # (x, y) offsets
    background_id: int
    outputs: dict  # kind -> relative path
    seed: int
    config_hash: str

    def to_json(self) -> str:
        d = asdict(self)
        d["cell"] = list(self.cell)
        return _canonical(d)

    @classmethod
    def from_json(cls, line: str) -> "ManifestEntry":
        d = json.loads(line)
        d["cell"] = tuple(d["cell"])
        return cls(**d)


@dataclass
class Manifest:
    entries: list
    root: Path  # directory that relative output paths resolve against

    def __post_init__(self):
        self.root = Path(self.root)

    def path_of(self, entry: ManifestEntry, kind: str) -> Path:
        try:
            rel = entry.outputs[kind]
        except KeyError:
            raise KeyError(
                f"scene {entry.scene_id} has no {kind!r} output"
            ) from None
        return self.root / rel

    def by_scene_id(self) -> dict:
        return {e.scene_id: e for e in self.entries}

    def write(self, path: Optional[Path] = None) -> Path:
        path = Path(path) if path else self.root / MANIFEST_NAME
        path.write_text("".join(e.to_json() + "\n" for e in self.entries))
        return path

    @classmethod
    def load(cls, path) -> "Manifest":
        path = Path(path)
        if path.is_dir():
            path = path / MANIFEST_NAME
        if not path.is_file():
            raise FileNotFoundError(f"manifest not found: {path}")
        entries = [
            ManifestEntry.from_json(line)
            for line in path.read_text().splitlines()
            if line.strip()
        ]
        return cls(entries, path.parent)
