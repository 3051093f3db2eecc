"""Shift manifests: the reproducibility record of a generation run."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ParseError

TOOLKIT_VERSION = "0.1.0"
MANIFEST_NAME = "manifest.json"


def dataset_digest(root) -> str:
    """SHA-256 over the sorted file list and contents of a dataset directory.

    The manifest file itself is excluded so the digest describes the data.
    """
    root = Path(root)
    digest = hashlib.sha256()
    files = sorted(
        p for p in root.rglob("*")
        if p.is_file() and p.relative_to(root).as_posix() != MANIFEST_NAME
    )
    for path in files:
        digest.update(path.relative_to(root).as_posix().encode("utf-8"))
        digest.update(b"\0")
        digest.update(path.read_bytes())
        digest.update(b"\0")
    return digest.hexdigest()


@dataclass(frozen=True)
class ShiftManifest:
    toolkit_version: str
    seed: int
    task: str
    shift: str
    params: dict
    config: dict  # enough of the pipeline config to replay the run
    items: list = field(default_factory=list)
    input_digest: str = ""
    output_digest: str = ""

    def to_bytes(self) -> bytes:
        payload = {
            "toolkit_version": self.toolkit_version,
            "seed": self.seed,
            "task": self.task,
            "shift": self.shift,
            "params": self.params,
            "config": self.config,
            "items": self.items,
            "input_digest": self.input_digest,
            "output_digest": self.output_digest,
        }
        return json.dumps(payload, sort_keys=True, indent=1, ensure_ascii=False).encode("utf-8")

    @classmethod
    def from_bytes(cls, data: bytes) -> "ShiftManifest":
        try:
            payload = json.loads(data.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as err:
            raise ParseError(f"invalid manifest: {err}") from err
        missing = {
            "toolkit_version", "seed", "task", "shift", "params",
            "config", "items", "input_digest", "output_digest",
        } - payload.keys()
        if missing:
            raise ParseError(f"manifest missing fields: {sorted(missing)}")
        return cls(**{k: payload[k] for k in (
            "toolkit_version", "seed", "task", "shift", "params",
            "config", "items", "input_digest", "output_digest",
        )})

    def write(self, root) -> None:
        (Path(root) / MANIFEST_NAME).write_bytes(self.to_bytes())

    @classmethod
    def read(cls, path) -> "ShiftManifest":
        return cls.from_bytes(Path(path).read_bytes())
