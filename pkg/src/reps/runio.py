"""Run manifests and deterministic artifact writers.

Manifests carry everything needed to regenerate an artifact: the resolved
config, seeds, input-file hashes, and the tool version. They deliberately
contain no timestamps, so identical runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from . import __version__

MANIFEST_NAME = "manifest.json"


def file_sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def dump_json(obj, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2, ensure_ascii=False)
        fh.write("\n")


def write_csv(path: str | Path, fieldnames: Sequence[str], rows: Iterable[Mapping]) -> int:
    """CSV with repr-stable float formatting (shortest round-trip repr)."""
    n = 0
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            formatted = {}
            for key in fieldnames:
                value = row.get(key)
                if isinstance(value, float):
                    formatted[key] = repr(float(value))
                elif value is None:
                    formatted[key] = ""
                else:
                    formatted[key] = value
            writer.writerow(formatted)
            n += 1
    return n


def build_manifest(
    subcommand: str,
    config: Mapping,
    inputs: Mapping[str, str | Path] | None = None,
    seeds: Mapping[str, int] | None = None,
    counters: Mapping[str, object] | None = None,
) -> dict:
    manifest = {
        "tool": {"name": "reps", "version": __version__},
        "subcommand": subcommand,
        "config": dict(sorted(config.items())),
        "seeds": dict(sorted((seeds or {}).items())),
        "inputs": {
            name: {"path": str(path), "sha256": file_sha256(path)}
            for name, path in sorted((inputs or {}).items())
        },
    }
    if counters:
        manifest["counters"] = dict(sorted(counters.items()))
    return manifest


def write_manifest(out_dir: str | Path, manifest: Mapping) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / MANIFEST_NAME
    dump_json(manifest, path)
    return path
