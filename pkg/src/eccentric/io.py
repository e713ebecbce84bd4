"""Deterministic CSV/JSON emission and run manifests.

Floats are formatted with 17 significant digits (round-trip exact for
float64), '.' decimal separator and '\\n' line endings, so identical runs
produce byte-identical files on every platform.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

__all__ = [
    "format_value",
    "write_csv",
    "write_json",
    "write_embedding_csv",
    "read_embedding_csv",
    "sha256_file",
    "write_manifest",
    "verify_manifest",
    "MANIFEST_NAME",
]

MANIFEST_NAME = "manifest.json"


def format_value(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def write_csv(path, header, rows):
    path = Path(path)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_value(v) for v in row))
    path.write_text("\n".join(lines) + "\n", newline="\n")


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", newline="\n")


def write_embedding_csv(path, coords: np.ndarray, labels=None):
    """One row per item: coordinates, then an optional trailing label column."""
    coords = np.asarray(coords)
    header = [f"c{i}" for i in range(coords.shape[1])]
    if labels is not None:
        header.append("label")
        rows = [list(c) + [int(l)] for c, l in zip(coords, labels)]
    else:
        rows = [list(c) for c in coords]
    write_csv(path, header, rows)


def read_embedding_csv(path):
    """Read a coordinates CSV; returns (coords, labels-or-None)."""
    lines = Path(path).read_text().strip().split("\n")
    header = lines[0].split(",")
    has_labels = header and header[-1] == "label"
    coords, labels = [], []
    for line in lines[1:]:
        parts = line.split(",")
        if has_labels:
            coords.append([float(v) for v in parts[:-1]])
            labels.append(int(parts[-1]))
        else:
            coords.append([float(v) for v in parts])
    coords = np.asarray(coords, dtype=np.float64)
    return coords, (np.asarray(labels) if has_labels else None)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, command: str, config: dict, outputs):
    """Record the resolved config and a sha256 per output file."""
    out_dir = Path(out_dir)
    manifest = {
        "command": command,
        "config": {k: format_value(v) for k, v in sorted(config.items())},
        "outputs": {Path(p).name: sha256_file(p) for p in outputs},
    }
    write_json(out_dir / MANIFEST_NAME, manifest)
    return manifest


def verify_manifest(out_dir) -> list[str]:
    """Re-hash every file listed in the manifest; returns mismatch names."""
    out_dir = Path(out_dir)
    manifest = json.loads((out_dir / MANIFEST_NAME).read_text())
    bad = []
    for name, digest in manifest["outputs"].items():
        target = out_dir / name
        if not target.exists() or sha256_file(target) != digest:
            bad.append(name)
    return bad
