"""Trained-parameter bundles on disk: JSON manifest + float64 little-endian blob.

The manifest fixes the parameter order (name, shape, offset), so the blob is
byte-stable for a fixed training run, and bundle identity can be checked by
hashing manifest + blob.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np


class BundleFormatError(ValueError):
    pass


def save_params(out_dir: Path, kind: str, params: Dict[str, np.ndarray], meta: dict) -> str:
    """Write <kind>.json + <kind>.params; returns the bundle hash."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries: List[dict] = []
    chunks: List[bytes] = []
    offset = 0
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype="<f8")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        raw = arr.tobytes()
        chunks.append(raw)
        offset += len(raw)
    manifest = {"kind": kind, "meta": meta, "params": entries}
    manifest_bytes = (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode()
    blob = b"".join(chunks)
    (out_dir / f"{kind}.json").write_bytes(manifest_bytes)
    (out_dir / f"{kind}.params").write_bytes(blob)
    return bundle_hash(manifest_bytes, blob)


def load_params(out_dir: Path, kind: str) -> Tuple[Dict[str, np.ndarray], dict, str]:
    """Returns (params, meta, bundle_hash)."""
    out_dir = Path(out_dir)
    manifest_path = out_dir / f"{kind}.json"
    blob_path = out_dir / f"{kind}.params"
    if not manifest_path.exists() or not blob_path.exists():
        raise BundleFormatError(f"missing bundle files for {kind!r} in {out_dir}")
    manifest_bytes = manifest_path.read_bytes()
    blob = blob_path.read_bytes()
    manifest = json.loads(manifest_bytes)
    if manifest.get("kind") != kind:
        raise BundleFormatError(f"bundle kind {manifest.get('kind')!r} != expected {kind!r}")
    params: Dict[str, np.ndarray] = {}
    for entry in manifest["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=start).reshape(shape)
        params[entry["name"]] = arr.copy()
    return params, manifest["meta"], bundle_hash(manifest_bytes, blob)


def bundle_hash(manifest_bytes: bytes, blob: bytes) -> str:
    h = hashlib.sha256()
    h.update(manifest_bytes)
    h.update(blob)
    return h.hexdigest()
