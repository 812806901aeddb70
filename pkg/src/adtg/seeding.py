"""Deterministic seed derivation.

Every stage and epoch derives its RNG seed from the root seed and a label
via sha256, so runs are reproducible across processes (no salted hashing).
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(root: int, *labels: object) -> int:
    text = ":".join([str(int(root))] + [str(l) for l in labels])
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:8], "little")


def rng_for(root: int, *labels: object) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, *labels))
