"""Counter-based reproducible random streams.

Streams are keyed by (master_seed, *key parts); string parts hash through
sha256 so keys are stable across processes and platforms. Adding grid points
to a sweep never perturbs the streams of existing points.
"""
from __future__ import annotations

import hashlib

import numpy as np


def stable_part(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFFFFFFFFFF
    if isinstance(part, str):
        digest = hashlib.sha256(part.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "big")
    raise TypeError(f"stream key parts must be int or str, got {type(part)}")


def stream(master_seed: int, *parts) -> np.random.Generator:
    """A Philox (counter-based) generator keyed by (master_seed, *parts)."""
    key = [stable_part(master_seed)] + [stable_part(p) for p in parts]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def stream_seed(master_seed: int, *parts) -> int:
    """A derived 63-bit integer seed, for APIs that take plain seeds."""
    return int(stream(master_seed, *parts).integers(2 ** 63))
