"""Named, seeded random streams."""
from __future__ import annotations

import hashlib

import numpy as np


def _tag_key(tag: str) -> int:
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def rng_stream(seed: int, *tags: str | int) -> np.random.Generator:
    """Return an independent generator for (seed, purpose tags).

    Streams with different tags never share state, so adding draws to one
    stage leaves every other stage's draws unchanged.
    """
    if seed < 0:
        raise ValueError("Seed must be non-negative")
    spawn_key = tuple(_tag_key(str(tag)) for tag in tags)
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=spawn_key))
