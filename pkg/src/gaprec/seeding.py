"""Deterministic seed derivation.

A single root seed is split into independent child streams keyed by
string or integer tags, so data shuffling, mask sampling, and parameter
init each get their own generator and cannot perturb one another when a
subsystem draws a different number of variates.
"""

from __future__ import annotations

import zlib

import numpy as np


def _tag_entropy(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        if tag < 0:
            raise ValueError(f"seed tags must be non-negative, got {tag}")
        return int(tag)
    if isinstance(tag, str):
        return zlib.crc32(tag.encode("utf-8"))
    raise TypeError(f"seed tag must be str or int, got {type(tag).__name__}")


def child_seed(root_seed: int, *tags) -> np.random.SeedSequence:
    """Derive a named SeedSequence from the root seed and tag path."""
    entropy = [int(root_seed)] + [_tag_entropy(t) for t in tags]
    return np.random.SeedSequence(entropy)


def child_rng(root_seed: int, *tags) -> np.random.Generator:
    """Generator seeded from child_seed(root_seed, *tags)."""
    return np.random.default_rng(child_seed(root_seed, *tags))
