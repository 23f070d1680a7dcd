"""Gap sampling for the fill-in-the-blank training objective.

For a row with valid_len items the gap count is round(gap_fraction *
(valid_len - 1)) with half-up rounding, clamped to [1, valid_len - 1].
Gap positions are drawn uniformly without replacement from the valid
region excluding its first position, so a gap always has at least one
observed item somewhere to its left and the prediction site (one before
the gap) is never padding.  Plans are sampled fresh per batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import PAD_INDEX, SessionBatch
from .errors import DataError


def gap_count(valid_len: int, gap_fraction: float) -> int:
    """Half-up rounded share of maskable positions, at least one, never all."""
    if valid_len < 2:
        raise DataError(f"gap sampling needs valid_len >= 2, got {valid_len}")
    if not 0.0 < gap_fraction <= 1.0:
        raise DataError(f"gap_fraction must lie in (0, 1], got {gap_fraction}")
    raw = int(math.floor(gap_fraction * (valid_len - 1) + 0.5))
    return max(1, min(valid_len - 1, raw))


@dataclass
class MaskPlan:
    """Chosen gap positions for one row, with originals kept as targets."""

    positions: np.ndarray    # ascending 0-based indices into the padded row
    targets: np.ndarray      # original item indices at those positions
    gapped: np.ndarray       # row copy with positions overwritten by the marker
    valid_len: int
    mask_index: int

    @property
    def count(self) -> int:
        return len(self.positions)


def sample_gaps(row: np.ndarray, valid_len: int, gap_fraction: float,
                rng: np.random.Generator, mask_index: int) -> MaskPlan:
    """Draw one gap plan for a padded row."""
    row = np.asarray(row, dtype=np.int64)
    t = row.shape[0]
    if not 2 <= valid_len <= t:
        raise DataError(f"valid_len {valid_len} outside [2, {t}]")
    first_valid = t - valid_len
    m = gap_count(int(valid_len), gap_fraction)
    eligible = np.arange(first_valid + 1, t)
    positions = np.sort(rng.choice(eligible, size=m, replace=False))
    targets = row[positions].copy()
    if (targets == PAD_INDEX).any():
        raise DataError("gap position landed on padding; row has stray zeros")
    gapped = row.copy()
    gapped[positions] = mask_index
    return MaskPlan(positions, targets, gapped, int(valid_len), mask_index)


def apply_gaps(plan: MaskPlan, row: np.ndarray) -> np.ndarray:
    """Copy a row with the plan's positions replaced by the gap marker.

    Idempotent: re-applying to an already gapped row changes nothing.
    """
    out = np.asarray(row, dtype=np.int64).copy()
    out[plan.positions] = plan.mask_index
    return out


def sample_batch_gaps(batch: SessionBatch, gap_fraction: float,
                      rng: np.random.Generator, mask_index: int) -> list[MaskPlan]:
    """One fresh plan per row; rows too short to mask are rejected."""
    return [sample_gaps(batch.ids[i], int(batch.valid_len[i]), gap_fraction,
                        rng, mask_index)
            for i in range(batch.size)]


def gapped_ids(batch: SessionBatch, plans: list[MaskPlan]) -> np.ndarray:
    """Stack per-row gapped copies into one [B, t] array."""
    if len(plans) != batch.size:
        raise DataError(f"{len(plans)} plans for batch of {batch.size} rows")
    return np.stack([p.gapped for p in plans])
