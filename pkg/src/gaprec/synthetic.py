"""Synthetic session corpora with planted, verifiable structure.

Two regimes share a planted successor permutation over items 1..V that
forms a single cycle, so every item has exactly one "correct" follower.

markov        noisy walk: each step follows the planted successor with
              probability successor_prob, otherwise jumps uniformly to
              one of the other V-1 items.
basket-mixed  deterministic successor walk interleaved with unordered
              baskets: a fixed subset of trigger items each owns a fixed
              3-item basket that is emitted in random order right after
              the trigger, after which the walk resumes from the
              trigger's successor.  Set structure is predictable, local
              order inside a basket is not.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .seeding import child_rng

REGIMES = ("markov", "basket-mixed")


@dataclass
class SyntheticSpec:
    n_items: int
    n_sessions: int
    session_len: int
    regime: str = "markov"
    seed: int = 0
    successor_prob: float = 0.8
    n_triggers: int = 0          # 0 means n_items // 5
    basket_size: int = 3

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise DataError(f"unknown synthetic regime '{self.regime}', "
                            f"expected one of {REGIMES}")
        if self.n_items < 4:
            raise DataError(f"synthetic corpora need n_items >= 4, got {self.n_items}")
        if self.n_sessions < 1 or self.session_len < 2:
            raise DataError("n_sessions must be >= 1 and session_len >= 2")
        if not 0.0 <= self.successor_prob <= 1.0:
            raise DataError(f"successor_prob must lie in [0, 1], "
                            f"got {self.successor_prob}")
        if self.n_triggers == 0:
            self.n_triggers = max(1, self.n_items // 5)
        if self.basket_size < 2:
            raise DataError(f"basket_size must be >= 2, got {self.basket_size}")
        if self.regime == "basket-mixed":
            if self.n_triggers + self.basket_size >= self.n_items:
                raise DataError("basket-mixed needs n_items > n_triggers + "
                                "basket_size so baskets avoid trigger items")


@dataclass
class SyntheticCorpus:
    """Generated rows plus the planted structure for oracle checks."""

    spec: SyntheticSpec
    rows: np.ndarray                     # [n_sessions, session_len]
    successor: np.ndarray                # successor[i] for items 1..V; [V+1]
    triggers: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    baskets: dict[int, np.ndarray] = field(default_factory=dict)


def _planted_successor(n_items: int, rng: np.random.Generator) -> np.ndarray:
    """A single-cycle permutation of 1..V; entry 0 is unused."""
    cycle = rng.permutation(np.arange(1, n_items + 1))
    successor = np.zeros(n_items + 1, dtype=np.int64)
    for a, b in zip(cycle, np.roll(cycle, -1)):
        successor[a] = b
    return successor


def generate_corpus(spec: SyntheticSpec) -> SyntheticCorpus:
    """Build a corpus along with its planted structure."""
    struct_rng = child_rng(spec.seed, "synthetic", "structure")
    walk_rng = child_rng(spec.seed, "synthetic", "walk")
    successor = _planted_successor(spec.n_items, struct_rng)
    if spec.regime == "markov":
        rows = _markov_rows(spec, successor, walk_rng)
        return SyntheticCorpus(spec, rows, successor)
    triggers = np.sort(struct_rng.choice(
        np.arange(1, spec.n_items + 1), size=spec.n_triggers, replace=False))
    non_triggers = np.setdiff1d(np.arange(1, spec.n_items + 1), triggers)
    baskets = {}
    for trig in triggers:
        members = struct_rng.choice(non_triggers, size=spec.basket_size,
                                    replace=False)
        baskets[int(trig)] = np.sort(members)
    rows = _basket_rows(spec, successor, set(int(t) for t in triggers),
                        baskets, walk_rng)
    return SyntheticCorpus(spec, rows, successor, triggers, baskets)


def generate_synthetic(spec: SyntheticSpec) -> np.ndarray:
    """Session rows only; structure stays internal."""
    return generate_corpus(spec).rows


def _markov_rows(spec, successor, rng):
    v, n, k = spec.n_items, spec.n_sessions, spec.session_len
    p = spec.successor_prob
    rows = np.zeros((n, k), dtype=np.int64)
    for s in range(n):
        cur = int(rng.integers(1, v + 1))
        rows[s, 0] = cur
        for pos in range(1, k):
            if rng.random() < p:
                cur = int(successor[cur])
            else:
                # uniform over the other V-1 items
                jump = int(rng.integers(1, v))
                cur = jump if jump < cur else jump + 1
            rows[s, pos] = cur
    return rows


def _basket_rows(spec, successor, triggers, baskets, rng):
    v, n, k = spec.n_items, spec.n_sessions, spec.session_len
    rows = np.zeros((n, k), dtype=np.int64)
    for s in range(n):
        out = []
        cur = int(rng.integers(1, v + 1))
        out.append(cur)
        while len(out) < k:
            if cur in triggers:
                for member in rng.permutation(baskets[cur]):
                    out.append(int(member))
                    if len(out) == k:
                        break
                cur = int(successor[cur])
                if len(out) < k:
                    out.append(cur)
            else:
                cur = int(successor[cur])
                out.append(cur)
        rows[s] = out[:k]
    return rows
