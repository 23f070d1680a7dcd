"""Raw event ingestion, vocabulary, session segmentation, splits, batching.

Raw input is a tab-separated event log with lines ``user<TAB>item<TAB>
timestamp`` (integer timestamps).  Items surviving a frequency cut are
indexed 1..V in order of first appearance; index 0 is reserved for
padding and index V+1 for the gap marker, which never appears in stored
session files.  Sessions are fixed-length rows, short ones left-padded
with zeros.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

PAD_INDEX = 0


@dataclass
class Vocabulary:
    """Bidirectional item mapping; index 0 is padding, size+1 the gap marker."""

    item_to_index: dict[str, int]
    index_to_item: list[str]

    @property
    def size(self) -> int:
        return len(self.index_to_item) - 1

    @property
    def pad_index(self) -> int:
        return PAD_INDEX

    @property
    def mask_index(self) -> int:
        return self.size + 1


def read_events(path) -> list[tuple[str, str, int]]:
    """Parse a raw event log into (user, item, timestamp) triples."""
    events = []
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read event file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 3:
            raise DataError(f"{path}:{lineno}: expected 3 tab-separated fields, "
                            f"got {len(parts)}")
        user, item, ts = parts
        try:
            ts_int = int(ts)
        except ValueError:
            raise DataError(f"{path}:{lineno}: timestamp '{ts}' is not an integer")
        events.append((user, item, ts_int))
    return events


def build_vocabulary(events, min_item_count: int = 20) -> Vocabulary:
    """Index items seen at least min_item_count times, by first appearance."""
    if min_item_count < 1:
        raise DataError(f"min_item_count must be >= 1, got {min_item_count}")
    counts: dict[str, int] = {}
    for _, item, _ in events:
        counts[item] = counts.get(item, 0) + 1
    item_to_index: dict[str, int] = {}
    index_to_item: list[str] = ["<pad>"]
    for _, item, _ in events:
        if item in item_to_index or counts[item] < min_item_count:
            continue
        item_to_index[item] = len(index_to_item)
        index_to_item.append(item)
    return Vocabulary(item_to_index, index_to_item)


def user_streams(events, vocab: Vocabulary) -> list[list[int]]:
    """Per-user index sequences in chronological order, users by first seen.

    Ties on timestamp keep file order (stable sort); events whose item
    fell below the frequency cut are skipped.
    """
    order: list[str] = []
    per_user: dict[str, list[tuple[int, int, int]]] = {}
    for pos, (user, item, ts) in enumerate(events):
        idx = vocab.item_to_index.get(item)
        if idx is None:
            continue
        if user not in per_user:
            per_user[user] = []
            order.append(user)
        per_user[user].append((ts, pos, idx))
    streams = []
    for user in order:
        rows = sorted(per_user[user])
        streams.append([idx for _, _, idx in rows])
    return streams


def segment_sessions(streams, session_len: int, min_session_len: int) -> np.ndarray:
    """Chunk each stream into fixed rows of session_len.

    Full chunks are taken from the front; a final remainder shorter than
    min_session_len is dropped, otherwise left-padded with zeros.
    """
    k, l = session_len, min_session_len
    if k < 2:
        raise DataError(f"session_len must be >= 2, got {k}")
    if not 1 <= l <= k:
        raise DataError(f"min_session_len must be in [1, {k}], got {l}")
    rows = []
    for stream in streams:
        for start in range(0, len(stream), k):
            chunk = stream[start:start + k]
            if len(chunk) < l:
                continue
            row = [PAD_INDEX] * (k - len(chunk)) + chunk
            rows.append(row)
    if not rows:
        return np.zeros((0, k), dtype=np.int64)
    return np.asarray(rows, dtype=np.int64)


def split_dataset(rows: np.ndarray, fractions=(0.8, 0.1, 0.1), seed=0):
    """Shuffle rows with the given seed and cut train/valid/test pieces."""
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9:
        raise DataError(f"split fractions must be three values summing to 1, "
                        f"got {fractions}")
    n = rows.shape[0]
    if n < 3:
        raise DataError(f"need at least 3 sessions to split, got {n}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    shuffled = rows[perm]
    n_train = int(n * fractions[0])
    n_valid = int(n * fractions[1])
    train = shuffled[:n_train]
    valid = shuffled[n_train:n_train + n_valid]
    test = shuffled[n_train + n_valid:]
    return train, valid, test


@dataclass
class SessionBatch:
    """A [B, t] block of padded session rows plus per-row valid lengths."""

    ids: np.ndarray
    valid_len: np.ndarray

    @property
    def size(self) -> int:
        return self.ids.shape[0]

    @property
    def session_len(self) -> int:
        return self.ids.shape[1]

    @classmethod
    def from_rows(cls, rows: np.ndarray) -> "SessionBatch":
        rows = np.asarray(rows, dtype=np.int64)
        if rows.ndim != 2:
            raise DataError(f"session rows must be 2-D, got shape {rows.shape}")
        valid = (rows != PAD_INDEX).sum(axis=1).astype(np.int64)
        t = rows.shape[1]
        for i, (row, L) in enumerate(zip(rows, valid)):
            if L == 0:
                raise DataError(f"session row {i} is entirely padding")
            if (row[t - L:] == PAD_INDEX).any() or (row[:t - L] != PAD_INDEX).any():
                raise DataError(f"session row {i} has non-contiguous padding")
        return cls(rows, valid)


def batch_iter(rows: np.ndarray, batch_size: int, rng):
    """Yield shuffled SessionBatch blocks; the final short batch is kept."""
    if batch_size < 1:
        raise DataError(f"batch_size must be >= 1, got {batch_size}")
    rng = np.random.default_rng(rng)
    n = rows.shape[0]
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        take = perm[start:start + batch_size]
        yield SessionBatch.from_rows(rows[take])


# ---------------------------------------------------------------------------
# file formats


def write_sessions(path, rows: np.ndarray, vocab_size: int) -> None:
    """One session per line, space-separated, under a '#k= V=' header."""
    rows = np.asarray(rows)
    lines = [f"#k={rows.shape[1]} V={vocab_size}"]
    for row in rows:
        lines.append(" ".join(str(int(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_sessions(path) -> tuple[np.ndarray, int, int]:
    """Read a session file; returns (rows, session_len, vocab_size)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read session file {path}: {exc}") from exc
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#k="):
        raise DataError(f"{path}:1: missing '#k=<k> V=<V>' header")
    try:
        k_part, v_part = lines[0][1:].split(" ")
        k = int(k_part.split("=")[1])
        vocab_size = int(v_part.split("=")[1])
    except (ValueError, IndexError):
        raise DataError(f"{path}:1: malformed header '{lines[0]}'")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            row = [int(v) for v in line.split()]
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-integer session entry")
        if len(row) != k:
            raise DataError(f"{path}:{lineno}: expected {k} entries, got {len(row)}")
        bad = [v for v in row if v < 0 or v > vocab_size]
        if bad:
            raise DataError(f"{path}:{lineno}: index {bad[0]} outside [0, {vocab_size}]")
        rows.append(row)
    if not rows:
        raise DataError(f"{path}: no sessions after header")
    return np.asarray(rows, dtype=np.int64), k, vocab_size


def write_vocabulary(path, vocab: Vocabulary) -> None:
    lines = [f"{idx}\t{item}" for idx, item in
             enumerate(vocab.index_to_item) if idx > 0]
    Path(path).write_text("\n".join(lines) + "\n")


def read_vocabulary(path) -> Vocabulary:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read vocabulary file {path}: {exc}") from exc
    index_to_item = ["<pad>"]
    item_to_index: dict[str, int] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(f"{path}:{lineno}: expected 'index<TAB>item'")
        try:
            idx = int(parts[0])
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-integer index '{parts[0]}'")
        if idx != len(index_to_item):
            raise DataError(f"{path}:{lineno}: index {idx} out of order, "
                            f"expected {len(index_to_item)}")
        item_to_index[parts[1]] = idx
        index_to_item.append(parts[1])
    if len(index_to_item) == 1:
        raise DataError(f"{path}: empty vocabulary")
    return Vocabulary(item_to_index, index_to_item)
