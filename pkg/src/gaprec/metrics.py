"""Ranked-retrieval metrics and the last-item evaluation protocol.

Single-ground-truth forms at cutoff N: a rank within the cutoff earns
(1/rank, 1, 1/log2(rank+1)) for MRR/HR/NDCG, zero otherwise.  The rank
is computed against the full item list with ties broken by ascending
item index, so the ground truth loses any tie against a smaller index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import PAD_INDEX
from .errors import ConfigError, DataError

METRIC_FIELDS = ("mrr5", "mrr20", "hr5", "hr20", "ndcg5", "ndcg20")
CUTOFFS = (5, 20)


def _check_rank(rank: int, n: int) -> None:
    if rank < 1:
        raise ConfigError(f"rank must be >= 1, got {rank}")
    if n < 1:
        raise ConfigError(f"cutoff must be >= 1, got {n}")


def mrr_at_n(rank: int, n: int) -> float:
    _check_rank(rank, n)
    return 1.0 / rank if rank <= n else 0.0


def hr_at_n(rank: int, n: int) -> float:
    _check_rank(rank, n)
    return 1.0 if rank <= n else 0.0


def ndcg_at_n(rank: int, n: int) -> float:
    _check_rank(rank, n)
    return 1.0 / math.log2(rank + 1) if rank <= n else 0.0


def rank_of_truth(scores: np.ndarray, truth_item: int) -> int:
    """1-based rank of truth_item among scores for items 1..V."""
    scores = np.asarray(scores)
    v = scores.shape[0]
    if not 1 <= truth_item <= v:
        raise DataError(f"ground-truth item {truth_item} outside [1, {v}]")
    s = scores[truth_item - 1]
    better = int((scores > s).sum())
    tied_before = int((scores[:truth_item - 1] == s).sum())
    return 1 + better + tied_before


@dataclass
class EvalReport:
    """Six metric values plus run bookkeeping, in one stable field order."""

    model_kind: str
    seed: int
    epoch: int
    n_queries: int
    n_skipped: int
    mrr5: float
    mrr20: float
    hr5: float
    hr20: float
    ndcg5: float
    ndcg20: float

    def __post_init__(self):
        for name in METRIC_FIELDS:
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise DataError(f"metric {name}={value} outside [0, 1]")
        for family in ("mrr", "hr", "ndcg"):
            lo, hi = getattr(self, family + "5"), getattr(self, family + "20")
            if lo > hi + 1e-12:
                raise DataError(f"{family}5={lo} exceeds {family}20={hi}")

    def to_text(self) -> str:
        lines = [f"model={self.model_kind}", f"seed={self.seed}",
                 f"epoch={self.epoch}", f"n_queries={self.n_queries}",
                 f"n_skipped={self.n_skipped}"]
        lines += [f"{name}={getattr(self, name):.6f}" for name in METRIC_FIELDS]
        return "\n".join(lines) + "\n"

    @staticmethod
    def csv_header() -> str:
        return "model,seed,epoch,n_queries,n_skipped," + ",".join(METRIC_FIELDS)

    def to_csv_row(self) -> str:
        head = f"{self.model_kind},{self.seed},{self.epoch}," \
               f"{self.n_queries},{self.n_skipped}"
        return head + "," + ",".join(f"{getattr(self, name):.6f}"
                                     for name in METRIC_FIELDS)


def evaluate_last_item(model, rows: np.ndarray, seed: int = 0,
                       epoch: int = 0) -> EvalReport:
    """Rank each row's final item given everything before it.

    Rows with fewer than two valid items cannot form a query and are
    counted as skipped rather than silently dropped.
    """
    rows = np.asarray(rows, dtype=np.int64)
    v = model.config.vocab_size
    if max(CUTOFFS) > v:
        raise ConfigError(f"cutoff {max(CUTOFFS)} exceeds vocabulary size {v}")
    queries, truths = [], []
    skipped = 0
    for row in rows:
        valid = row[row != PAD_INDEX]
        if valid.size < 2:
            skipped += 1
            continue
        queries.append(valid[:-1])
        truths.append(int(valid[-1]))
    if not queries:
        raise DataError("no evaluable rows: every session has valid_len < 2")
    scores = model.score_queries(queries)
    totals = {name: 0.0 for name in METRIC_FIELDS}
    for row_scores, truth in zip(scores, truths):
        rank = rank_of_truth(row_scores, truth)
        for n in CUTOFFS:
            totals[f"mrr{n}"] += mrr_at_n(rank, n)
            totals[f"hr{n}"] += hr_at_n(rank, n)
            totals[f"ndcg{n}"] += ndcg_at_n(rank, n)
    n_q = len(queries)
    return EvalReport(model_kind=model.kind, seed=seed, epoch=epoch,
                      n_queries=n_q, n_skipped=skipped,
                      **{name: totals[name] / n_q for name in METRIC_FIELDS})


def save_report(report: EvalReport, path) -> None:
    """Text form next to a CSV twin (same stem, .csv suffix)."""
    from pathlib import Path
    path = Path(path)
    path.write_text(report.to_text())
    csv_path = path.with_suffix(".csv")
    csv_path.write_text(report.csv_header() + "\n" + report.to_csv_row() + "\n")
