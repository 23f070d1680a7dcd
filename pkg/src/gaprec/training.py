"""Training loop with Adam, dynamic gap sampling, and early stopping.

Gap positions are redrawn for every batch (dynamic masking), validation
MRR@5 is measured after each epoch, and the best parameter snapshot is
restored when patience runs out.  All randomness derives from one root
seed split into per-purpose, per-epoch streams, so a rerun with the same
seed reproduces the log bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Tensor, backward
from .data import SessionBatch, batch_iter
from .errors import ConfigError, TrainingDiverged
from .masking import sample_batch_gaps
from .metrics import EvalReport, evaluate_last_item
from .models import MODEL_KINDS, ModelConfig, MostPopModel, build_model, \
    nextitnet_plus_expand
from .optim import AdamState, adam_step, zero_grads
from .seeding import child_rng

LOG_HEADER = "epoch,step,train_loss,val_mrr5"


@dataclass
class TrainConfig:
    model_kind: str = "grec"
    learning_rate: float = 0.001
    batch_size: int = 256
    max_epochs: int = 20
    patience: int = 3
    gap_fraction: float = 0.5
    seed: int = 0
    max_steps: int = 0          # 0 means no step cap

    def __post_init__(self):
        if self.model_kind not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind '{self.model_kind}', "
                              f"expected one of {MODEL_KINDS}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be >= 0, "
                              f"got {self.learning_rate}")


@dataclass
class LogRow:
    """One epoch summary; sessions_seen counts rows consumed so far."""

    epoch: int
    step: int
    sessions_seen: int
    train_loss: float
    val_mrr5: float


@dataclass
class TrainResult:
    model: object
    log_rows: list[LogRow]
    step_losses: list[float] = field(default_factory=list)
    best_epoch: int = 0
    best_val_mrr5: float = 0.0
    report: EvalReport | None = None


def _snapshot(params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    return {name: p.data.copy() for name, p in params.items()}


def _restore(params: dict[str, Tensor], snap: dict[str, np.ndarray]) -> None:
    for name, p in params.items():
        p.data = snap[name].copy()


def train(train_rows: np.ndarray, valid_rows: np.ndarray,
          model_config: ModelConfig, config: TrainConfig) -> TrainResult:
    """Fit a model of config.model_kind and return it with its log."""
    train_rows = np.asarray(train_rows, dtype=np.int64)
    valid_rows = np.asarray(valid_rows, dtype=np.int64)
    if train_rows.shape[0] == 0 or valid_rows.shape[0] == 0:
        raise ConfigError("train and validation splits must be nonempty")

    if config.model_kind == "mostpop":
        model = MostPopModel(model_config).fit(train_rows)
        report = evaluate_last_item(model, valid_rows, seed=config.seed, epoch=0)
        row = LogRow(epoch=1, step=0, sessions_seen=0, train_loss=0.0,
                     val_mrr5=report.mrr5)
        return TrainResult(model, [row], best_epoch=1,
                           best_val_mrr5=report.mrr5, report=report)

    if config.model_kind == "nextitnet_plus":
        train_rows = nextitnet_plus_expand(train_rows)

    rng_init = child_rng(config.seed, "init")
    model = build_model(config.model_kind, model_config, rng_init)
    adam = AdamState(learning_rate=config.learning_rate)
    mask_index = model_config.mask_index

    result = TrainResult(model, [])
    best_snap = _snapshot(model.params)
    best_val = -1.0
    stale_epochs = 0
    step = 0
    sessions_seen = 0
    capped = False

    for epoch in range(1, config.max_epochs + 1):
        shuffle_rng = child_rng(config.seed, "shuffle", epoch)
        gap_rng = child_rng(config.seed, "gaps", epoch)
        epoch_losses = []
        for batch in batch_iter(train_rows, config.batch_size, shuffle_rng):
            if model.needs_gaps:
                plans = sample_batch_gaps(batch, config.gap_fraction, gap_rng,
                                          mask_index)
                loss = model.loss(batch, plans)
            else:
                loss = model.loss(batch)
            loss_value = loss.item()
            if not np.isfinite(loss_value):
                raise TrainingDiverged(
                    f"non-finite loss {loss_value} at epoch {epoch} step "
                    f"{step + 1} (model={config.model_kind}, "
                    f"lr={config.learning_rate})")
            backward(loss)
            adam_step(model.params, adam)
            zero_grads(model.params)
            step += 1
            sessions_seen += batch.size
            epoch_losses.append(loss_value)
            result.step_losses.append(loss_value)
            if config.max_steps and step >= config.max_steps:
                capped = True
                break
        report = evaluate_last_item(model, valid_rows, seed=config.seed,
                                    epoch=epoch)
        result.log_rows.append(LogRow(
            epoch=epoch, step=step, sessions_seen=sessions_seen,
            train_loss=float(np.mean(epoch_losses)), val_mrr5=report.mrr5))
        if report.mrr5 > best_val:
            best_val = report.mrr5
            best_snap = _snapshot(model.params)
            result.best_epoch = epoch
            result.report = report
            stale_epochs = 0
        else:
            stale_epochs += 1
            if stale_epochs >= config.patience:
                break
        if capped:
            break

    _restore(model.params, best_snap)
    result.best_val_mrr5 = best_val
    return result


def write_training_log(path, log_rows: list[LogRow]) -> None:
    lines = [LOG_HEADER]
    lines += [f"{r.epoch},{r.step},{r.train_loss:.6f},{r.val_mrr5:.6f}"
              for r in log_rows]
    Path(path).write_text("\n".join(lines) + "\n")


def ema(values, window: int = 50) -> list[float]:
    """Exponential moving average with the usual 2/(window+1) blend."""
    alpha = 2.0 / (window + 1)
    out = []
    acc = None
    for v in values:
        acc = v if acc is None else alpha * v + (1 - alpha) * acc
        out.append(acc)
    return out


def site_accuracy(model, rows: np.ndarray, gap_fraction: float = 0.5,
                  rng=None, batch_size: int = 256) -> float:
    """Fraction of prediction sites whose top-scored item is the target.

    Gap models are probed on freshly sampled gaps; next-item models on
    their full site set.  The padding class never wins the argmax race
    because it is dropped before comparison.
    """
    rows = np.asarray(rows, dtype=np.int64)
    rng = np.random.default_rng(rng)
    hits = 0
    total = 0
    for start in range(0, rows.shape[0], batch_size):
        batch = SessionBatch.from_rows(rows[start:start + batch_size])
        if model.needs_gaps:
            plans = sample_batch_gaps(batch, gap_fraction, rng,
                                      model.config.mask_index)
            logits, targets = model.site_logits(batch, plans)
        else:
            logits, targets = model.site_logits(batch)
        predicted = logits.data[:, 1:].argmax(axis=1) + 1
        hits += int((predicted == targets).sum())
        total += targets.size
    return hits / total
