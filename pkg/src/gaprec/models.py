"""The session-model family.

GRecModel is the centerpiece: a non-causal encoder reads the gapped
sequence, its output is summed with the decoder's own embedding of the
complete sequence, an inverted-bottleneck projector mixes the two, and a
causal decoder predicts each gapped item from the site one step before
it.  The comparison family shares the same block machinery:

    NextItNetModel     causal stack only, next-item objective
                       (use_projector=True gives the projector variant)
    TwoWayModel        forward and backward causal stacks with a shared
                       softmax over concatenated hidden states; only the
                       forward stack serves inference
    EncoderOnlyModel   softmax directly on the encoder at gap positions
    MostPopModel       global popularity ranking, no parameters to train

All scoring excludes the padding and gap-marker classes and breaks ties
by ascending item index.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import (ConvKernel, Tensor, add, concat_last, conv1d,
                       embedding_lookup, gather_positions, layer_norm,
                       masked_softmax_xent, parameter, pointwise, relu,
                       zeros_parameter)
from .data import PAD_INDEX, SessionBatch
from .errors import ConfigError, DataError, ShapeError
from .masking import MaskPlan, gapped_ids

MODEL_KINDS = ("grec", "nextitnet", "nextitnet_plus", "tnextitnet",
               "encoder_only", "mostpop")

DEFAULT_DILATIONS = (1, 2, 4, 8, 1, 2, 4, 8)


@dataclass
class ModelConfig:
    """Architecture hyperparameters shared by the whole family."""

    vocab_size: int
    session_len: int
    embed_dim: int = 64
    proj_dim: int = 0                 # 0 resolves to 2 * embed_dim
    kernel_width: int = 3
    encoder_dilations: tuple = DEFAULT_DILATIONS
    decoder_dilations: tuple = DEFAULT_DILATIONS
    gap_fraction: float = 0.5
    use_projector: bool = True

    def __post_init__(self):
        self.encoder_dilations = tuple(int(d) for d in self.encoder_dilations)
        self.decoder_dilations = tuple(int(d) for d in self.decoder_dilations)
        if self.vocab_size < 1:
            raise ConfigError(f"vocab_size must be >= 1, got {self.vocab_size}")
        if self.session_len < 2:
            raise ConfigError(f"session_len must be >= 2, got {self.session_len}")
        if self.embed_dim < 1:
            raise ConfigError(f"embed_dim must be >= 1, got {self.embed_dim}")
        if self.kernel_width < 2:
            raise ConfigError(f"kernel_width must be >= 2, got {self.kernel_width}")
        if self.proj_dim == 0:
            self.proj_dim = 2 * self.embed_dim
        if not 0.0 < self.gap_fraction <= 1.0:
            raise ConfigError(f"gap_fraction must lie in (0, 1], "
                              f"got {self.gap_fraction}")
        for name, dil in (("encoder_dilations", self.encoder_dilations),
                          ("decoder_dilations", self.decoder_dilations)):
            if not dil or len(dil) % 2 != 0:
                raise ConfigError(f"{name} must be a nonempty even-length list "
                                  f"(blocks wrap two conv layers), got {dil}")
            if any(d < 1 for d in dil):
                raise ConfigError(f"{name} entries must be >= 1, got {dil}")

    @property
    def pad_index(self) -> int:
        return PAD_INDEX

    @property
    def mask_index(self) -> int:
        return self.vocab_size + 1

    @property
    def n_classes(self) -> int:
        # softmax classes 0..V; the gap marker has no class
        return self.vocab_size + 1


class ResidualBlock:
    """x + relu(norm(conv2(relu(norm(conv1(x)))))) over two dilated convs."""

    def __init__(self, prefix: str, dim: int, width: int, dilations: tuple,
                 causal: bool, rng, dtype, params: dict):
        d1, d2 = dilations
        self.conv1 = ConvKernel.create(width, dim, dim, d1, causal, rng, dtype=dtype)
        self.conv2 = ConvKernel.create(width, dim, dim, d2, causal, rng, dtype=dtype)
        self.norm1_gain = Tensor(np.ones(dim, dtype=dtype), requires_grad=True)
        self.norm1_shift = zeros_parameter((dim,), dtype)
        self.norm2_gain = Tensor(np.ones(dim, dtype=dtype), requires_grad=True)
        self.norm2_shift = zeros_parameter((dim,), dtype)
        params[f"{prefix}.conv1.weights"] = self.conv1.weights
        params[f"{prefix}.conv1.bias"] = self.conv1.bias
        params[f"{prefix}.norm1.gain"] = self.norm1_gain
        params[f"{prefix}.norm1.shift"] = self.norm1_shift
        params[f"{prefix}.conv2.weights"] = self.conv2.weights
        params[f"{prefix}.conv2.bias"] = self.conv2.bias
        params[f"{prefix}.norm2.gain"] = self.norm2_gain
        params[f"{prefix}.norm2.shift"] = self.norm2_shift

    def apply(self, x: Tensor) -> Tensor:
        h = relu(layer_norm(conv1d(x, self.conv1), self.norm1_gain, self.norm1_shift))
        h = relu(layer_norm(conv1d(h, self.conv2), self.norm2_gain, self.norm2_shift))
        return add(x, h)


class BlockStack:
    """Residual blocks consuming the dilation list in consecutive pairs."""

    def __init__(self, prefix: str, dim: int, width: int, dilations: tuple,
                 causal: bool, rng, dtype, params: dict):
        if not causal and width % 2 == 0:
            raise ConfigError(f"non-causal stacks need odd kernel_width, got {width}")
        self.blocks = [
            ResidualBlock(f"{prefix}.block{i}", dim, width,
                          (dilations[2 * i], dilations[2 * i + 1]),
                          causal, rng, dtype, params)
            for i in range(len(dilations) // 2)
        ]
        self.receptive_field = 1 + sum((width - 1) * d for d in dilations)

    def apply(self, x: Tensor) -> Tensor:
        for block in self.blocks:
            x = block.apply(x)
        return x


def _check_sites(positions: np.ndarray, first_valid: int) -> None:
    # gather happens one step left of each gap; that site must be a real item
    if positions.size and positions.min() <= first_valid:
        raise DataError(f"gap at position {positions.min()} has no observed "
                        f"item before it (valid region starts at {first_valid})")


def _site_arrays(plans: list[MaskPlan], session_len: int):
    rows, cols, targets = [], [], []
    for i, plan in enumerate(plans):
        _check_sites(plan.positions, session_len - plan.valid_len)
        rows.append(np.full(plan.count, i, dtype=np.int64))
        cols.append(plan.positions - 1)
        targets.append(plan.targets)
    return (np.concatenate(rows), np.concatenate(cols), np.concatenate(targets))


class GRecModel:
    """Gap-filling encoder-decoder with projector bridge and softmax head."""

    kind = "grec"
    needs_gaps = True

    def __init__(self, config: ModelConfig, rng: np.random.Generator,
                 dtype=np.float32):
        self.config = config
        self.dtype = dtype
        v, d = config.vocab_size, config.embed_dim
        params: dict[str, Tensor] = {}
        # encoder table carries one extra row for the gap marker
        self.enc_embedding = parameter(rng, (v + 2, d), dtype=dtype)
        self.dec_embedding = parameter(rng, (v + 1, d), dtype=dtype)
        params["enc_embedding"] = self.enc_embedding
        params["dec_embedding"] = self.dec_embedding
        self.encoder = BlockStack("encoder", d, config.kernel_width,
                                  config.encoder_dilations, False, rng, dtype, params)
        if config.use_projector:
            f = config.proj_dim
            self.proj_up_w = parameter(rng, (d, f), dtype=dtype)
            self.proj_up_b = zeros_parameter((f,), dtype)
            # zero start makes the projector an identity at step 0
            self.proj_down_w = zeros_parameter((f, d), dtype)
            self.proj_down_b = zeros_parameter((d,), dtype)
            params["projector.up.weights"] = self.proj_up_w
            params["projector.up.bias"] = self.proj_up_b
            params["projector.down.weights"] = self.proj_down_w
            params["projector.down.bias"] = self.proj_down_b
        self.decoder = BlockStack("decoder", d, config.kernel_width,
                                  config.decoder_dilations, True, rng, dtype, params)
        self.softmax_w = parameter(rng, (d, config.n_classes), dtype=dtype)
        self.softmax_b = zeros_parameter((config.n_classes,), dtype)
        params["softmax.weights"] = self.softmax_w
        params["softmax.bias"] = self.softmax_b
        self.params = params

    def encode(self, gapped: np.ndarray) -> Tensor:
        return self.encoder.apply(embedding_lookup(self.enc_embedding, gapped))

    def project(self, enc_out: Tensor, dec_emb: Tensor) -> Tensor:
        agg = add(enc_out, dec_emb)
        if not self.config.use_projector:
            return agg
        up = relu(pointwise(agg, self.proj_up_w, self.proj_up_b))
        return add(agg, pointwise(up, self.proj_down_w, self.proj_down_b))

    def hidden_states(self, ids: np.ndarray, gapped: np.ndarray) -> Tensor:
        enc_out = self.encode(gapped)
        dec_emb = embedding_lookup(self.dec_embedding, ids)
        return self.decoder.apply(self.project(enc_out, dec_emb))

    def site_logits(self, batch: SessionBatch, plans: list[MaskPlan]):
        """Logit rows for every gap site, plus their targets."""
        hidden = self.hidden_states(batch.ids, gapped_ids(batch, plans))
        rows, cols, targets = _site_arrays(plans, batch.session_len)
        sites = gather_positions(hidden, rows, cols)
        return pointwise(sites, self.softmax_w, self.softmax_b), targets

    def loss(self, batch: SessionBatch, plans: list[MaskPlan]) -> Tensor:
        logits, targets = self.site_logits(batch, plans)
        return masked_softmax_xent(logits, targets)

    def score_queries(self, queries) -> np.ndarray:
        """Scores [n, V] for the item following each prefix (no gaps fed)."""
        return _score_batched(queries, self.config.session_len,
                              self._score_block, self.config.vocab_size)

    def _score_block(self, ids: np.ndarray) -> np.ndarray:
        hidden = self.hidden_states(ids, ids)
        logits = hidden.data[:, -1, :] @ self.softmax_w.data + self.softmax_b.data
        return logits[:, 1:]


def _next_item_sites(batch: SessionBatch, skip_first_valid: bool = False):
    """Sites (row, col) predicting batch.ids[row, col + 1] for non-PAD targets.

    A left-padded row gets a site one step before its first item, where
    the model predicts the opener from padding alone; skip_first_valid
    drops exactly that site.
    """
    rows, cols, targets = [], [], []
    t = batch.session_len
    for i in range(batch.size):
        first_valid = t - int(batch.valid_len[i])
        start = first_valid - 1 if first_valid > 0 else 0
        if skip_first_valid and first_valid > 0:
            start = first_valid
        cols_i = np.arange(start, t - 1, dtype=np.int64)
        rows.append(np.full(cols_i.shape, i, dtype=np.int64))
        cols.append(cols_i)
        targets.append(batch.ids[i, cols_i + 1])
    return (np.concatenate(rows), np.concatenate(cols), np.concatenate(targets))


class NextItNetModel:
    """Causal next-item stack; with use_projector it becomes the
    projector-equipped variant from the ablation grid."""

    kind = "nextitnet"
    needs_gaps = False

    def __init__(self, config: ModelConfig, rng: np.random.Generator,
                 dtype=np.float32):
        self.config = config
        self.dtype = dtype
        v, d = config.vocab_size, config.embed_dim
        params: dict[str, Tensor] = {}
        self.embedding = parameter(rng, (v + 1, d), dtype=dtype)
        params["embedding"] = self.embedding
        if config.use_projector:
            f = config.proj_dim
            self.proj_up_w = parameter(rng, (d, f), dtype=dtype)
            self.proj_up_b = zeros_parameter((f,), dtype)
            self.proj_down_w = zeros_parameter((f, d), dtype)
            self.proj_down_b = zeros_parameter((d,), dtype)
            params["projector.up.weights"] = self.proj_up_w
            params["projector.up.bias"] = self.proj_up_b
            params["projector.down.weights"] = self.proj_down_w
            params["projector.down.bias"] = self.proj_down_b
        self.decoder = BlockStack("decoder", d, config.kernel_width,
                                  config.decoder_dilations, True, rng, dtype, params)
        self.softmax_w = parameter(rng, (d, config.n_classes), dtype=dtype)
        self.softmax_b = zeros_parameter((config.n_classes,), dtype)
        params["softmax.weights"] = self.softmax_w
        params["softmax.bias"] = self.softmax_b
        self.params = params

    def hidden_states(self, ids: np.ndarray) -> Tensor:
        x = embedding_lookup(self.embedding, ids)
        if self.config.use_projector:
            up = relu(pointwise(x, self.proj_up_w, self.proj_up_b))
            x = add(x, pointwise(up, self.proj_down_w, self.proj_down_b))
        return self.decoder.apply(x)

    def site_logits(self, batch: SessionBatch, skip_first_valid: bool = False):
        hidden = self.hidden_states(batch.ids)
        rows, cols, targets = _next_item_sites(batch, skip_first_valid)
        sites = gather_positions(hidden, rows, cols)
        return pointwise(sites, self.softmax_w, self.softmax_b), targets

    def loss(self, batch: SessionBatch, skip_first_valid: bool = False) -> Tensor:
        logits, targets = self.site_logits(batch, skip_first_valid)
        return masked_softmax_xent(logits, targets)

    def score_queries(self, queries) -> np.ndarray:
        return _score_batched(queries, self.config.session_len,
                              self._score_block, self.config.vocab_size)

    def _score_block(self, ids: np.ndarray) -> np.ndarray:
        hidden = self.hidden_states(ids)
        logits = hidden.data[:, -1, :] @ self.softmax_w.data + self.softmax_b.data
        return logits[:, 1:]


class TwoWayModel:
    """Joint forward/backward next-item model with a shared 2d-wide head.

    The backward stack reads each row's valid region reversed, so its
    "next item" is the original previous one.  At generation time the
    backward direction has nothing to condition on, so scoring uses the
    forward stack with zeros in the backward half of the head input.
    """

    kind = "tnextitnet"
    needs_gaps = False

    def __init__(self, config: ModelConfig, rng: np.random.Generator,
                 dtype=np.float32):
        self.config = config
        self.dtype = dtype
        v, d = config.vocab_size, config.embed_dim
        params: dict[str, Tensor] = {}
        self.embedding = parameter(rng, (v + 1, d), dtype=dtype)
        params["embedding"] = self.embedding
        self.forward_stack = BlockStack("forward", d, config.kernel_width,
                                        config.decoder_dilations, True, rng,
                                        dtype, params)
        self.backward_stack = BlockStack("backward", d, config.kernel_width,
                                         config.decoder_dilations, True, rng,
                                         dtype, params)
        self.softmax_w = parameter(rng, (2 * d, config.n_classes), dtype=dtype)
        self.softmax_b = zeros_parameter((config.n_classes,), dtype)
        params["softmax.weights"] = self.softmax_w
        params["softmax.bias"] = self.softmax_b
        self.params = params

    def _half_logits(self, sites: Tensor, half: str) -> Tensor:
        zeros = Tensor(np.zeros_like(sites.data))
        cat = concat_last(sites, zeros) if half == "forward" else \
            concat_last(zeros, sites)
        return pointwise(cat, self.softmax_w, self.softmax_b)

    def _direction_loss(self, ids: np.ndarray, batch: SessionBatch,
                        stack: BlockStack, half: str) -> Tensor:
        hidden = stack.apply(embedding_lookup(self.embedding, ids))
        view = SessionBatch(ids, batch.valid_len)
        rows, cols, targets = _next_item_sites(view)
        sites = gather_positions(hidden, rows, cols)
        return masked_softmax_xent(self._half_logits(sites, half), targets)

    def loss(self, batch: SessionBatch) -> Tensor:
        forward = self._direction_loss(batch.ids, batch, self.forward_stack,
                                       "forward")
        backward = self._direction_loss(reverse_valid_rows(batch.ids), batch,
                                        self.backward_stack, "backward")
        return add(forward, backward)

    def score_queries(self, queries) -> np.ndarray:
        return _score_batched(queries, self.config.session_len,
                              self._score_block, self.config.vocab_size)

    def _score_block(self, ids: np.ndarray) -> np.ndarray:
        hidden = self.forward_stack.apply(embedding_lookup(self.embedding, ids))
        last = hidden.data[:, -1, :]
        wide = np.concatenate([last, np.zeros_like(last)], axis=-1)
        logits = wide @ self.softmax_w.data + self.softmax_b.data
        return logits[:, 1:]


class EncoderOnlyModel:
    """Bidirectional encoder scored directly at the gap positions."""

    kind = "encoder_only"
    needs_gaps = True

    def __init__(self, config: ModelConfig, rng: np.random.Generator,
                 dtype=np.float32):
        self.config = config
        self.dtype = dtype
        v, d = config.vocab_size, config.embed_dim
        params: dict[str, Tensor] = {}
        self.embedding = parameter(rng, (v + 2, d), dtype=dtype)
        params["embedding"] = self.embedding
        self.encoder = BlockStack("encoder", d, config.kernel_width,
                                  config.encoder_dilations, False, rng, dtype,
                                  params)
        self.softmax_w = parameter(rng, (d, config.n_classes), dtype=dtype)
        self.softmax_b = zeros_parameter((config.n_classes,), dtype)
        params["softmax.weights"] = self.softmax_w
        params["softmax.bias"] = self.softmax_b
        self.params = params

    def site_logits(self, batch: SessionBatch, plans: list[MaskPlan]):
        hidden = self.encoder.apply(
            embedding_lookup(self.embedding, gapped_ids(batch, plans)))
        rows, cols, targets = [], [], []
        for i, plan in enumerate(plans):
            rows.append(np.full(plan.count, i, dtype=np.int64))
            cols.append(plan.positions)     # scored at the gap itself
            targets.append(plan.targets)
        sites = gather_positions(hidden, np.concatenate(rows), np.concatenate(cols))
        return pointwise(sites, self.softmax_w, self.softmax_b), \
            np.concatenate(targets)

    def loss(self, batch: SessionBatch, plans: list[MaskPlan]) -> Tensor:
        logits, targets = self.site_logits(batch, plans)
        return masked_softmax_xent(logits, targets)

    def score_queries(self, queries) -> np.ndarray:
        # the next position is presented to the encoder as a gap
        t = self.config.session_len
        mask = self.config.mask_index
        extended = [np.concatenate([np.asarray(q, dtype=np.int64)[-(t - 1):],
                                    [mask]]) for q in queries]
        return _score_batched(extended, t, self._score_block, mask)

    def _score_block(self, ids: np.ndarray) -> np.ndarray:
        hidden = self.encoder.apply(embedding_lookup(self.embedding, ids))
        logits = hidden.data[:, -1, :] @ self.softmax_w.data + self.softmax_b.data
        return logits[:, 1:]


class MostPopModel:
    """Popularity counts from the training split; query content ignored."""

    kind = "mostpop"
    needs_gaps = False

    def __init__(self, config: ModelConfig):
        self.config = config
        self.counts = Tensor(np.zeros(config.vocab_size + 1, dtype=np.float32))
        self.params = {"counts": self.counts}

    def fit(self, rows: np.ndarray) -> "MostPopModel":
        flat = np.asarray(rows).reshape(-1)
        if flat.size and flat.max() > self.config.vocab_size:
            raise DataError(f"training rows contain item {flat.max()} beyond "
                            f"vocabulary size {self.config.vocab_size}")
        counts = np.bincount(flat, minlength=self.config.vocab_size + 1)
        counts[PAD_INDEX] = 0
        self.counts.data = counts.astype(np.float32)
        return self

    def score_queries(self, queries) -> np.ndarray:
        return np.tile(self.counts.data[1:], (len(queries), 1))


# ---------------------------------------------------------------------------
# shared helpers


def _score_batched(queries, session_len: int, block_fn, max_index: int,
                   chunk: int = 256) -> np.ndarray:
    ids = pad_queries(queries, session_len, max_index)
    parts = [block_fn(ids[s:s + chunk]) for s in range(0, ids.shape[0], chunk)]
    return np.concatenate(parts, axis=0)


def pad_queries(queries, session_len: int, max_index: int) -> np.ndarray:
    """Right-align query prefixes into a [n, t] block, keeping the last t."""
    out = np.zeros((len(queries), session_len), dtype=np.int64)
    for i, q in enumerate(queries):
        q = np.asarray(q, dtype=np.int64)
        if q.ndim != 1 or q.size == 0:
            raise DataError(f"query {i} must be a nonempty 1-D prefix")
        bad = q[(q < 1) | (q > max_index)]
        if bad.size:
            raise DataError(f"query {i} contains invalid item index {bad[0]}")
        q = q[-session_len:]
        out[i, session_len - q.size:] = q
    return out


def reverse_valid_rows(rows: np.ndarray) -> np.ndarray:
    """Reverse each row's non-padding suffix in place of itself."""
    rows = np.asarray(rows, dtype=np.int64)
    out = rows.copy()
    t = rows.shape[1]
    for i, row in enumerate(rows):
        first = int((row != PAD_INDEX).argmax()) if (row != PAD_INDEX).any() else t
        out[i, first:] = row[first:][::-1]
    return out


def nextitnet_plus_expand(rows: np.ndarray) -> np.ndarray:
    """Each row plus its valid-region reversal; corpus size doubles."""
    rows = np.asarray(rows, dtype=np.int64)
    return np.concatenate([rows, reverse_valid_rows(rows)], axis=0)


def top_n_from_scores(scores: np.ndarray, top_n: int) -> list[tuple[int, float]]:
    """Best top_n (item, score) pairs; equal scores rank lower index first."""
    scores = np.asarray(scores)
    v = scores.shape[0]
    if not 1 <= top_n <= v:
        raise ConfigError(f"top_n must lie in [1, {v}], got {top_n}")
    order = np.lexsort((np.arange(1, v + 1), -scores))
    return [(int(idx) + 1, float(scores[idx])) for idx in order[:top_n]]


def infer_next_topN(model, prefix, top_n: int) -> list[tuple[int, float]]:
    """Rank the next item after a prefix; padding and gap classes excluded."""
    prefix = np.asarray(prefix, dtype=np.int64)
    if model.kind != "mostpop" and prefix.size == 0:
        raise DataError("inference prefix must contain at least one item")
    if model.kind == "mostpop" and prefix.size == 0:
        scores = model.score_queries([np.zeros(0, dtype=np.int64)])[0]
    else:
        scores = model.score_queries([prefix])[0]
    return top_n_from_scores(scores, top_n)


def mostpop_baseline(train_rows: np.ndarray, vocab_size: int) -> list[int]:
    """Items 1..V ranked by training-split frequency, ties by index."""
    config = ModelConfig(vocab_size=vocab_size, session_len=max(
        2, np.asarray(train_rows).shape[1]))
    model = MostPopModel(config).fit(train_rows)
    return [item for item, _ in top_n_from_scores(model.counts.data[1:], vocab_size)]


def build_model(kind: str, config: ModelConfig, rng: np.random.Generator,
                dtype=np.float32):
    """Instantiate a model by kind name; the augmentation variant shares
    the plain next-item architecture."""
    if kind in ("grec",):
        return GRecModel(config, rng, dtype)
    if kind in ("nextitnet", "nextitnet_plus"):
        return NextItNetModel(config, rng, dtype)
    if kind == "tnextitnet":
        return TwoWayModel(config, rng, dtype)
    if kind == "encoder_only":
        return EncoderOnlyModel(config, rng, dtype)
    if kind == "mostpop":
        return MostPopModel(config)
    raise ConfigError(f"unknown model kind '{kind}', expected one of {MODEL_KINDS}")
