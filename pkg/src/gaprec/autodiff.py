"""Dense-tensor engine with reverse-mode differentiation on numpy.

Every operator the session models need lives here: embedding lookup,
dilated 1D convolution (causal and non-causal), layer normalization,
rectifier, pointwise dense projection, position gather, elementwise add,
last-axis concat, and a masked softmax cross-entropy head.  Each op
builds the output value eagerly and attaches a closure that scatters the
upstream gradient back to its parents; ``backward`` replays the closures
in reverse topological order.

Training runs in float32.  The same graph code runs in float64 for the
finite-difference gradient checks, so nothing here may branch on dtype.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError

__all__ = [
    "Tensor",
    "ConvKernel",
    "backward",
    "tensor",
    "parameter",
    "zeros_parameter",
    "truncated_normal",
    "add",
    "relu",
    "embedding_lookup",
    "pointwise",
    "conv1d",
    "layer_norm",
    "gather_positions",
    "concat_last",
    "masked_softmax_xent",
    "softmax",
]


class Tensor:
    """A dense array plus an optional gradient buffer and backward closure.

    The array is treated as immutable once created; only ``grad`` mutates
    during a backward pass, and only the optimizer rewrites ``data`` on
    parameter tensors between steps.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backprop")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backprop = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={tuple(self.data.shape)}, dtype={self.data.dtype}{flag})"


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def truncated_normal(rng: np.random.Generator, shape, std: float = 0.02,
                     dtype=np.float32) -> np.ndarray:
    """Normal(0, std) samples with anything outside two deviations redrawn."""
    out = rng.normal(0.0, std, size=shape)
    bound = 2.0 * std
    bad = np.abs(out) > bound
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > bound
    return out.astype(dtype)


def parameter(rng: np.random.Generator, shape, std: float = 0.02,
              dtype=np.float32) -> Tensor:
    return Tensor(truncated_normal(rng, shape, std, dtype), requires_grad=True)


def zeros_parameter(shape, dtype=np.float32) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.array(g, copy=True)
    else:
        t.grad += g


def _node(data: np.ndarray, parents: tuple, backprop) -> Tensor:
    # Graph bookkeeping is skipped entirely when no parent needs gradients,
    # which keeps the inference path free of closures.
    if any(p.requires_grad for p in parents):
        out = Tensor(data, requires_grad=True)
        out._parents = parents
        out._backprop = backprop
        return out
    return Tensor(data)


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every tensor reachable from a scalar loss."""
    if loss.data.size != 1:
        raise ShapeError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backprop is not None:
            node._backprop(node.grad)


# ---------------------------------------------------------------------------
# elementwise and dense ops


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"add shape mismatch: {a.data.shape} vs {b.data.shape}")
    out_data = a.data + b.data

    def backprop(g):
        if a.requires_grad:
            _accumulate(a, g)
        if b.requires_grad:
            _accumulate(b, g)

    return _node(out_data, (a, b), backprop)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out_data = np.where(mask, x.data, 0)

    def backprop(g):
        if x.requires_grad:
            _accumulate(x, g * mask)

    return _node(out_data, (x,), backprop)


def pointwise(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Dense map over the last axis: ``y = x @ weight + bias``."""
    din, dout = weight.data.shape
    if x.data.shape[-1] != din:
        raise ShapeError(f"pointwise: input last dim {x.data.shape[-1]} != {din}")
    if bias.data.shape != (dout,):
        raise ShapeError(f"pointwise: bias shape {bias.data.shape} != ({dout},)")
    out_data = x.data @ weight.data + bias.data

    def backprop(g):
        g2 = g.reshape(-1, dout)
        if x.requires_grad:
            _accumulate(x, g @ weight.data.T)
        if weight.requires_grad:
            _accumulate(weight, x.data.reshape(-1, din).T @ g2)
        if bias.requires_grad:
            _accumulate(bias, g2.sum(axis=0))

    return _node(out_data, (x, weight, bias), backprop)


def embedding_lookup(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup ``table[ids]``; gradients scatter-add back to rows."""
    ids = np.asarray(ids)
    if not np.issubdtype(ids.dtype, np.integer):
        raise ShapeError(f"embedding ids must be integers, got dtype {ids.dtype}")
    n_rows = table.data.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= n_rows):
        raise ShapeError(
            f"embedding id out of range: ids span [{ids.min()}, {ids.max()}], "
            f"table has {n_rows} rows")
    out_data = table.data[ids]

    def backprop(g):
        if table.requires_grad:
            gt = np.zeros_like(table.data)
            np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.data.shape[1]))
            _accumulate(table, gt)

    return _node(out_data, (table,), backprop)


def gather_positions(x: Tensor, rows: np.ndarray, cols: np.ndarray) -> Tensor:
    """Pick feature vectors ``x[rows[i], cols[i], :]``, yielding [M, d]."""
    rows = np.asarray(rows)
    cols = np.asarray(cols)
    if rows.shape != cols.shape or rows.ndim != 1:
        raise ShapeError("gather_positions needs matching 1-D row/col index arrays")
    b, t, _ = x.data.shape
    if rows.size and (rows.min() < 0 or rows.max() >= b or cols.min() < 0 or cols.max() >= t):
        raise ShapeError("gather_positions index out of range")
    out_data = x.data[rows, cols, :]

    def backprop(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            np.add.at(gx, (rows, cols), g)
            _accumulate(x, gx)

    return _node(out_data, (x,), backprop)


def concat_last(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate two tensors along the last axis."""
    if a.data.shape[:-1] != b.data.shape[:-1]:
        raise ShapeError(
            f"concat_last leading shape mismatch: {a.data.shape} vs {b.data.shape}")
    da = a.data.shape[-1]
    out_data = np.concatenate([a.data, b.data], axis=-1)

    def backprop(g):
        if a.requires_grad:
            _accumulate(a, g[..., :da])
        if b.requires_grad:
            _accumulate(b, g[..., da:])

    return _node(out_data, (a, b), backprop)


# ---------------------------------------------------------------------------
# dilated convolution


@dataclass
class ConvKernel:
    """Weights for one dilated 1-D convolution over [batch, time, channels].

    ``weights`` has shape [width, in_channels, out_channels]; tap ``width-1``
    multiplies the current position, earlier taps reach back (causal) or to
    both sides (non-causal, odd width only).
    """

    width: int
    in_channels: int
    out_channels: int
    dilation: int
    causal: bool
    weights: Tensor
    bias: Tensor

    def __post_init__(self):
        if self.width < 1 or self.dilation < 1:
            raise ShapeError(f"conv width/dilation must be >= 1, got "
                             f"width={self.width} dilation={self.dilation}")
        if not self.causal and self.width % 2 == 0:
            raise ShapeError(f"non-causal conv requires odd width, got {self.width}")
        expect = (self.width, self.in_channels, self.out_channels)
        if tuple(self.weights.data.shape) != expect:
            raise ShapeError(f"conv weights shape {self.weights.data.shape} != {expect}")
        if tuple(self.bias.data.shape) != (self.out_channels,):
            raise ShapeError(f"conv bias shape {self.bias.data.shape} != "
                             f"({self.out_channels},)")

    @classmethod
    def create(cls, width: int, in_channels: int, out_channels: int, dilation: int,
               causal: bool, rng: np.random.Generator, std: float = 0.02,
               dtype=np.float32) -> "ConvKernel":
        w = parameter(rng, (width, in_channels, out_channels), std, dtype)
        b = zeros_parameter((out_channels,), dtype)
        return cls(width, in_channels, out_channels, dilation, causal, w, b)

    @property
    def span(self) -> int:
        """Positions a single application reaches beyond the current one."""
        return (self.width - 1) * self.dilation


def conv1d(x: Tensor, kernel: ConvKernel) -> Tensor:
    """Dilated 1-D convolution of [B, t, C_in] into [B, t, C_out].

    Causal kernels left-pad by span zeros so output i sees inputs <= i;
    non-causal kernels pad span/2 on each side for a symmetric window.
    """
    b, t, cin = x.data.shape
    if cin != kernel.in_channels:
        raise ShapeError(f"conv1d: input channels {cin} != kernel {kernel.in_channels}")
    k, r = kernel.width, kernel.dilation
    span = kernel.span
    if kernel.causal:
        pad_left, pad_right = span, 0
    else:
        pad_left = pad_right = span // 2
    xp = np.zeros((b, t + span, cin), dtype=x.data.dtype)
    xp[:, pad_left:pad_left + t, :] = x.data

    w = kernel.weights
    bias = kernel.bias
    out_data = np.empty((b, t, kernel.out_channels), dtype=x.data.dtype)
    out_data[:] = bias.data
    for j in range(k):
        out_data += xp[:, j * r:j * r + t, :] @ w.data[j]

    def backprop(g):
        if w.requires_grad:
            gw = np.empty_like(w.data)
            for j in range(k):
                gw[j] = np.einsum("bti,bto->io", xp[:, j * r:j * r + t, :], g)
            _accumulate(w, gw)
        if bias.requires_grad:
            _accumulate(bias, g.sum(axis=(0, 1)))
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for j in range(k):
                gxp[:, j * r:j * r + t, :] += g @ w.data[j].T
            _accumulate(x, gxp[:, pad_left:pad_left + t, :])

    return _node(out_data, (x, w, bias), backprop)


# ---------------------------------------------------------------------------
# normalization and loss


def layer_norm(x: Tensor, gain: Tensor, shift: Tensor, eps: float = 1e-8) -> Tensor:
    """Normalize the last axis to zero mean, unit variance, then scale."""
    d = x.data.shape[-1]
    if gain.data.shape != (d,) or shift.data.shape != (d,):
        raise ShapeError(f"layer_norm gain/shift must have shape ({d},)")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = np.mean(centered * centered, axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out_data = gain.data * xhat + shift.data

    def backprop(g):
        lead = tuple(range(g.ndim - 1))
        if shift.requires_grad:
            _accumulate(shift, g.sum(axis=lead))
        if gain.requires_grad:
            _accumulate(gain, (g * xhat).sum(axis=lead))
        if x.requires_grad:
            gxhat = g * gain.data
            gvar = np.sum(gxhat * centered, axis=-1, keepdims=True) * (-0.5) * inv_std ** 3
            gmu = (-np.sum(gxhat, axis=-1, keepdims=True) * inv_std
                   - 2.0 * gvar * np.mean(centered, axis=-1, keepdims=True))
            gx = gxhat * inv_std + gvar * 2.0 * centered / d + gmu / d
            _accumulate(x, gx)

    return _node(out_data, (x, gain, shift), backprop)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Stable softmax over the last axis of a plain array."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def masked_softmax_xent(logits: Tensor, targets: np.ndarray, pad_index: int = 0) -> Tensor:
    """Mean cross-entropy of [M, n] logits against integer targets.

    Targets must lie strictly inside the class range and never equal the
    padding class; rows correspond to prediction sites already filtered
    upstream, so M >= 1.
    """
    targets = np.asarray(targets)
    m, n = logits.data.shape
    if m == 0:
        raise ShapeError("masked_softmax_xent needs at least one prediction site")
    if targets.shape != (m,):
        raise ShapeError(f"targets shape {targets.shape} != ({m},)")
    if targets.size and (targets.min() <= pad_index or targets.max() >= n):
        raise ShapeError(
            f"targets must lie in [{pad_index + 1}, {n - 1}] (no padding or "
            f"out-of-vocabulary class), got span [{targets.min()}, {targets.max()}]")
    zmax = logits.data.max(axis=-1, keepdims=True)
    z = logits.data - zmax
    lse = np.log(np.exp(z).sum(axis=-1)) + zmax[:, 0]
    picked = logits.data[np.arange(m), targets]
    out_data = np.asarray((lse - picked).mean(), dtype=logits.data.dtype)

    def backprop(g):
        if logits.requires_grad:
            p = softmax(logits.data)
            p[np.arange(m), targets] -= 1.0
            _accumulate(logits, (float(g) / m) * p)

    return _node(out_data, (logits,), backprop)
