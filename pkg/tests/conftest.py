"""Shared test utilities: finite-difference oracle and tiny fixtures."""

from __future__ import annotations

import numpy as np
import pytest

from gaprec.autodiff import Tensor, backward


def finite_diff_worst_error(loss_fn, params: dict[str, Tensor],
                            h: float = 1e-5) -> float:
    """Max relative error between backprop and central differences.

    loss_fn rebuilds the graph from the live parameter tensors on every
    call; parameters must be float64 for the difference quotient to have
    headroom below the 1e-5 acceptance line.
    """
    for p in params.values():
        p.grad = None
    loss = loss_fn()
    backward(loss)
    analytic = {name: p.grad.copy() if p.grad is not None else
                np.zeros_like(p.data) for name, p in params.items()}
    worst = 0.0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        grad_flat = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn().item()
            flat[i] = orig - h
            down = loss_fn().item()
            flat[i] = orig
            numeric = (up - down) / (2.0 * h)
            err = abs(grad_flat[i] - numeric) / max(
                1.0, abs(grad_flat[i]), abs(numeric))
            worst = max(worst, err)
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_valid_rows(rng, n_rows: int, session_len: int, vocab_size: int,
                      min_valid: int = 2) -> np.ndarray:
    """Left-padded rows with valid lengths drawn in [min_valid, t]."""
    rows = np.zeros((n_rows, session_len), dtype=np.int64)
    for i in range(n_rows):
        valid = int(rng.integers(min_valid, session_len + 1))
        rows[i, session_len - valid:] = rng.integers(
            1, vocab_size + 1, size=valid)
    return rows
