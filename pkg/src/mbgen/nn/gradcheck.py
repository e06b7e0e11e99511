"""Central finite-difference checks against the tape gradients."""

from __future__ import annotations

from collections.abc import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward, no_grad


def numeric_grad(fn: Callable[[], Tensor], param: Tensor, h: float = 1e-6) -> np.ndarray:
    g = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    out = g.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = fn().item()
            flat[i] = old - h
            down = fn().item()
            flat[i] = old
            out[i] = (up - down) / (2 * h)
    return g


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    """Per-tensor ``|a - b| / max(|a|, |b|)`` in the Euclidean norm.

    Elementwise ratios are dominated by finite-difference roundoff on entries
    whose true gradient is ~0, so the norm form is the one worth thresholding.
    """
    scale = max(np.linalg.norm(a), np.linalg.norm(b), floor)
    return float(np.linalg.norm(a - b) / scale)


def fd_noise(value: float, h: float, size: int) -> float:
    """Norm of the roundoff in a central difference of a loss of size ``value``."""
    return 4.0 * np.finfo(np.float64).eps * max(abs(value), 1.0) / h * np.sqrt(size)


def check_gradients(
    fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-6,
    rtol: float = 1e-5,
) -> float:
    """Worst relative error over ``params`` between backward() and finite differences.

    A tensor whose gradient norm is below ``fd_noise / rtol`` cannot be
    resolved to ``rtol`` by differences; it is measured against that scale
    instead (attention biases shared across a softmax axis have exactly zero
    gradient and land here).
    """
    for p in params:
        p.grad = np.zeros_like(p.data)
    out = fn()
    backward(out)
    value = out.item()
    analytic = [p.grad.copy() for p in params]
    return max(
        relative_error(a, numeric_grad(fn, p, h), floor=max(1e-8, fd_noise(value, h, p.data.size) / rtol))
        for a, p in zip(analytic, params)
    )
