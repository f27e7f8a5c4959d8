"""Central finite-difference gradient checking."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, Tensor, backward, precision


def numeric_grad(fn: Callable[[], Tensor], x: Tensor, h: float = 1e-5) -> np.ndarray:
    """d fn / d x by central differences, perturbing ``x.data`` in place."""
    grad = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = fn().item()
        flat[i] = orig - h
        down = fn().item()
        flat[i] = orig
        out[i] = (up - down) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """Elementwise |a - n| / max(|a|, |n|, floor)."""
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def check_gradients(fn: Callable[[], Tensor], inputs: Sequence[Tensor], h: float = 1e-5) -> float:
    """Largest elementwise relative error between tape and finite-difference gradients.

    ``fn`` must rebuild its scalar output from ``inputs`` on every call.  Runs in
    64-bit precision.
    """
    with precision("float64"):
        for x in inputs:
            x.data = x.data.astype(np.float64)
            x.zero_grad()
        with Tape():
            loss = fn()
        backward(loss)
        analytic = [x.grad.copy() for x in inputs]
        worst = 0.0
        for x, a in zip(inputs, analytic):
            n = numeric_grad(fn, x, h)
            if a.size:
                worst = max(worst, float(relative_error(a, n).max()))
        return worst
