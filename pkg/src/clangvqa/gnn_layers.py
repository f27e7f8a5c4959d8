"""Edge-weighted GAT and GraphSage layers over dense adjacency.

Both layers accept a single graph (``A: n x n``, ``X: n x d``) or a batch with
a leading batch axis.
"""
from __future__ import annotations

import numpy as np

from . import numkit as nk
from .errors import ContractError, DimensionError

WEIGHT_EPS = 1e-8


def _check_inputs(A, X) -> None:
    A = nk.as_tensor(A)
    X = nk.as_tensor(X)
    if A.shape[-1] != A.shape[-2] or A.shape[-1] != X.shape[-2]:
        raise DimensionError(f"adjacency {A.shape} does not match node features {X.shape}")
    if np.any(A.data < 0):
        raise ContractError("adjacency weights must be nonnegative")


class GatLayer(nk.Module):
    """Single-head graph attention with edge-weight reweighting."""

    def __init__(self, rng: np.random.Generator, d_in: int, d_out: int, leaky_slope: float = 0.2):
        self.W = nk.glorot(rng, d_in, d_out)
        self.attn = nk.glorot(rng, 2 * d_out, 1)
        self.leaky_slope = leaky_slope

    @property
    def d_out(self) -> int:
        return self.W.shape[1]

    def attention(self, A, X) -> tuple[nk.Tensor, nk.Tensor]:
        """Reweighted attention coefficients and the projected features."""
        _check_inputs(A, X)
        A = nk.as_tensor(A)
        H = nk.as_tensor(X) @ self.W
        d = self.d_out
        src = H @ self.attn[:d]
        dst = H @ self.attn[d:]
        scores = nk.leaky_relu(src + dst.T, self.leaky_slope)
        return nk.weighted_softmax(scores, A, WEIGHT_EPS), H

    def __call__(self, A, X) -> nk.Tensor:
        alpha, H = self.attention(A, X)
        return nk.elu(alpha @ H)


class SageLayer(nk.Module):
    """GraphSage with an edge-weighted neighbour mean (self-loop included)."""

    def __init__(self, rng: np.random.Generator, d_in: int, d_out: int):
        self.W_self = nk.glorot(rng, d_in, d_out)
        self.W_neigh = nk.glorot(rng, d_in, d_out)

    def __call__(self, A, X) -> nk.Tensor:
        _check_inputs(A, X)
        A = nk.as_tensor(A)
        X = nk.as_tensor(X)
        weight = A.sum(axis=-1, keepdims=True)
        # rows without any weight get a zero neighbour mean
        guard = nk.Tensor((weight.data == 0).astype(weight.dtype))
        neigh = (A @ X) / (weight + guard)
        return nk.relu(X @ self.W_self + neigh @ self.W_neigh)


def gat_forward(layer: GatLayer, A, X) -> nk.Tensor:
    return layer(A, X)


def sage_forward(layer: SageLayer, A, X) -> nk.Tensor:
    return layer(A, X)
