"""Multi-layer GNN-cluster: learned coarsening, expansion and multi-scale fusion."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numkit as nk
from .errors import ScheduleError
from .gnn_layers import GatLayer, SageLayer


NORM_EPS = 1e-6


def rms_normalize(x) -> nk.Tensor:
    """Scale every row to unit root-mean-square (zero rows stay zero)."""
    x = nk.as_tensor(x)
    return x / nk.sqrt((x * x).mean(axis=-1, keepdims=True) + NORM_EPS)


@dataclass
class ClusterLevel:
    Z: nk.Tensor
    S: nk.Tensor
    X_next: nk.Tensor
    A_next: nk.Tensor
    pooled: nk.Tensor


@dataclass
class FusedGraphEmbedding:
    X_g: nk.Tensor
    layer_weights: nk.Tensor


def layer_schedule(M: int, P: int) -> list[int]:
    """Node counts per layer: halve (floor 2) for the first half, then mirror back to M."""
    if M < 2 or P < 0:
        raise ScheduleError(f"invalid schedule request M={M}, P={P}")
    half = P // 2
    sizes = [M]
    for _ in range(half):
        sizes.append(max(math.ceil(sizes[-1] / 2), 2))
    shrink = sizes[1:]
    middle = [sizes[-1]] if P % 2 else []
    return shrink + middle + sizes[:half][::-1]


class ClusterParams(nk.Module):
    """Parameters of one GNN-cluster: embedding GAT, pooling GAT and two GraphSage layers."""

    def __init__(self, rng: np.random.Generator, d: int, n_next: int):
        self.embed = GatLayer(rng, d, d)
        self.pool = GatLayer(rng, d, n_next)
        self.sage1 = SageLayer(rng, d, d)
        self.sage2 = SageLayer(rng, d, d)

    @property
    def n_next(self) -> int:
        return self.pool.d_out


def gnn_cluster_step(params: ClusterParams, A, X, n_next: int, shrink: bool = False,
                     assignment=None, normalize: bool = True) -> ClusterLevel:
    """Coarsen (or expand) one graph level.

    ``assignment`` replaces the learned S; it exists for tests of the pooling
    algebra.
    """
    A = nk.as_tensor(A)
    X = nk.as_tensor(X)
    n = A.shape[-1]
    if n_next < 1 or (shrink and n_next > n):
        raise ScheduleError(f"cannot map {n} nodes to {n_next} in this phase")
    Z = params.embed(A, X)
    if assignment is None:
        S = nk.softmax_rows(params.pool(A, X))
    else:
        S = nk.as_tensor(assignment)
    if S.shape[-1] != n_next:
        raise ScheduleError(f"assignment has {S.shape[-1]} clusters, expected {n_next}")
    St = S.T
    X_next = St @ Z
    A_next = St @ A @ S
    A_next = (A_next + A_next.T) * 0.5  # exact symmetry; float S^T A S drifts ~1e-15
    refined = params.sage2(A_next, params.sage1(A_next, X_next))
    if normalize:
        # keeps magnitudes level-independent across a deep stack of sum-coarsenings
        refined = rms_normalize(refined)
    pooled = refined.mean(axis=-2)
    return ClusterLevel(Z=Z, S=S, X_next=refined, A_next=A_next, pooled=pooled)


class FusionAttention(nk.Module):
    """Single-head scaled dot-product self-attention over per-layer pooled vectors."""

    def __init__(self, rng: np.random.Generator, d: int):
        self.Wq = nk.glorot(rng, d, d)
        self.Wk = nk.glorot(rng, d, d)
        self.Wv = nk.glorot(rng, d, d)


def multi_scale_fuse(pooled, attn: FusionAttention) -> FusedGraphEmbedding:
    """Attend across the P pooled vectors (``... x P x d``) and average the result."""
    pooled = nk.as_tensor(pooled)
    d = pooled.shape[-1]
    q = pooled @ attn.Wq
    k = pooled @ attn.Wk
    v = pooled @ attn.Wv
    weights = nk.softmax_rows((q @ k.T) * (1.0 / math.sqrt(d)))
    X_g = (weights @ v).mean(axis=-2)
    return FusedGraphEmbedding(X_g=X_g, layer_weights=weights)


class HierarchyParams(nk.Module):
    def __init__(self, rng: np.random.Generator, d_in: int, d: int, M: int, P: int):
        self.schedule = layer_schedule(M, P) if P else []
        self.project = nk.Linear(rng, d_in, d)
        sizes = self.schedule
        self.levels = [ClusterParams(rng, d, n) for n in sizes]
        self.fusion = FusionAttention(rng, d)

    @property
    def P(self) -> int:
        return len(self.levels)


def forward_hierarchy(params: HierarchyParams, X, A, P: int | None = None):
    """Run the full GNN-cluster stack on node features ``X`` and adjacency ``A``.

    Returns the fused embedding and the final level (None in bypass mode,
    ``P == 0``, where X_g is the mean of the projected nodes).
    """
    if P is not None and P != params.P:
        raise ScheduleError(f"parameters were built for P={params.P}, got P={P}")
    H = params.project(nk.as_tensor(X))
    A = nk.as_tensor(A)
    if params.P == 0:
        X_g = H.mean(axis=-2)
        ones = nk.Tensor(np.ones(X_g.shape[:-1] + (1, 1)))
        return FusedGraphEmbedding(X_g=X_g, layer_weights=ones), None
    pooled = []
    level = None
    n = A.shape[-1]
    half = params.P // 2
    for i, (lp, n_next) in enumerate(zip(params.levels, params.schedule)):
        level = gnn_cluster_step(lp, A, H, n_next, shrink=i < half)
        pooled.append(level.pooled)
        A, H, n = level.A_next, level.X_next, n_next
    fused = multi_scale_fuse(nk.stack(pooled, axis=-2), params.fusion)
    return fused, level
