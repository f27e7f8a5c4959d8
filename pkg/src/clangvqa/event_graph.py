"""Fully connected multi-object event graphs built from per-frame detections.

Nodes are detections ordered clip-major, frame-second, object-minor.  Edge
weights are cosine similarities of the node features mapped to [0, 1] by
``(c + 1) / 2``; same-frame pairs use the spatial score, cross-frame pairs the
temporal score, and every node carries a unit self-loop.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractError, LayoutError
from .numkit import cosine_np

BOX_DIM = 5


@dataclass(frozen=True)
class ObjectObservation:
    roi: np.ndarray
    box: np.ndarray
    frame_index: int
    clip_index: int

    def __post_init__(self):
        box = np.asarray(self.box)
        if box.shape[0] >= 4:
            x1, y1, x2, y2 = box[:4]
            if x1 > x2 or y1 > y2:
                raise LayoutError(f"box corners out of order: {box[:4]}")
        if np.any(box < 0) or np.any(box > 1):
            raise LayoutError("box entries must lie in [0, 1]")


@dataclass
class EventGraph:
    X: np.ndarray
    A: np.ndarray
    frame_of: np.ndarray
    clip_of: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.X.shape[0]


def init_nodes(observations: Sequence[ObjectObservation], K: int, L: int, N: int) -> np.ndarray:
    """Concatenate roi and box features into the M x (d1 + d2) node matrix."""
    M = K * L * N
    if len(observations) != M:
        raise LayoutError(f"expected K*L*N = {M} observations, got {len(observations)}")
    d1 = len(observations[0].roi)
    d2 = len(observations[0].box)
    per_frame = np.zeros(K * L, dtype=int)
    for obs in observations:
        if len(obs.roi) != d1 or len(obs.box) != d2:
            raise LayoutError("inconsistent roi/box widths across observations")
        if not 0 <= obs.frame_index < K * L or obs.clip_index != obs.frame_index // L:
            raise LayoutError(f"frame {obs.frame_index} is not in clip {obs.clip_index}")
        per_frame[obs.frame_index] += 1
    if np.any(per_frame != N):
        raise LayoutError(f"every frame needs exactly N={N} observations")
    # stable sort keeps the object order within a frame
    ordered = sorted(observations, key=lambda o: (o.clip_index, o.frame_index))
    return np.stack([np.concatenate([o.roi, o.box]) for o in ordered]).astype(np.float64)


def _check_pair(i: int, j: int, n: int) -> None:
    if i == j:
        raise ContractError("relation scores are defined between distinct nodes")
    if not (0 <= i < n and 0 <= j < n):
        raise ContractError(f"node index out of range: ({i}, {j}) for {n} nodes")


def mapped_cosine(u, v) -> np.ndarray:
    return (cosine_np(u, v) + 1.0) / 2.0


def spatial_score(X: np.ndarray, frame_of: np.ndarray, i: int, j: int) -> float:
    """Relation score between two distinct detections of the same frame."""
    _check_pair(i, j, len(X))
    if frame_of[i] != frame_of[j]:
        raise ContractError(f"nodes {i} and {j} are in different frames; use temporal_score")
    return float(mapped_cosine(X[i], X[j]))


def temporal_score(X: np.ndarray, frame_of: np.ndarray, i: int, j: int) -> float:
    """Relation score between detections of two different frames."""
    _check_pair(i, j, len(X))
    if frame_of[i] == frame_of[j]:
        raise ContractError(f"nodes {i} and {j} share frame {frame_of[i]}; use spatial_score")
    return float(mapped_cosine(X[i], X[j]))


def node_layout(K: int, L: int, N: int) -> tuple[np.ndarray, np.ndarray]:
    """Frame and clip index of every node in clip-major order."""
    frame_of = np.repeat(np.arange(K * L), N)
    return frame_of, frame_of // L


def adjacency(X: np.ndarray) -> np.ndarray:
    """Dense relation-score matrix for a node matrix (unit diagonal).

    Both relation scores share one formula, so the matrix is evaluated in a
    single broadcast; entries match the pairwise scorers bit for bit.
    """
    X = np.asarray(X, dtype=np.float64)
    A = mapped_cosine(X[:, None, :], X[None, :, :])
    np.fill_diagonal(A, 1.0)
    return A


def graph_from_nodes(X: np.ndarray, K: int, L: int, N: int) -> EventGraph:
    if X.shape[0] != K * L * N:
        raise LayoutError(f"node matrix has {X.shape[0]} rows, expected {K * L * N}")
    frame_of, clip_of = node_layout(K, L, N)
    return EventGraph(np.asarray(X, dtype=np.float64), adjacency(X), frame_of, clip_of)


def build_graph(observations: Sequence[ObjectObservation], K: int, L: int, N: int) -> EventGraph:
    return graph_from_nodes(init_nodes(observations, K, L, N), K, L, N)
