"""Input checks shared by the estimator wrappers."""
from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.utils.validation import check_array

from .data_synth import QASample, SyntheticDataset
from .errors import DimensionError, LayoutError


def check_node_stack(X, M: int | None = None, d_in: int | None = None) -> np.ndarray:
    """Validate a ``B x M x d_in`` stack of node-feature matrices (finite floats)."""
    X = np.asarray(X)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3:
        raise DimensionError(f"expected B x M x d_in node features, got shape {X.shape}")
    flat = check_array(X.reshape(-1, X.shape[-1]), dtype=np.float64, ensure_all_finite=True)
    X = flat.reshape(X.shape)
    if M is not None and X.shape[1] != M:
        raise LayoutError(f"expected {M} nodes per graph, got {X.shape[1]}")
    if d_in is not None and X.shape[2] != d_in:
        raise DimensionError(f"expected node width {d_in}, got {X.shape[2]}")
    return X


def check_samples(samples) -> list[QASample]:
    if isinstance(samples, SyntheticDataset):
        samples = samples.train
    samples = list(samples)
    if not samples:
        raise ValueError("no samples given")
    if not all(isinstance(s, QASample) for s in samples):
        raise TypeError("expected a sequence of QASample")
    shapes = {s.features.shape for s in samples}
    if len(shapes) != 1:
        raise LayoutError(f"samples disagree on feature shape: {sorted(shapes)}")
    return samples


def check_targets(samples: Sequence[QASample], y) -> np.ndarray:
    """Gold candidate indices, from ``y`` when given, else from the samples."""
    if y is None:
        return np.array([s.gold for s in samples], dtype=np.int64)
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    if len(y) != len(samples):
        raise ValueError(f"{len(y)} targets for {len(samples)} samples")
    n_cand = np.array([len(s.candidates) for s in samples])
    if np.any(y < 0) or np.any(y >= n_cand):
        raise ValueError("target index outside the candidate list")
    return y
