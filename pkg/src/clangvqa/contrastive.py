"""Language-graph contrastive objectives: InfoNCE and similarity-distribution KL."""
from __future__ import annotations

import numpy as np

from . import numkit as nk
from .errors import ContractError

DIST_EPS = 1e-8


def info_nce_from_similarity(sim, tau: float = 0.1) -> nk.Tensor:
    """InfoNCE over a cross-modal similarity matrix (rows: questions, cols: graphs).

    Every mismatched pair in the batch (N^2 - N of them) is a negative in every
    anchor's denominator.
    """
    if tau <= 0:
        raise ContractError(f"temperature must be positive, got {tau}")
    sim = nk.as_tensor(sim)
    n = sim.shape[0]
    if n < 1:
        raise ContractError("info_nce needs at least one pair")
    logits = sim * (1.0 / tau)
    eye = np.eye(n, dtype=bool)
    positives = logits[eye]
    if n == 1:
        return (logits * 0.0).sum()
    negatives = nk.logsumexp(logits[~eye], axis=-1)
    # log(exp(pos_i) + sum_neg) for each anchor
    both = nk.stack([positives, negatives * np.ones(n)], axis=-1)
    return (nk.logsumexp(both, axis=-1) - positives).mean()


def info_nce(Q, G, tau: float = 0.1, symmetric: bool = False) -> nk.Tensor:
    """Questions ``Q`` and graphs ``G`` (both N_b x d); row i of each is a positive pair.

    Questions are the anchors.  ``symmetric`` averages in the graph-anchored
    direction as well.
    """
    sim = nk.cosine_matrix(Q, G)
    loss = info_nce_from_similarity(sim, tau)
    if symmetric:
        loss = (loss + info_nce_from_similarity(sim.T, tau)) * 0.5
    return loss


def similarity_distribution(X) -> nk.Tensor:
    """Row distributions over the other batch members from within-modality cosines."""
    X = nk.as_tensor(X)
    n = X.shape[0]
    mapped = (nk.cosine_matrix(X, X) + 1.0) * 0.5 + DIST_EPS
    off_diag = nk.Tensor(1.0 - np.eye(n))
    weights = mapped * off_diag
    return weights / weights.sum(axis=-1, keepdims=True)


def kl_rows(P_g, P_q) -> nk.Tensor:
    """Mean over rows of KL(P_g || P_q); zero-probability entries of P_g contribute 0."""
    P_g = nk.as_tensor(P_g)
    P_q = nk.as_tensor(P_q)
    mask = P_g.data > 0
    safe_g = nk.Tensor(np.where(mask, 0.0, 1.0)) + P_g
    safe_q = nk.Tensor(np.where(mask, 0.0, 1.0)) + P_q
    terms = P_g * (nk.log(safe_g) - nk.log(safe_q))
    return terms.sum(axis=-1).mean()


def kl_match(Q, G) -> nk.Tensor:
    """KL(P_g || P_q) between the batch-similarity distributions of graphs and questions."""
    Q = nk.as_tensor(Q)
    if Q.shape[0] < 2:
        raise ContractError("kl_match needs at least two pairs")
    return kl_rows(similarity_distribution(G), similarity_distribution(Q))
