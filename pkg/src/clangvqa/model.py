"""The full question-answering network and its batched forward pass."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numkit as nk
from .adversarial import Discriminator
from .hier_pool import ClusterLevel, FusedGraphEmbedding, HierarchyParams, forward_hierarchy
from .text_qa import AnswerHead, TextEncoder, score_candidates


@dataclass
class Batch:
    X: np.ndarray            # B x M x d_in
    A: np.ndarray            # B x M x M
    question: np.ndarray     # B x T, zero padded
    candidates: np.ndarray   # B x C x T, zero padded
    gold: np.ndarray         # B
    question_type: list[str]

    def __len__(self):
        return len(self.gold)


@dataclass
class Forward:
    fused: FusedGraphEmbedding
    final_level: ClusterLevel | None
    X_q: nk.Tensor
    logits: nk.Tensor

    @property
    def X_g(self) -> nk.Tensor:
        return self.fused.X_g

    def final_nodes(self) -> nk.Tensor:
        """Rows handed to the discriminator: the last level's refined nodes."""
        return self.final_level.X_next.reshape(-1, self.final_level.X_next.shape[-1])


class CLanGNetwork(nk.Module):
    def __init__(self, rng: np.random.Generator, d_in: int, d: int, M: int, P: int,
                 vocab_size: int, encoder_depth: int = 2):
        self.hierarchy = HierarchyParams(rng, d_in, d, M, P)
        self.encoder = TextEncoder(rng, vocab_size, d, depth=encoder_depth)
        self.head = AnswerHead(rng, d)

    def __call__(self, batch: Batch) -> Forward:
        fused, last = forward_hierarchy(self.hierarchy, batch.X, batch.A)
        X_q = self.encoder.encode_padded(batch.question)
        logits = score_candidates(self.head, self.encoder, fused.X_g, X_q, batch.candidates)
        return Forward(fused, last, X_q, logits)


def build_discriminator(rng: np.random.Generator, d: int) -> Discriminator:
    return Discriminator(rng, d)
