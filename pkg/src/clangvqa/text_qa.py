"""Small trainable text encoder, multi-choice scoring head and QA loss."""
from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from . import numkit as nk
from .errors import ContractError, VocabularyError

PAD, UNK = 0, 1
MAX_LEN = 32


class Vocabulary:
    """Token <-> id map with dense ids in [0, size); 0 is padding, 1 is unknown."""

    def __init__(self, tokens: Iterable[str] = (), size: int = 128):
        words = ["<pad>", "<unk>"]
        seen = set(words)
        for tok in tokens:
            if tok not in seen:
                seen.add(tok)
                words.append(tok)
        if len(words) > size:
            raise VocabularyError(f"{len(words)} tokens do not fit a vocabulary of size {size}")
        words += [f"<r{i}>" for i in range(len(words), size)]
        self.words = words
        self.index = {w: i for i, w in enumerate(words)}

    def __len__(self):
        return len(self.words)

    @property
    def size(self) -> int:
        return len(self.words)

    def encode(self, text: str | Sequence[str]) -> list[int]:
        tokens = text.split() if isinstance(text, str) else text
        return [self.index.get(t, UNK) for t in tokens]

    def decode(self, ids: Sequence[int]) -> str:
        return " ".join(self.words[i] for i in ids if i != PAD)

    def to_json(self) -> dict:
        return {"size": self.size, "words": self.words}

    @classmethod
    def from_json(cls, payload: dict) -> "Vocabulary":
        vocab = cls.__new__(cls)
        vocab.words = list(payload["words"])
        if len(vocab.words) != payload["size"]:
            raise VocabularyError("vocabulary size does not match its word list")
        vocab.index = {w: i for i, w in enumerate(vocab.words)}
        return vocab


def pad_sequences(seqs: Sequence[Sequence[int]], length: int | None = None) -> np.ndarray:
    length = length or max(len(s) for s in seqs)
    out = np.zeros((len(seqs), length), dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = s
    return out


class TextEncoder(nk.Module):
    """Mean of token + position embeddings followed by a feed-forward stack."""

    def __init__(self, rng: np.random.Generator, vocab_size: int, d: int, depth: int = 2,
                 max_len: int = MAX_LEN):
        if depth not in (1, 2):
            raise ContractError(f"encoder depth must be 1 or 2, got {depth}")
        self.embedding = nk.parameter(rng.normal(0.0, 0.3, (vocab_size, d)).astype(nk.get_dtype()))
        self.position = nk.parameter(rng.normal(0.0, 0.3, (max_len, d)).astype(nk.get_dtype()))
        self.ffn = nk.MLP(rng, [d] * (depth + 1))

    @property
    def vocab_size(self) -> int:
        return self.embedding.shape[0]

    def check_ids(self, ids: np.ndarray, lengths: np.ndarray) -> None:
        if np.any(lengths < 1):
            raise ContractError("cannot encode an empty token sequence")
        if ids.shape[-1] > self.position.shape[0]:
            raise ContractError(f"sequences longer than {self.position.shape[0]} tokens")
        if np.any(ids < 0) or np.any(ids >= self.vocab_size):
            raise VocabularyError(f"token id outside [0, {self.vocab_size})")

    def encode_padded(self, ids) -> nk.Tensor:
        """Encode a ``... x T`` array of zero-padded id sequences into ``... x d``."""
        ids = np.asarray(ids, dtype=np.int64)
        mask = ids != PAD
        lengths = mask.sum(axis=-1)
        self.check_ids(ids, lengths)
        T = ids.shape[-1]
        tokens = nk.take_rows(self.embedding, ids) + self.position[:T]
        weights = nk.Tensor((mask / lengths[..., None])[..., None])
        pooled = (tokens * weights).sum(axis=-2)
        return self.ffn(pooled)


def encode_text(encoder: TextEncoder, tokens: Sequence[int]) -> nk.Tensor:
    ids = np.asarray(tokens, dtype=np.int64)
    if ids.size == 0:
        raise ContractError("cannot encode an empty token sequence")
    if np.any(ids == PAD):
        raise VocabularyError("padding id inside a token sequence")
    return encoder.encode_padded(ids[None, :])[0]


class AnswerHead(nk.Module):
    """Fuses X_g and X_q as [X_g * X_q, X_g, X_q] -> d."""

    def __init__(self, rng: np.random.Generator, d: int):
        self.fuse = nk.Linear(rng, 3 * d, d)

    def __call__(self, X_g, X_q) -> nk.Tensor:
        return self.fuse(nk.concat([X_g * X_q, X_g, X_q], axis=-1))


def score_candidates(head: AnswerHead, encoder: TextEncoder, X_g, X_q, candidates) -> nk.Tensor:
    """One logit per candidate answer.

    ``candidates`` is either a list of id sequences for a single question or a
    zero-padded ``B x C x T`` array for a batch (then X_g, X_q are ``B x d``).
    """
    if isinstance(candidates, np.ndarray) and candidates.ndim == 3:
        cand = candidates
    else:
        seqs = list(candidates)
        if any(len(s) == 0 for s in seqs):
            raise ContractError("empty candidate answer")
        cand = pad_sequences(seqs)
    if cand.shape[-2] < 2:
        raise ContractError("multi-choice scoring needs at least two candidates")
    fused = head(X_g, X_q)
    enc = encoder.encode_padded(cand)
    if cand.ndim == 2:
        return (enc @ fused.reshape(-1, 1)).reshape(-1)
    logits = enc @ fused.reshape(fused.shape[0], -1, 1)
    return logits.reshape(logits.shape[0], -1)


def qa_loss(logits, gold) -> nk.Tensor:
    """Softmax cross-entropy, averaged over the batch."""
    logits = nk.as_tensor(logits)
    gold = np.atleast_1d(np.asarray(gold, dtype=np.int64))
    if logits.ndim == 1:
        logits = logits.reshape(1, -1)
    C = logits.shape[-1]
    if np.any(gold < 0) or np.any(gold >= C):
        raise ContractError(f"gold index out of range for {C} candidates: {gold}")
    logp = nk.log_softmax(logits, axis=-1)
    picked = logp[np.arange(len(gold)), gold]
    return -picked.mean()
