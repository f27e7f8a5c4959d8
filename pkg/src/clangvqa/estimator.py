"""scikit-learn style wrappers around graph construction and the QA model."""
from __future__ import annotations

from dataclasses import replace

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import numkit as nk
from .data_synth import SyntheticDataset
from .event_graph import adjacency, node_layout
from .trainer import Checkpoint, PreparedSplit, TrainConfig, evaluate_split, train
from .validation import check_node_stack, check_samples, check_targets


class EventGraphBuilder(TransformerMixin, BaseEstimator):
    """Node-feature stacks (B x M x d_in) -> dense adjacency stacks (B x M x M)."""

    def __init__(self, K: int = 4, L: int = 8, N: int = 5):
        self.K = K
        self.L = L
        self.N = N

    def fit(self, X, y=None):
        X = check_node_stack(X, M=self.K * self.L * self.N)
        self.n_features_in_ = X.shape[-1]
        self.frame_of_, self.clip_of_ = node_layout(self.K, self.L, self.N)
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_node_stack(X, M=self.K * self.L * self.N, d_in=self.n_features_in_)
        return np.stack([adjacency(x) for x in X])


class CLanGClassifier(ClassifierMixin, BaseEstimator):
    """Multi-choice video QA model; ``predict`` returns the chosen candidate index.

    ``fit`` takes a :class:`SyntheticDataset` (its val split picks the best
    epoch) or a plain sequence of samples, which then doubles as validation and
    needs ``vocab``.
    """

    def __init__(self, d=64, P=8, lr=1e-3, batch_size=32, epochs=30, seed=0, tau=0.1,
                 adv=True, contrastive=True, qa=True, encoder_depth=2, symmetric_nce=False,
                 vocab=None):
        self.d = d
        self.P = P
        self.lr = lr
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed
        self.tau = tau
        self.adv = adv
        self.contrastive = contrastive
        self.qa = qa
        self.encoder_depth = encoder_depth
        self.symmetric_nce = symmetric_nce
        self.vocab = vocab

    def _config(self) -> TrainConfig:
        params = self.get_params()
        params.pop("vocab")
        return TrainConfig(**params).validate()

    def fit(self, X, y=None):
        if isinstance(X, SyntheticDataset):
            dataset = X
        else:
            samples = check_samples(X)
            gold = check_targets(samples, y)
            samples = [replace(s, gold=int(g)) for s, g in zip(samples, gold)]
            if self.vocab is None:
                raise ValueError("fitting on bare samples needs the vocab parameter")
            dataset = SyntheticDataset(None, self.vocab, samples, samples)
        result = train(self._config(), dataset)
        self.checkpoint_ = result.checkpoint
        self.log_ = result.log
        self.classes_ = np.arange(max(len(s.candidates) for s in dataset.train))
        self.net_, self.disc_ = result.checkpoint.build()
        self.n_features_in_ = dataset.train[0].features.shape[-1]
        return self

    @classmethod
    def from_checkpoint(cls, checkpoint: Checkpoint | str) -> "CLanGClassifier":
        if not isinstance(checkpoint, Checkpoint):
            checkpoint = Checkpoint.load(checkpoint)
        model = cls(**checkpoint.config.to_json())
        model.checkpoint_ = checkpoint
        model.net_, model.disc_ = checkpoint.build()
        model.classes_ = np.arange(4)
        model.n_features_in_ = checkpoint.dims["d_in"]
        model.log_ = None
        return model

    def _logits(self, X) -> np.ndarray:
        check_is_fitted(self, "net_")
        samples = check_samples(X)
        split = PreparedSplit(samples)
        check_node_stack(split.X[:1], d_in=self.n_features_in_)
        out = []
        with nk.precision("float32"):
            for lo in range(0, len(split), 64):
                batch = split.batch(np.arange(lo, min(len(split), lo + 64)))
                out.append(self.net_(batch).logits.data.astype(np.float64))
        return np.concatenate(out)

    def decision_function(self, X) -> np.ndarray:
        return self._logits(X)

    def predict_proba(self, X) -> np.ndarray:
        logits = self._logits(X)
        z = np.exp(logits - logits.max(axis=1, keepdims=True))
        return z / z.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        return self._logits(X).argmax(axis=1)

    def score(self, X, y=None, sample_weight=None) -> float:
        samples = check_samples(X)
        y = check_targets(samples, y)
        pred = self.predict(samples)
        w = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=float)
        return float(np.average(pred == y, weights=w))

    def evaluate(self, X, split: str = "val"):
        """Full metrics row (accuracy per question type and loss terms)."""
        check_is_fitted(self, "net_")
        samples = check_samples(X.split(split) if isinstance(X, SyntheticDataset) else X)
        return evaluate_split(self.net_, self.disc_, PreparedSplit(samples), self._config(),
                              self.checkpoint_.epoch, split)
