"""Scikit-learn compatible front end for the SRL-GNN emotion classifier.

Samples are (ContextWindow, list[SrlFrame]) pairs (a bare ContextWindow
means no SRL coverage); targets are emotion label strings. Hyperparameters
mirror the model/training configuration so the estimator composes with
sklearn tooling (clone, get_params, pipelines).
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .corpus import ContextWindow, LabelSet
from .encoder import Vocab, tokenize
from .model import ModelConfig, SrlGnnModel, classify_utterance
from .pipeline import Sample, fit_model


def _as_pair(x) -> tuple[ContextWindow, list]:
    if isinstance(x, ContextWindow):
        return x, []
    window, frames = x
    return window, list(frames)


class SrlGnnClassifier(BaseEstimator, ClassifierMixin):
    def __init__(self, labels="iemocap4", d_lm=64, d_gcn=32, n_gcn_layers=1,
                 n_enc_layers=2, n_heads=2, t_max=128, attention_mode="softmax",
                 neighbor_transform="learned", activation="relu", lr=5e-6,
                 epochs=9, batch_size=4, seed=0, precision="f32"):
        self.labels = labels
        self.d_lm = d_lm
        self.d_gcn = d_gcn
        self.n_gcn_layers = n_gcn_layers
        self.n_enc_layers = n_enc_layers
        self.n_heads = n_heads
        self.t_max = t_max
        self.attention_mode = attention_mode
        self.neighbor_transform = neighbor_transform
        self.activation = activation
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed
        self.precision = precision

    def _label_set(self) -> LabelSet:
        if isinstance(self.labels, str):
            return LabelSet.named(self.labels)
        return LabelSet(tuple(self.labels))

    def _model_config(self) -> ModelConfig:
        return ModelConfig(
            d_lm=self.d_lm, d_gcn=self.d_gcn, n_gcn_layers=self.n_gcn_layers,
            n_enc_layers=self.n_enc_layers, n_heads=self.n_heads,
            t_max=self.t_max, attention_mode=self.attention_mode,
            neighbor_transform=self.neighbor_transform,
            activation=self.activation, seed=self.seed,
        )

    def fit(self, X, y):
        labels = self._label_set()
        samples = []
        for x, gold in zip(X, y):
            window, frames = _as_pair(x)
            if gold not in labels:
                raise ValueError(f"target label {gold!r} not in {list(labels)}")
            samples.append(Sample(window, frames, gold))
        texts = [s.window.target.text for s in samples] + [
            u.text for s in samples for u in s.window.context
        ]
        vocab = Vocab.build(texts, extra_tokens=[t for l in labels for t in tokenize(l)])
        self.model_ = SrlGnnModel.initialize(
            self._model_config(), vocab, labels, self.precision
        )
        self.classes_ = np.array(list(labels))
        fit_model(self.model_, samples, self.lr, self.epochs, self.batch_size,
                  self.seed)
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("call fit before predict")

    def predict(self, X):
        self._check_fitted()
        out = []
        for x in X:
            window, frames = _as_pair(x)
            out.append(classify_utterance(self.model_, window, frames).predicted)
        return np.array(out)

    def decision_function(self, X):
        """Per-emotion binary logits, columns in classes_ order."""
        self._check_fitted()
        rows = []
        for x in X:
            window, frames = _as_pair(x)
            logits = classify_utterance(self.model_, window, frames).per_emotion_logits
            rows.append([logits[label] for label in self.classes_])
        return np.array(rows)
