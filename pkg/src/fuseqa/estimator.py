"""Scikit-learn style front door for the whole pipeline.

X is a list of Example; y is the list of answer indices. get_params /
set_params expose the retrieval and model knobs so the classifier composes
with sklearn model selection utilities.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .context import ContextConfig, PseudoEncoder
from .data import Example
from .kg import KnowledgeGraph, TemplateTable, relation_stats
from .model import FusionModel, ModelConfig
from .training import TrainConfig, prepare_examples, score_candidates, train


class QAFusionClassifier(BaseEstimator, ClassifierMixin):
    def __init__(
        self,
        kg: KnowledgeGraph | None = None,
        templates: TemplateTable | None = None,
        fusion_mode: str = "cross_attention",
        n_heads: int = 1,
        n_layers: int = 2,
        d_lm: int = 16,
        d_gnn: int = 16,
        vocab_size: int = 128,
        max_seq_len: int = 32,
        max_hop: int = 3,
        cap: int = 64,
        lam: float = 0.5,
        top_k: int = 16,
        learning_rate: float = 0.05,
        steps: int = 500,
        momentum: float = 0.9,
        seed: int = 0,
    ):
        self.kg = kg
        self.templates = templates
        self.fusion_mode = fusion_mode
        self.n_heads = n_heads
        self.n_layers = n_layers
        self.d_lm = d_lm
        self.d_gnn = d_gnn
        self.vocab_size = vocab_size
        self.max_seq_len = max_seq_len
        self.max_hop = max_hop
        self.cap = cap
        self.lam = lam
        self.top_k = top_k
        self.learning_rate = learning_rate
        self.steps = steps
        self.momentum = momentum
        self.seed = seed

    def _configs(self):
        mc = ModelConfig(
            n_layers=self.n_layers,
            d_lm=self.d_lm,
            d_gnn=self.d_gnn,
            n_heads=self.n_heads,
            fusion_mode=self.fusion_mode,
            vocab_size=self.vocab_size,
            max_seq_len=self.max_seq_len,
            n_relations=self.kg.n_relations,
            seed=self.seed,
        )
        cc = ContextConfig(max_hop=self.max_hop, cap=self.cap, lam=self.lam, k=self.top_k)
        tc = TrainConfig(
            learning_rate=self.learning_rate,
            steps=self.steps,
            momentum=self.momentum,
            seed=self.seed,
        )
        return mc, cc, tc

    def _prepare(self, X: list[Example], model_config, ctx_config):
        encoder = PseudoEncoder(dim=64)
        stats = relation_stats(self.kg)
        return prepare_examples(
            X, self.kg, self.templates or TemplateTable(), encoder, stats,
            ctx_config, model_config,
        )

    def fit(self, X: list[Example], y=None):
        if self.kg is None:
            raise ValueError("a KnowledgeGraph is required before fitting")
        if y is not None:
            X = [replace(ex, answer=int(a)) for ex, a in zip(X, y)]
        mc, cc, tc = self._configs()
        self.model_ = FusionModel(mc)
        prepared = self._prepare(X, mc, cc)
        self.model_, self.train_metrics_ = train(self.model_, prepared, tc)
        return self

    def predict(self, X: list[Example]) -> np.ndarray:
        if not hasattr(self, "model_"):
            raise NotFittedError("call fit before predict")
        mc, cc, _ = self._configs()
        prepared = self._prepare(X, mc, cc)
        return np.array([score_candidates(self.model_, p)[1] for p in prepared])

    def score(self, X: list[Example], y=None) -> float:
        preds = self.predict(X)
        gold = np.array([ex.answer for ex in X] if y is None else list(y))
        return float((preds == gold).mean())
