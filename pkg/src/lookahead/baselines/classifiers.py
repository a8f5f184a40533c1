"""Query-only classifier routers: a multi-label classifier and a distribution predictor."""
from __future__ import annotations

import numpy as np

from ..backbones import CLS, EOS, PAD, causal_mask, transformer_forward
from ..backbones.masks import padding_mask
from ..backbones import init_transformer
from ..framework.losses import kl_to_target, routing_loss_bce
from ..framework.routers import LookaheadConfig, LossParts, Router, _query_text, _targets
from ..numeric import ContractError, Tensor, no_grad
from ..numeric import autodiff as ad


class QueryClassifier(Router):
    """Encoder over the bare query; CLS state (bidirectional) or last-token
    state (causal) feeds a two-layer MLP with T outputs."""

    kind = "mlc"

    def __init__(self, config: LookaheadConfig, params=None, seed: int = 0):
        self.causal = config.variant == "clm"
        super().__init__(config, params, seed)

    def init_params(self, rng):
        p = init_transformer(self.bcfg, rng)
        p.update(self._head_params(rng, self.config.d_model, self.n_models))
        return p

    def _batch(self, items):
        # the query is the whole input here, so clip it to the context window
        cap = self.config.max_len
        rows = [self.query_ids(_query_text(it), EOS if self.causal else CLS)[:cap] for it in items]
        s = max(len(r) for r in rows)
        tokens = np.full((len(rows), s), PAD, dtype=np.int64)
        for i, r in enumerate(rows):
            tokens[i, :len(r)] = r
        return tokens, np.array([len(r) for r in rows])

    def _features(self, items) -> Tensor:
        tokens, lengths = self._batch(items)
        valid = np.arange(tokens.shape[1])[None, :] < lengths[:, None]
        if self.causal:
            # right padding: real tokens never see the pads after them
            h = transformer_forward(self.params, self.bcfg, tokens, causal_mask(tokens.shape[1])).hidden
            return h[np.arange(len(items)), lengths - 1]
        h = transformer_forward(self.params, self.bcfg, tokens, padding_mask(valid)).hidden
        return h[:, 0, :]

    def _logits(self, items) -> Tensor:
        return self._mlp(self._features(items))

    def _scores_batch(self, items):
        return ad.sigmoid(self._logits(items))

    def states(self, items, batch_size: int = 64):
        out = []
        with no_grad():
            for i in range(0, len(items), batch_size):
                out.append(self._features(items[i:i + batch_size]).value)
        return np.concatenate(out)

    def loss(self, examples, progress: float = 1.0) -> LossParts:
        scores = ad.sigmoid(self._logits(examples))
        route = routing_loss_bce(scores, _targets(examples, self.config.soft_labels))
        return LossParts(route, route.item(), 0.0, scores.value)


class MLCRouter(QueryClassifier):
    kind = "mlc"


class ZooterRouter(QueryClassifier):
    """Predicts a distribution over models, fitted by KL to ``softmax(s / tau)``."""

    kind = "zooter"

    def __init__(self, config: LookaheadConfig, params=None, seed: int = 0, tau: float = 1.0):
        if not tau > 0:
            raise ContractError(f"temperature must be > 0, got {tau}")
        self.tau = float(tau)
        super().__init__(config, params, seed)

    def descriptor(self) -> dict:
        return {**super().descriptor(), "tau": self.tau}

    def target(self, examples) -> np.ndarray:
        s = np.array([ex.normalized_scores for ex in examples], dtype=np.float64) / self.tau
        s -= s.max(axis=1, keepdims=True)
        e = np.exp(s)
        return e / e.sum(axis=1, keepdims=True)

    def _scores_batch(self, items):
        return ad.softmax(self._logits(items), axis=-1)

    def loss(self, examples, progress: float = 1.0) -> LossParts:
        logits = self._logits(examples)
        kl = kl_to_target(logits, self.target(examples))
        return LossParts(kl, kl.item(), 0.0, None)


__all__ = ["QueryClassifier", "MLCRouter", "ZooterRouter"]
