"""Lookahead routers: sequence-level (causal) and token-level (masked) predictors."""
from __future__ import annotations

import copy
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from ..backbones import (CLS, EOS, PAD, TransformerConfig, Vocabulary, block_positions,
                         build_block_mask, cls_attention_pool, init_pool, init_transformer,
                         transformer_forward)
from ..backbones.masks import padding_mask
from ..backbones.transformer import normal, zeros
from ..numeric import ContractError, Tensor, no_grad
from ..numeric import autodiff as ad
from .curriculum import STRATEGIES, CurriculumState
from .losses import block_weights, joint_loss, routing_loss_bce

log = logging.getLogger(__name__)


class InputError(ContractError):
    """A query cannot be encoded within the model's length budget."""


@dataclass
class LookaheadConfig:
    variant: str = "mlm"
    n_models: int = 3
    lam: float | None = None
    m: int = 64
    alpha: float = 0.4
    strategy: str = "end"
    threshold: float = 0.8
    soft_labels: bool = False
    route_on_masked: bool = True      # MLM: routing loss on the all-MID layout during the curriculum
    n_layers: int = 4
    d_model: int = 128
    n_heads: int = 4
    d_ff: int = 512
    max_len: int = 512
    max_query_tokens: int = 128
    max_response_tokens: int = 128

    def __post_init__(self):
        if self.variant not in ("clm", "mlm"):
            raise ContractError(f"unknown variant {self.variant!r}")
        if self.lam is None:
            self.lam = 0.5 if self.variant == "clm" else 0.2
        if self.lam < 0 or self.m < 1 or not 0 < self.alpha <= 1 or self.n_models < 2:
            raise ContractError("need lam >= 0, m >= 1, 0 < alpha <= 1, T >= 2")
        if self.strategy not in STRATEGIES:
            raise ContractError(f"unknown masking strategy {self.strategy!r}")

    def backbone(self, causal: bool) -> TransformerConfig:
        return TransformerConfig(self.n_layers, self.d_model, self.n_heads, self.d_ff, self.max_len,
                                 Vocabulary(self.n_models).size, causal)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RoutingDecision:
    scores: np.ndarray
    selected: int                 # 0-based position in ``scores``
    latency_ms: float = 0.0

    @property
    def index(self) -> int:
        """1-based model index, as used on the wire."""
        return self.selected + 1


def select_index(scores) -> int:
    """Argmax with ties going to the lowest index."""
    return int(np.argmax(np.asarray(scores)))


@dataclass
class LossParts:
    total: Tensor
    route: float
    resp: float
    scores: np.ndarray = field(repr=False, default=None)


def _query_text(item) -> str:
    return item if isinstance(item, str) else item.query


def _targets(examples, soft: bool) -> np.ndarray:
    if soft:
        return np.array([ex.normalized_scores for ex in examples], dtype=np.float64)
    return np.array([ex.labels for ex in examples], dtype=np.float64)


class Router:
    """Shared plumbing for trainable routers built on a transformer backbone."""

    kind = "router"
    causal = False

    def __init__(self, config: LookaheadConfig, params: dict | None = None, seed: int = 0):
        self.config = config
        self.vocab = Vocabulary(config.n_models)
        self.bcfg = config.backbone(self.causal)
        self.params = params if params is not None else self.init_params(np.random.default_rng(seed))
        self.metadata: dict = {}

    @property
    def n_models(self) -> int:
        return self.config.n_models

    def init_params(self, rng: np.random.Generator) -> dict:
        raise NotImplementedError

    def parameters(self) -> dict[str, Tensor]:
        return self.params

    def descriptor(self) -> dict:
        return {"kind": self.kind, "config": self.config.to_dict()}

    def narrowed(self) -> "Router":
        """Copy whose weights are rounded to float32 (the checkpoint precision)."""
        clone = copy.copy(self)
        clone.params = {k: Tensor(v.value.astype(np.float32).astype(np.float64), requires_grad=True)
                        for k, v in self.params.items()}
        clone.metadata = dict(self.metadata)
        return clone

    def query_ids(self, query: str, prefix: int) -> list[int]:
        ids = list(query.encode("utf-8"))[: self.config.max_query_tokens]
        return [prefix] + ids

    # -- inference
    def _scores_batch(self, items) -> Tensor:
        raise NotImplementedError

    def scores(self, items: Sequence, batch_size: int = 64) -> np.ndarray:
        out = []
        with no_grad():
            for i in range(0, len(items), batch_size):
                out.append(self._scores_batch(items[i:i + batch_size]).value)
        return np.concatenate(out, axis=0) if out else np.zeros((0, self.n_models))

    def route(self, query) -> RoutingDecision:
        t0 = time.perf_counter()
        s = self.scores([query])[0]
        return RoutingDecision(s, select_index(s), (time.perf_counter() - t0) * 1e3)

    def states(self, items: Sequence, batch_size: int = 64) -> np.ndarray:
        raise NotImplementedError

    # -- training
    def loss(self, examples, progress: float = 1.0) -> LossParts:
        raise NotImplementedError

    def _head_params(self, rng, d: int, n_out: int) -> dict:
        # fan-in scale on the hidden layer: the encoder is trained from scratch, and
        # a 0.02 layer in front of the zero output layer starves it of gradient
        return {"head.w1": normal(rng, (d, d), 1.0 / math.sqrt(d)), "head.b1": zeros(d),
                "head.w2": zeros((d, n_out)), "head.b2": zeros(n_out)}

    def _mlp(self, x: Tensor) -> Tensor:
        p = self.params
        h = ad.gelu(ad.add(ad.matmul(x, p["head.w1"]), p["head.b1"]))
        return ad.add(ad.matmul(h, p["head.w2"]), p["head.b2"])


# ---------------------------------------------------------------- CLM variant

class CLMRouter(Router):
    """Sequence-level predictor: the hidden state at MID_t is the latent of model t."""

    kind = "lookahead-clm"
    causal = True

    def init_params(self, rng):
        p = init_transformer(self.bcfg, rng)
        d = self.config.d_model
        p["route.w"] = zeros((d, 1))
        p["route.b"] = zeros(1)
        return p

    def _layout(self, query: str, responses: list[list[int]] | None):
        """Tokens, positions, mask, MID indices and (targets, block ids) of one record."""
        pre = self.query_ids(query, EOS)
        q = len(pre)
        t_count = self.n_models
        blocks, targets = [], []
        for t in range(t_count):
            mid = self.vocab.mid(t + 1)
            if responses is None:
                blocks.append([mid])
                targets.append([])
            else:
                y = responses[t]
                blocks.append([mid] + y[:-1] if y else [mid])
                targets.append(y)
        lengths = [len(b) for b in blocks]
        tokens = pre + [tok for b in blocks for tok in b]
        if len(tokens) > self.config.max_len:
            raise InputError(f"input of {len(tokens)} tokens exceeds max length {self.config.max_len}")
        mid_idx = np.cumsum([q] + lengths[:-1])
        return tokens, block_positions(q, lengths), build_block_mask(q, lengths), mid_idx, targets

    def _batch(self, queries, responses=None):
        rows = [self._layout(q, None if responses is None else responses[i]) for i, q in enumerate(queries)]
        b = len(rows)
        s = max(len(r[0]) for r in rows)
        tokens = np.full((b, s), PAD, dtype=np.int64)
        positions = np.zeros((b, s), dtype=np.int64)
        mask = np.zeros((b, s, s), dtype=bool)
        mask[:, :, 0] = True                      # padding rows look at the first token only
        mids = np.zeros((b, self.n_models), dtype=np.int64)
        for i, (tok, pos, msk, mid_idx, _) in enumerate(rows):
            n = len(tok)
            tokens[i, :n] = tok
            positions[i, :n] = pos
            mask[i, :n, :] = False
            mask[i, :n, :n] = msk
            mids[i] = mid_idx
        return tokens, positions, mask, mids, [r[4] for r in rows]

    def _forward(self, tokens, positions, mask, mids):
        acts = transformer_forward(self.params, self.bcfg, tokens, mask, positions)
        b = tokens.shape[0]
        latents = acts.hidden[np.arange(b)[:, None], mids]          # [B, T, d]
        logit = ad.add(ad.matmul(latents, self.params["route.w"]), self.params["route.b"])
        scores = ad.sigmoid(ad.reshape(logit, (b, self.n_models)))
        return acts, latents, scores

    def predict_latents(self, queries: Sequence) -> tuple[np.ndarray, np.ndarray]:
        """One pass over ``x || MID_1 .. MID_T`` per query: latents [B, T, d], scores [B, T]."""
        with no_grad():
            tokens, positions, mask, mids, _ = self._batch([_query_text(q) for q in queries])
            _, latents, scores = self._forward(tokens, positions, mask, mids)
        return latents.value, scores.value

    def _scores_batch(self, items):
        tokens, positions, mask, mids, _ = self._batch([_query_text(q) for q in items])
        return self._forward(tokens, positions, mask, mids)[2]

    def states(self, items, batch_size: int = 64):
        out = []
        for i in range(0, len(items), batch_size):
            lat, _ = self.predict_latents(items[i:i + batch_size])
            out.append(lat.reshape(lat.shape[0], -1))
        return np.concatenate(out)

    def encode_responses(self, ex) -> list[list[int]]:
        out = []
        for t, r in enumerate(ex.responses):
            y = list(r.encode("utf-8"))[: self.config.max_response_tokens]
            if not y:
                log.warning("record %s: empty response for model %d contributes no reconstruction loss",
                            ex.id, t + 1)
            out.append(y)
        return out

    def reconstruction_loss(self, acts, targets, b: int, mids) -> Tensor:
        """(1/T) sum_t mean-token NLL of y_t given x || MID_t, averaged over the batch."""
        rows_b, rows_s, tgt, w = [], [], [], []
        t_count = self.n_models
        for i in range(b):
            for t, y in enumerate(targets[i]):
                if not y:
                    continue
                start = mids[i, t]
                for j, tok in enumerate(y):
                    rows_b.append(i)
                    rows_s.append(start + j)
                    tgt.append(tok)
                    w.append(1.0 / (len(y) * t_count * b))
        if not tgt:
            return Tensor(0.0)
        rows = acts.hidden[np.array(rows_b), np.array(rows_s)]
        return ad.cross_entropy(acts.logits(rows), np.array(tgt), np.array(w))

    def loss(self, examples, progress: float = 1.0) -> LossParts:
        cfg = self.config
        responses = [self.encode_responses(ex) for ex in examples] if cfg.lam > 0 else None
        tokens, positions, mask, mids, targets = self._batch([ex.query for ex in examples], responses)
        acts, _, scores = self._forward(tokens, positions, mask, mids)
        route = routing_loss_bce(scores, _targets(examples, cfg.soft_labels))
        resp = self.reconstruction_loss(acts, targets, len(examples), mids) if cfg.lam > 0 else Tensor(0.0)
        return LossParts(joint_loss(route, resp, cfg.lam), route.item(), resp.item(), scores.value)


# ---------------------------------------------------------------- MLM variant

def mlm_build_input(vocab: Vocabulary, query_ids: list[int], responses: list[list[int]] | None, m: int,
                    curriculum: CurriculumState | None = None, reveal: bool = False):
    """Lay out ``CLS || x || block_1 .. block_T``.

    ``query_ids`` already starts with CLS. With ``responses`` None every
    block is ``m`` copies of MID_t (inference). Otherwise block t holds the
    first ``m`` tokens of y_t with the curriculum's positions replaced by
    MID_t, and PAD after a short response; ``reveal`` keeps every response
    token visible. Returns ``(tokens, loss_positions, loss_targets, block_ids)``.
    """
    tokens = list(query_ids)
    block_ids = [0] * len(tokens)
    loss_pos, loss_tgt = [], []
    for t in range(vocab.n_models):
        mid = vocab.mid(t + 1)
        start = len(tokens)
        if responses is None:
            block = [mid] * m
        else:
            y = responses[t][:m]
            block = list(y) + [PAD] * (m - len(y))
            if y and not reveal:
                if curriculum is None:
                    raise ContractError("training layout needs a curriculum")
                for j in curriculum.positions(len(y)):
                    block[j] = mid
                    loss_pos.append(start + int(j))
                    loss_tgt.append(y[j])
        tokens.extend(block)
        block_ids.extend([t + 1] * m)
    return tokens, loss_pos, loss_tgt, block_ids


class MLMRouter(Router):
    """Token-level predictor: MID blocks are reconstructed jointly, the CLS
    state pools over query and MID states before the routing MLP."""

    kind = "lookahead-mlm"
    causal = False
    reveal_responses = False

    def __init__(self, config: LookaheadConfig, params: dict | None = None, seed: int = 0,
                 curriculum: CurriculumState | None = None):
        super().__init__(config, params, seed)
        self.curriculum = curriculum or CurriculumState(config.alpha, config.strategy, seed)

    def init_params(self, rng):
        p = init_transformer(self.bcfg, rng)
        d = self.config.d_model
        p.update(init_pool(d, rng))
        p.update(self._head_params(rng, d, self.n_models))
        return p

    def _responses(self, ex) -> list[list[int]]:
        return [list(r.encode("utf-8"))[: self.config.m] for r in ex.responses]

    def _batch(self, items, training: bool):
        rows = []
        for it in items:
            qids = self.query_ids(_query_text(it), CLS)
            if training or self.reveal_responses:
                resp = self._responses(it)
            else:
                resp = None
            rows.append(mlm_build_input(self.vocab, qids, resp, self.config.m, self.curriculum,
                                        reveal=self.reveal_responses))
        s = max(len(r[0]) for r in rows)
        if s > self.config.max_len:
            raise InputError(f"input of {s} tokens exceeds max length {self.config.max_len}")
        b = len(rows)
        tokens = np.full((b, s), PAD, dtype=np.int64)
        block_ids = np.zeros((b, s), dtype=np.int64)
        loss_mask = np.zeros((b, s), dtype=bool)
        targets = np.zeros((b, s), dtype=np.int64)
        for i, (tok, lpos, ltgt, bids) in enumerate(rows):
            tokens[i, :len(tok)] = tok
            block_ids[i, :len(bids)] = bids
            loss_mask[i, lpos] = True
            targets[i, lpos] = ltgt
        return tokens, loss_mask, targets, block_ids

    def _forward(self, tokens):
        valid = tokens != PAD
        acts = transformer_forward(self.params, self.bcfg, tokens, padding_mask(valid))
        h = acts.hidden
        h_cls = h[:, 0, :]
        # residual around the pooling attention, as in a transformer sublayer
        pooled = ad.add(h_cls, cls_attention_pool(self.params, h_cls, h[:, 1:, :], valid[:, 1:]))
        scores = ad.sigmoid(self._mlp(pooled))
        return acts, pooled, scores

    def _scores_batch(self, items):
        tokens, *_ = self._batch(items, training=False)
        return self._forward(tokens)[2]

    def states(self, items, batch_size: int = 64):
        out = []
        with no_grad():
            for i in range(0, len(items), batch_size):
                tokens, *_ = self._batch(items[i:i + batch_size], training=False)
                out.append(self._forward(tokens)[1].value)
        return np.concatenate(out)

    def latents(self, query) -> np.ndarray:
        """Stacked MID states, ``[T, m, d]``, for one query."""
        with no_grad():
            tokens, _, _, block_ids = self._batch([query], training=False)
            acts = transformer_forward(self.params, self.bcfg, tokens, padding_mask(tokens != PAD))
        h = acts.hidden.value[0]
        return np.stack([h[block_ids[0] == t + 1] for t in range(self.n_models)])

    def reconstruction_loss(self, acts, loss_mask, targets, block_ids) -> Tensor:
        """(1/T) sum_t mean NLL over the masked positions of block t, averaged over the batch."""
        loss_mask = np.asarray(loss_mask, dtype=bool)
        if loss_mask.shape != np.shape(targets) or loss_mask.shape != np.shape(block_ids):
            raise ContractError(f"loss positions {loss_mask.shape} vs targets {np.shape(targets)} "
                                f"vs block ids {np.shape(block_ids)}")
        if not loss_mask.any():
            log.warning("no masked positions in batch; reconstruction loss is 0")
            return Tensor(0.0)
        w = block_weights(loss_mask, block_ids, self.n_models)
        bi, si = np.nonzero(loss_mask)
        rows = acts.hidden[bi, si]
        return ad.cross_entropy(acts.logits(rows), targets[bi, si], w[bi, si])

    def loss(self, examples, progress: float = 1.0) -> LossParts:
        cfg = self.config
        self.curriculum.progress = min(1.0, max(0.0, progress))
        with_resp = cfg.lam > 0 and not self.reveal_responses
        partial = self.curriculum.ratio < 1.0 and not self.reveal_responses
        if partial and cfg.route_on_masked:
            # the router only ever sees all-MID blocks at inference, so score that
            # layout; the partly revealed one feeds the reconstruction loss alone
            _, _, scores = self._forward(self._batch(examples, training=False)[0])
            resp = Tensor(0.0)
            if with_resp:
                tokens, loss_mask, targets, block_ids = self._batch(examples, training=True)
                acts = transformer_forward(self.params, self.bcfg, tokens, padding_mask(tokens != PAD))
                resp = self.reconstruction_loss(acts, loss_mask, targets, block_ids)
        else:
            tokens, loss_mask, targets, block_ids = self._batch(examples, training=True)
            acts, _, scores = self._forward(tokens)
            resp = self.reconstruction_loss(acts, loss_mask, targets, block_ids) if with_resp else Tensor(0.0)
        route = routing_loss_bce(scores, _targets(examples, cfg.soft_labels))
        return LossParts(joint_loss(route, resp, cfg.lam), route.item(), resp.item(), scores.value)


def build_router(config: LookaheadConfig, seed: int = 0, **kw) -> Router:
    cls = CLMRouter if config.variant == "clm" else MLMRouter
    return cls(config, seed=seed, **kw)


def route(router: Router, query) -> RoutingDecision:
    return router.route(query)


__all__ = ["LookaheadConfig", "RoutingDecision", "select_index", "Router", "CLMRouter", "MLMRouter",
           "mlm_build_input", "build_router", "route", "InputError", "LossParts"]
