"""Tiny pre-norm transformer usable as a causal or a bidirectional encoder."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..numeric import ContractError, Tensor
from ..numeric import autodiff as ad
from .masks import is_causal_compatible


@dataclass(frozen=True)
class TransformerConfig:
    n_layers: int = 4
    d_model: int = 128
    n_heads: int = 4
    d_ff: int = 512
    max_len: int = 512
    vocab_size: int = 264
    causal: bool = False

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ContractError(f"d_model {self.d_model} not divisible by {self.n_heads} heads")
        if min(self.n_layers, self.d_model, self.n_heads, self.d_ff, self.max_len, self.vocab_size) < 1:
            raise ContractError("transformer dimensions must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


def normal(rng: np.random.Generator, shape, std: float = 0.02) -> Tensor:
    return Tensor(rng.normal(0.0, std, size=shape), requires_grad=True)


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def ones(shape) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=True)


def init_transformer(cfg: TransformerConfig, rng: np.random.Generator, prefix: str = "backbone.") -> dict:
    d = cfg.d_model
    p = {
        "tok_emb": normal(rng, (cfg.vocab_size, d)),
        "pos_emb": normal(rng, (cfg.max_len, d)),
        "ln_f.g": ones(d), "ln_f.b": zeros(d),
        "lm_head.w": normal(rng, (d, cfg.vocab_size)), "lm_head.b": zeros(cfg.vocab_size),
    }
    out_std = 0.02 / math.sqrt(2 * cfg.n_layers)
    for i in range(cfg.n_layers):
        pre = f"layers.{i}."
        p.update({
            pre + "ln1.g": ones(d), pre + "ln1.b": zeros(d),
            pre + "attn.wqkv": normal(rng, (d, 3 * d)), pre + "attn.bqkv": zeros(3 * d),
            pre + "attn.wo": normal(rng, (d, d), out_std), pre + "attn.bo": zeros(d),
            pre + "ln2.g": ones(d), pre + "ln2.b": zeros(d),
            pre + "ff.w1": normal(rng, (d, cfg.d_ff)), pre + "ff.b1": zeros(cfg.d_ff),
            pre + "ff.w2": normal(rng, (cfg.d_ff, d), out_std), pre + "ff.b2": zeros(d),
        })
    return {prefix + k: v for k, v in p.items()}


@dataclass
class ForwardActivations:
    hidden: Tensor          # [B, S, d], after the final layer norm
    lm_w: Tensor
    lm_b: Tensor

    def logits(self, rows: Tensor | None = None) -> Tensor:
        """LM-head logits for ``rows`` (defaults to every position)."""
        h = self.hidden if rows is None else rows
        return h @ self.lm_w + self.lm_b


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return ad.add(ad.matmul(x, w), b)


def self_attention(x: Tensor, params: dict, pre: str, n_heads: int, mask: np.ndarray) -> Tensor:
    """Multi-head self attention. ``mask`` broadcasts to ``[B, S, S]``."""
    b, s, d = x.shape
    dh = d // n_heads
    qkv = linear(x, params[pre + "wqkv"], params[pre + "bqkv"])
    qkv = ad.transpose(ad.reshape(qkv, (b, s, 3, n_heads, dh)), (2, 0, 3, 1, 4))
    q, k, v = qkv[0], qkv[1], qkv[2]
    scores = ad.mul(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(dh))
    attn = ad.softmax(scores, axis=-1, mask=mask[:, None, :, :])
    out = ad.matmul(attn, v)
    out = ad.reshape(ad.transpose(out, (0, 2, 1, 3)), (b, s, d))
    return linear(out, params[pre + "wo"], params[pre + "bo"])


def transformer_forward(params: dict, cfg: TransformerConfig, tokens: np.ndarray, mask: np.ndarray,
                        positions: np.ndarray | None = None, prefix: str = "backbone.") -> ForwardActivations:
    """Run the encoder stack.

    ``tokens`` is ``[B, S]`` (or ``[S]``), ``mask`` is ``[B, S, S]`` or
    ``[S, S]``, ``positions`` defaults to ``0..S-1``.
    """
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.ndim == 1:
        tokens = tokens[None]
    b, s = tokens.shape
    if s > cfg.max_len:
        raise ContractError(f"sequence of {s} tokens exceeds max length {cfg.max_len}")
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim == 2:
        mask = mask[None]
    if mask.shape[-2:] != (s, s):
        raise ContractError(f"mask shape {mask.shape} does not match sequence length {s}")
    if cfg.causal and not is_causal_compatible(mask):
        raise ContractError("non-causal attention mask given to a causal model")
    if not mask.any(axis=-1).all():
        raise ContractError("attention mask has an empty row")
    if positions is None:
        positions = np.arange(s)
    positions = np.broadcast_to(np.asarray(positions, dtype=np.int64), (b, s))
    p = {k[len(prefix):]: v for k, v in params.items() if k.startswith(prefix)}
    x = ad.add(ad.embedding(p["tok_emb"], tokens), ad.embedding(p["pos_emb"], positions))
    for i in range(cfg.n_layers):
        pre = f"layers.{i}."
        h = ad.layer_norm(x, p[pre + "ln1.g"], p[pre + "ln1.b"])
        x = ad.add(x, self_attention(h, p, pre + "attn.", cfg.n_heads, mask))
        h = ad.layer_norm(x, p[pre + "ln2.g"], p[pre + "ln2.b"])
        h = ad.gelu(linear(h, p[pre + "ff.w1"], p[pre + "ff.b1"]))
        x = ad.add(x, linear(h, p[pre + "ff.w2"], p[pre + "ff.b2"]))
    x = ad.layer_norm(x, p["ln_f.g"], p["ln_f.b"])
    return ForwardActivations(x, p["lm_head.w"], p["lm_head.b"])


def clm_forward(params: dict, cfg: TransformerConfig, tokens, mask, positions=None,
                prefix: str = "backbone.") -> ForwardActivations:
    if not cfg.causal:
        raise ContractError("clm_forward needs a causal configuration")
    return transformer_forward(params, cfg, tokens, mask, positions, prefix)


def mlm_forward(params: dict, cfg: TransformerConfig, tokens, valid: np.ndarray | None = None,
                prefix: str = "backbone.") -> ForwardActivations:
    """Bidirectional pass; ``valid`` marks non-padding positions."""
    from .masks import padding_mask
    from .tokenizer import CLS, PAD

    if cfg.causal:
        raise ContractError("mlm_forward needs a bidirectional configuration")
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.ndim == 1:
        tokens = tokens[None]
    if not np.all(tokens[:, 0] == CLS):
        raise ContractError("MLM input must start with CLS")
    valid = tokens != PAD if valid is None else np.asarray(valid, dtype=bool).reshape(tokens.shape)
    return transformer_forward(params, cfg, tokens, padding_mask(valid), None, prefix)
