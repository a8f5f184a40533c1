"""Single-head attention pooling with the CLS state as the query."""
from __future__ import annotations

import math

import numpy as np

from ..numeric import ContractError, Tensor
from ..numeric import autodiff as ad
from .transformer import normal


def init_pool(d: int, rng: np.random.Generator, prefix: str = "pool.") -> dict:
    return {prefix + "wq": normal(rng, (d, d)), prefix + "wk": normal(rng, (d, d)),
            prefix + "wv": normal(rng, (d, d))}


def cls_attention_pool(params: dict, h_cls: Tensor, keys: Tensor, key_valid: np.ndarray | None = None,
                       prefix: str = "pool.", return_weights: bool = False):
    """Pool ``keys`` ([B, K, d]) with ``h_cls`` ([B, d]) as the query.

    Returns ``softmax(q K^T / sqrt(d)) V`` with learned query/key/value
    projections, shape ``[B, d]``.
    """
    wq, wk, wv = params[prefix + "wq"], params[prefix + "wk"], params[prefix + "wv"]
    d = wq.shape[0]
    if h_cls.shape[-1] != d or keys.shape[-1] != d:
        raise ContractError(f"pooling width mismatch: cls {h_cls.shape}, keys {keys.shape}, d={d}")
    b, k, _ = keys.shape
    q = ad.reshape(ad.matmul(h_cls, wq), (b, 1, d))
    kk = ad.matmul(keys, wk)
    vv = ad.matmul(keys, wv)
    scores = ad.mul(ad.matmul(q, ad.transpose(kk, (0, 2, 1))), 1.0 / math.sqrt(d))
    mask = None if key_valid is None else np.asarray(key_valid, dtype=bool)[:, None, :]
    weights = ad.softmax(scores, axis=-1, mask=mask)
    pooled = ad.reshape(ad.matmul(weights, vv), (b, d))
    if return_weights:
        return pooled, weights.value[:, 0, :]
    return pooled
