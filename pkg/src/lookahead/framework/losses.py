"""Routing and response-modeling objectives."""
from __future__ import annotations

import numpy as np

from ..numeric import ContractError, ShapeError, Tensor
from ..numeric import autodiff as ad

CLAMP = 1e-7


def routing_loss_bce(scores: Tensor, labels) -> Tensor:
    """Mean binary cross-entropy over models (and over the batch, if any)."""
    labels = np.asarray(labels, dtype=np.float64)
    if scores.shape != labels.shape:
        raise ShapeError(f"routing loss: scores {scores.shape} vs labels {labels.shape}")
    if np.any((labels < 0) | (labels > 1)):
        raise ContractError("routing labels must lie in [0, 1]")
    p = ad.clip(scores, CLAMP, 1.0 - CLAMP)
    ll = ad.add(ad.mul(ad.log(p), labels), ad.mul(ad.log(ad.sub(1.0, p)), 1.0 - labels))
    return ad.neg(ad.mean(ll))


def joint_loss(route: Tensor, resp: Tensor | float, lam: float) -> Tensor:
    if lam < 0:
        raise ContractError("lambda must be >= 0")
    if lam == 0:
        return route
    return ad.add(route, ad.mul(resp, lam))


def kl_to_target(logits: Tensor, target: np.ndarray) -> Tensor:
    """Mean over the batch of KL(target || softmax(logits))."""
    target = np.asarray(target, dtype=np.float64)
    if logits.shape != target.shape:
        raise ShapeError(f"KL: logits {logits.shape} vs target {target.shape}")
    logq = ad.log_softmax(logits, axis=-1)
    safe = np.where(target > 0, target, 1.0)
    entropy_term = float(np.sum(np.where(target > 0, target * np.log(safe), 0.0)))
    cross = ad.sum(ad.mul(logq, target))
    n = target.shape[0] if target.ndim > 1 else 1
    return ad.mul(ad.sub(entropy_term, cross), 1.0 / n)


def block_weights(loss_mask: np.ndarray, block_ids: np.ndarray, n_blocks: int) -> np.ndarray:
    """Per-token weights giving each example ``(1/T) * sum_t mean_{j in block t} nll``.

    ``loss_mask`` and ``block_ids`` are ``[B, S]``; ``block_ids`` holds the
    1-based block of each position (0 outside blocks). Blocks without loss
    positions contribute zero. The result is also averaged over the batch.
    """
    b = loss_mask.shape[0]
    w = np.zeros(loss_mask.shape)
    for t in range(1, n_blocks + 1):
        sel = loss_mask & (block_ids == t)
        counts = sel.sum(axis=1, keepdims=True)
        w += np.where(sel, 1.0 / np.maximum(counts, 1), 0.0)
    return w / (n_blocks * b)
