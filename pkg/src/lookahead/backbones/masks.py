"""Boolean attention masks; entry (i, j) is True iff position i may attend to j."""
from __future__ import annotations

import numpy as np

from ..numeric import ContractError


def causal_mask(n: int) -> np.ndarray:
    return np.tril(np.ones((n, n), dtype=bool))


def build_block_mask(q: int, block_lengths: list[int]) -> np.ndarray:
    """Causal mask over ``x || block_1 || ... || block_T``.

    Every block sees the whole query prefix and causally its own tokens, but
    nothing of any other block.
    """
    if q < 1:
        raise ContractError("query length must be >= 1")
    n = q + int(np.sum(block_lengths))
    mask = np.zeros((n, n), dtype=bool)
    mask[:q, :q] = causal_mask(q)
    start = q
    for length in block_lengths:
        end = start + length
        mask[start:end, :q] = True
        mask[start:end, start:end] = causal_mask(length)
        start = end
    return mask


def build_batched_mid_mask(q: int, n_models: int) -> np.ndarray:
    """Inference mask for ``x || MID_1 || ... || MID_T``."""
    if n_models < 1:
        raise ContractError("need at least one model identifier")
    return build_block_mask(q, [1] * n_models)


def block_positions(q: int, block_lengths: list[int]) -> np.ndarray:
    """Position ids that restart at ``q`` in every block, so each block sees
    exactly the positions it would get in a standalone pass."""
    parts = [np.arange(q)] + [np.arange(q, q + length) for length in block_lengths]
    return np.concatenate(parts)


def padding_mask(valid: np.ndarray) -> np.ndarray:
    """Bidirectional mask from a ``[B, S]`` validity array.

    Padding rows may still attend to the valid keys so no row is empty.
    """
    valid = np.asarray(valid, dtype=bool)
    if not valid.any(axis=-1).all():
        raise ContractError("a sequence has no non-padding token")
    return np.broadcast_to(valid[:, None, :], valid.shape[:1] + valid.shape[1:] * 2).copy()


def is_causal_compatible(mask: np.ndarray) -> bool:
    n = mask.shape[-1]
    return not np.any(mask & ~causal_mask(n))
