"""Curriculum masking of response blocks for the MLM predictor."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..numeric import ContractError

STRATEGIES = ("end", "start", "random", "none")


def mask_ratio(u: float, alpha: float) -> float:
    """Masking ratio ``min(1, u / alpha)`` at training progress ``u``."""
    if not 0.0 <= u <= 1.0:
        raise ContractError(f"progress {u} outside [0, 1]")
    if not 0.0 < alpha <= 1.0:
        raise ContractError(f"alpha {alpha} outside (0, 1]")
    return min(1.0, u / alpha)


def select_masked_positions(length: int, rho: float, strategy: str = "end",
                            rng: np.random.Generator | None = None) -> np.ndarray:
    """0-based positions to mask among the first ``length`` block positions.

    ``ceil(rho * length)`` positions are masked: a suffix for ``end``, a
    prefix for ``start``, a uniform sample for ``random``. ``none`` ignores
    ``rho`` and masks everything.
    """
    if length < 1:
        raise ContractError("effective response length must be >= 1")
    if not 0.0 <= rho <= 1.0:
        raise ContractError(f"masking ratio {rho} outside [0, 1]")
    if strategy == "none":
        return np.arange(length)
    # round first so that e.g. 0.3 * 10 does not ceil to 4
    k = min(length, math.ceil(round(rho * length, 9)))
    if strategy == "end":
        return np.arange(length - k, length)
    if strategy == "start":
        return np.arange(k)
    if strategy == "random":
        if rng is None:
            raise ContractError("random masking needs a generator")
        return np.sort(rng.choice(length, size=k, replace=False))
    raise ContractError(f"unknown masking strategy {strategy!r}")


@dataclass
class CurriculumState:
    alpha: float = 0.4
    strategy: str = "end"
    seed: int = 0
    progress: float = 0.0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ContractError(f"unknown masking strategy {self.strategy!r}")
        self._rng = np.random.default_rng(self.seed)

    @property
    def ratio(self) -> float:
        if self.strategy == "none":
            return 1.0
        return mask_ratio(self.progress, self.alpha)

    def positions(self, length: int) -> np.ndarray:
        return select_masked_positions(length, self.ratio, self.strategy, self._rng)
