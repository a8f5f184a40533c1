"""Reference policies: uniform random, ground-truth oracle and reward-model selection."""
from __future__ import annotations

import numpy as np

from ..framework.routers import RoutingDecision, select_index
from ..numeric import ContractError


def random_route(n_models: int, rng: np.random.Generator) -> RoutingDecision:
    if n_models < 1:
        raise ContractError("need at least one model")
    pick = int(rng.integers(n_models))
    scores = np.zeros(n_models)
    scores[pick] = 1.0
    return RoutingDecision(scores, pick)


def oracle_route(scores) -> RoutingDecision:
    if scores is None:
        raise ContractError("oracle routing needs ground-truth scores")
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1 or s.size == 0 or not np.all(np.isfinite(s)):
        raise ContractError("oracle routing needs a finite score vector")
    return RoutingDecision(s, select_index(s))


def reward_select(judge_scores) -> RoutingDecision:
    """Pick the response the judge rates highest (all responses were generated)."""
    if judge_scores is None:
        raise ContractError("reward selection needs judge scores")
    s = np.asarray(judge_scores, dtype=np.float64)
    return RoutingDecision(s, select_index(s))


class RandomRouter:
    kind = "random"

    def __init__(self, n_models: int, seed: int = 0):
        self._n = n_models
        self.rng = np.random.default_rng(seed)

    @property
    def n_models(self) -> int:
        return self._n

    def scores(self, items, batch_size: int = 0) -> np.ndarray:
        out = np.zeros((len(items), self._n))
        out[np.arange(len(items)), self.rng.integers(self._n, size=len(items))] = 1.0
        return out

    def route(self, query) -> RoutingDecision:
        return random_route(self._n, self.rng)


class OracleRouter:
    """Reads the attached ground-truth scores (normalized by default)."""

    kind = "oracle"

    def __init__(self, field: str = "normalized_scores"):
        self.field = field

    def scores(self, items, batch_size: int = 0) -> np.ndarray:
        rows = [getattr(it, self.field, None) for it in items]
        if any(r is None for r in rows):
            raise ContractError("oracle routing needs ground-truth scores on every record")
        return np.array(rows, dtype=np.float64)

    def route(self, item) -> RoutingDecision:
        return oracle_route(getattr(item, self.field, None))


class RewardSelectRouter(OracleRouter):
    """Reward-model selection given a judge: ``judge(example) -> scores``."""

    kind = "reward"

    def __init__(self, judge):
        super().__init__()
        self.judge = judge

    def scores(self, items, batch_size: int = 0) -> np.ndarray:
        return np.array([self.judge(it) for it in items], dtype=np.float64)

    def route(self, item) -> RoutingDecision:
        return reward_select(self.judge(item))


__all__ = ["random_route", "oracle_route", "reward_select", "RandomRouter", "OracleRouter", "RewardSelectRouter"]
