"""Hidden-state mutual-information probe against a response-reading classifier."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..framework.routers import MLMRouter
from ..numeric import ContractError
from .mine import MineConfig, MineResult, mine_estimate


class ResponseOracleClassifier(MLMRouter):
    """Masked-LM encoder over ``CLS || x || actual responses`` (no MID tokens),
    trained with the routing BCE only. It needs full records at inference."""

    kind = "response-oracle"
    reveal_responses = True

    def __init__(self, config, params=None, seed: int = 0):
        config.lam = 0.0
        super().__init__(config, params, seed)


@dataclass
class ProbeResult:
    with_rm: MineResult
    without_rm: MineResult

    def summary(self) -> dict:
        return {name: {"median": r.median, "iqr": list(r.iqr), "estimates": r.estimates.tolist()}
                for name, r in (("with_rm", self.with_rm), ("without_rm", self.without_rm))}


def mi_probe(router_rm, router_no_rm, oracle: ResponseOracleClassifier, examples,
             config: MineConfig | None = None) -> ProbeResult:
    """MI between each router's routing-time states and the oracle's states."""
    a = router_rm.states(examples)
    b = router_no_rm.states(examples)
    o = oracle.states(examples)
    if a.shape != b.shape:
        raise ContractError(f"state widths differ between compared routers: {a.shape} vs {b.shape}")
    if a.shape[0] != o.shape[0]:
        raise ContractError("oracle and router states cover different records")
    cfg = config or MineConfig()
    return ProbeResult(mine_estimate(a, o, cfg), mine_estimate(b, o, cfg))


__all__ = ["ResponseOracleClassifier", "ProbeResult", "mi_probe"]
