from .metrics import (BenchmarkResult, EvalReport, UndefinedMetricError, evaluate, normalized_score,
                      oracle_reference, original_score, random_reference, routing_proportions, score_matrix,
                      select, win_tie_loss)
from .mine import MineConfig, MineResult, dv_bound, gaussian_mi, mine_estimate
from .probe import ProbeResult, ResponseOracleClassifier, mi_probe

__all__ = [
    "BenchmarkResult", "EvalReport", "UndefinedMetricError", "evaluate", "normalized_score",
    "oracle_reference", "original_score", "random_reference", "routing_proportions", "score_matrix",
    "select", "win_tie_loss",
    "MineConfig", "MineResult", "dv_bound", "gaussian_mi", "mine_estimate",
    "ProbeResult", "ResponseOracleClassifier", "mi_probe",
]
