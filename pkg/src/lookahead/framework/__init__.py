from .curriculum import STRATEGIES, CurriculumState, mask_ratio, select_masked_positions
from .losses import block_weights, joint_loss, kl_to_target, routing_loss_bce
from .routers import (CLMRouter, InputError, LookaheadConfig, LossParts, MLMRouter, Router,
                      RoutingDecision, build_router, mlm_build_input, route, select_index)
from .training import (LOG_HEADER, DivergenceError, LogRow, TrainConfig, TrainResult,
                       narrowing_flips, routing_accuracy, train)

__all__ = [
    "STRATEGIES", "CurriculumState", "mask_ratio", "select_masked_positions",
    "block_weights", "joint_loss", "kl_to_target", "routing_loss_bce",
    "LookaheadConfig", "RoutingDecision", "select_index", "Router", "CLMRouter", "MLMRouter",
    "mlm_build_input", "build_router", "route", "InputError", "LossParts",
    "TrainConfig", "TrainResult", "LogRow", "LOG_HEADER", "train", "routing_accuracy",
    "DivergenceError", "narrowing_flips",
]
