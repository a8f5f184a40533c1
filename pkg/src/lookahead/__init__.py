"""Response-aware LLM routing: routers, baselines, evaluation and a serving gateway."""
from .framework import CLMRouter, LookaheadConfig, MLMRouter, TrainConfig, build_router, route, train
from .numeric import Tensor

__version__ = "0.1.0"

__all__ = ["__version__", "Tensor", "LookaheadConfig", "CLMRouter", "MLMRouter", "build_router", "route",
           "TrainConfig", "train"]
