from . import autodiff as ad
from .autodiff import (ContractError, NumericError, ShapeError, Tensor, backward, no_grad,
                       set_debug, tensor)
from .gradcheck import DeterminismError, check_gradients
from .optim import LrSchedule, OptimizerState, adamw_step, linear_warmup_decay, lr_at

__all__ = [
    "ad", "Tensor", "tensor", "backward", "no_grad", "set_debug",
    "ContractError", "NumericError", "ShapeError", "DeterminismError",
    "check_gradients", "OptimizerState", "adamw_step", "LrSchedule", "lr_at",
    "linear_warmup_decay",
]
