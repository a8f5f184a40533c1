"""AdamW with decoupled weight decay and a warmup + cosine learning-rate schedule."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import ContractError, ShapeError, Tensor


@dataclass
class OptimizerState:
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01
    step: int = 0
    exp_avg: dict = field(default_factory=dict)
    exp_avg_sq: dict = field(default_factory=dict)

    def __post_init__(self):
        b1, b2 = self.betas
        if not (0 < b1 < 1 and 0 < b2 < 1):
            raise ContractError(f"betas must lie in (0, 1), got {self.betas}")
        if self.weight_decay < 0:
            raise ContractError("weight decay must be >= 0")


def adamw_step(params: dict[str, Tensor], state: OptimizerState, grads: dict | None = None) -> None:
    """One in-place AdamW update.

    ``grads`` defaults to each parameter's accumulated ``.grad``; a missing
    gradient counts as zero so weight decay still applies.
    """
    b1, b2 = state.betas
    state.step += 1
    t = state.step
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    lr = state.lr
    for name, p in params.items():
        g = grads[name] if grads is not None else p.grad
        if g is None:
            g = np.zeros_like(p.value)
        elif g.shape != p.value.shape:
            raise ShapeError(f"adamw: gradient {g.shape} for parameter {name} {p.value.shape}")
        m = state.exp_avg.get(name)
        if m is None:
            m = state.exp_avg[name] = np.zeros_like(p.value)
            state.exp_avg_sq[name] = np.zeros_like(p.value)
        elif m.shape != p.value.shape:
            raise ShapeError(f"adamw: moment buffer {m.shape} for parameter {name} {p.value.shape}")
        v = state.exp_avg_sq[name]
        if state.weight_decay:
            p.value *= 1.0 - lr * state.weight_decay
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.value -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


@dataclass(frozen=True)
class LrSchedule:
    """Linear warmup to ``base_lr`` then cosine decay to ``min_lr``."""

    base_lr: float
    total_steps: int
    warmup_steps: int = 0
    min_lr: float = 0.0

    @classmethod
    def with_warmup_fraction(cls, base_lr: float, total_steps: int, fraction: float = 0.1,
                             min_lr: float = 0.0) -> "LrSchedule":
        return cls(base_lr, total_steps, int(round(fraction * total_steps)), min_lr)

    def __post_init__(self):
        if self.total_steps < 1 or not (0 <= self.warmup_steps <= self.total_steps):
            raise ContractError(f"bad schedule: total={self.total_steps} warmup={self.warmup_steps}")
        if self.min_lr < 0:
            raise ContractError("min_lr must be >= 0")


def lr_at(schedule: LrSchedule, step: int) -> float:
    if not 0 <= step <= schedule.total_steps:
        raise ContractError(f"step {step} outside [0, {schedule.total_steps}]")
    w = schedule.warmup_steps
    if step < w:
        return schedule.base_lr * step / w
    span = schedule.total_steps - w
    if span == 0:
        return schedule.base_lr
    frac = (step - w) / span
    return schedule.min_lr + (schedule.base_lr - schedule.min_lr) * 0.5 * (1.0 + math.cos(math.pi * frac))


def linear_warmup_decay(base_lr: float, total_steps: int, step: int, warmup_fraction: float = 0.1) -> float:
    """Linear warmup then linear decay to zero (the MINE schedule)."""
    w = max(1, int(round(warmup_fraction * total_steps)))
    if step < w:
        return base_lr * (step + 1) / w
    return base_lr * max(0.0, (total_steps - step) / max(1, total_steps - w))
