"""Mini-batch training with AdamW, warmup + cosine decay and best-checkpoint selection."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ..numeric import ContractError, NumericError, OptimizerState, adamw_step, backward
from ..numeric.optim import LrSchedule, lr_at
from .routers import Router, select_index

log = logging.getLogger(__name__)


class DivergenceError(NumericError):
    """Training loss became non-finite."""


@dataclass
class TrainConfig:
    epochs: int = 4
    batch_size: int = 64
    lr: float = 1e-3
    weight_decay: float = 0.01
    warmup_fraction: float = 0.1
    eval_every: int = 100
    seed: int = 0
    max_steps: int | None = None       # caps the step budget regardless of epochs
    min_steps: int | None = None       # stretches short corpora to a fixed budget

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.eval_every < 1 or self.lr <= 0:
            raise ContractError("epochs, batch size, eval interval and lr must be positive")
        if not 0 <= self.warmup_fraction < 1:
            raise ContractError("warmup fraction must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LogRow:
    step: int
    train_loss: float
    route_loss: float
    resp_loss: float
    val_acc: float
    lr: float

    def tsv(self) -> str:
        return (f"{self.step}\t{self.train_loss:.6f}\t{self.route_loss:.6f}\t{self.resp_loss:.6f}"
                f"\t{self.val_acc:.6f}\t{self.lr:.6g}")


LOG_HEADER = "step\ttrain_loss\troute_loss\tresp_loss\tval_acc\tlr"


@dataclass
class TrainResult:
    router: Router
    log: list[LogRow] = field(default_factory=list)
    best_step: int = 0
    best_val_acc: float = float("nan")
    total_steps: int = 0

    def write_log(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(LOG_HEADER + "\n")
            for row in self.log:
                fh.write(row.tsv() + "\n")


def routing_accuracy(router: Router, examples, batch_size: int = 64) -> float:
    """Fraction of records whose selected model carries a positive label."""
    if not examples:
        return float("nan")
    scores = router.scores(examples, batch_size)
    hits = [ex.labels[select_index(s)] for ex, s in zip(examples, scores)]
    return float(np.mean(hits))


def _snapshot(router: Router) -> dict[str, np.ndarray]:
    return {k: v.value.copy() for k, v in router.params.items()}


def train(router: Router, train_set, val_set, config: TrainConfig | None = None,
          callback: Callable[[LogRow], None] | None = None) -> TrainResult:
    """Fit ``router`` in place and restore the best validation parameters.

    Validation runs every ``eval_every`` steps and after the last step.
    Ties on validation accuracy keep the earlier checkpoint.
    """
    cfg = config or TrainConfig()
    if not train_set:
        raise ContractError("training corpus is empty")
    t = router.n_models
    for ex in list(train_set) + list(val_set):
        if ex.n_models != t or ex.labels is None:
            raise ContractError(f"record {ex.id}: expected {t} labelled responses")
    rng = np.random.default_rng(cfg.seed)
    n = len(train_set)
    per_epoch = math.ceil(n / cfg.batch_size)
    total = per_epoch * cfg.epochs
    if cfg.min_steps is not None:
        total = max(total, cfg.min_steps)
    if cfg.max_steps is not None:
        total = min(total, cfg.max_steps)
    schedule = LrSchedule.with_warmup_fraction(cfg.lr, total, cfg.warmup_fraction)
    opt = OptimizerState(lr=cfg.lr, weight_decay=cfg.weight_decay)
    result = TrainResult(router, total_steps=total)
    best = None
    order = np.array([], dtype=np.int64)
    running = []
    for step in range(total):
        if len(order) == 0:
            order = rng.permutation(n)
        idx, order = order[:cfg.batch_size], order[cfg.batch_size:]
        batch = [train_set[i] for i in idx]
        for p in router.params.values():
            p.grad = None
        parts = router.loss(batch, progress=step / total)
        value = parts.total.item()
        if not math.isfinite(value):
            raise DivergenceError(f"non-finite training loss at step {step + 1} "
                                  f"(route={parts.route}, resp={parts.resp})")
        backward(parts.total)
        opt.lr = lr_at(schedule, step)
        adamw_step(router.params, opt)
        running.append((value, parts.route, parts.resp))
        done = step + 1
        if done % cfg.eval_every == 0 or done == total:
            acc = routing_accuracy(router, val_set) if val_set else float("nan")
            mean = np.mean(running, axis=0)
            running = []
            row = LogRow(done, float(mean[0]), float(mean[1]), float(mean[2]), acc, opt.lr)
            result.log.append(row)
            log.info(row.tsv())
            if callback is not None:
                callback(row)
            score = acc if math.isfinite(acc) else -float(mean[0])
            if best is None or score > best[0]:
                best = (score, done, _snapshot(router))
    assert best is not None
    for k, v in best[2].items():
        router.params[k].value = v
    result.best_step = best[1]
    result.best_val_acc = best[0] if val_set else float("nan")
    router.metadata.update({"best_step": result.best_step, "best_val_acc": result.best_val_acc,
                            "total_steps": total, "train": cfg.to_dict()})
    return result


def narrowing_flips(router: Router, examples) -> int:
    """Records whose routing decision changes after float32 rounding of the weights."""
    if not examples:
        return 0
    a = router.scores(examples).argmax(axis=1)
    b = router.narrowed().scores(examples).argmax(axis=1)
    flips = int(np.sum(a != b))
    if flips:
        log.warning("float32 narrowing flips %d of %d routing decisions", flips, len(examples))
    return flips


__all__ = ["TrainConfig", "TrainResult", "LogRow", "LOG_HEADER", "train", "routing_accuracy",
           "DivergenceError", "narrowing_flips"]
