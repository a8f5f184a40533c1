"""Mutual information neural estimation with the Donsker-Varadhan bound."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..backbones.transformer import zeros
from ..numeric import ContractError, OptimizerState, Tensor, adamw_step, backward, no_grad
from ..numeric import autodiff as ad
from ..numeric.optim import linear_warmup_decay


@dataclass
class MineConfig:
    hidden: int = 1024
    n_layers: int = 4
    epochs: int = 100
    batch_size: int = 512
    lr: float = 1e-4
    warmup_fraction: float = 0.1
    weight_decay: float = 0.0
    repetitions: int = 1
    tail_epochs: int = 10           # estimate = mean of the last epochs' objective
    standardize: bool = True
    seed: int = 0

    def __post_init__(self):
        if min(self.hidden, self.n_layers, self.epochs, self.batch_size, self.repetitions, self.tail_epochs) < 1:
            raise ContractError("MINE sizes, epochs and repetitions must be positive")
        if self.n_layers < 2 or self.lr <= 0:
            raise ContractError("need at least two layers and a positive learning rate")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class MineResult:
    estimates: np.ndarray                      # one clamped estimate per repetition
    curves: list[list[float]] = field(default_factory=list)

    @property
    def median(self) -> float:
        return float(np.median(self.estimates))

    @property
    def iqr(self) -> tuple[float, float]:
        q1, q3 = np.percentile(self.estimates, [25, 75])
        return float(q1), float(q3)


def _init_net(rng: np.random.Generator, d_in: int, cfg: MineConfig) -> dict[str, Tensor]:
    widths = [d_in] + [cfg.hidden] * (cfg.n_layers - 1) + [1]
    p = {}
    for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
        bound = math.sqrt(6.0 / a) if i < cfg.n_layers - 1 else math.sqrt(1.0 / a)
        p[f"w{i}"] = Tensor(rng.uniform(-bound, bound, (a, b)), requires_grad=True)
        p[f"b{i}"] = zeros(b)
    return p


def _statistic(p: dict, z, n_layers: int) -> Tensor:
    h = z
    for i in range(n_layers):
        h = ad.add(ad.matmul(h, p[f"w{i}"]), p[f"b{i}"])
        if i < n_layers - 1:
            h = ad.relu(h)
    return ad.reshape(h, (h.shape[0],))


def dv_bound(t_joint: Tensor, t_marg: Tensor) -> Tensor:
    """``E_joint[T] - log E_marginal[exp T]`` on one sample of each."""
    n = t_marg.shape[0]
    return ad.sub(ad.mean(t_joint), ad.sub(ad.logsumexp(t_marg, axis=0), math.log(n)))


def _standardize(a: np.ndarray) -> np.ndarray:
    sd = a.std(axis=0)
    return (a - a.mean(axis=0)) / np.where(sd > 0, sd, 1.0)


def _one_run(x: np.ndarray, y: np.ndarray, cfg: MineConfig, seed: int) -> list[float]:
    rng = np.random.default_rng(seed)
    n = x.shape[0]
    p = _init_net(rng, x.shape[1] + y.shape[1], cfg)
    n_batches = n // cfg.batch_size
    total = n_batches * cfg.epochs
    opt = OptimizerState(lr=cfg.lr, weight_decay=cfg.weight_decay)
    eval_perm = rng.permutation(n)
    xy_eval = np.concatenate([x, y], axis=1)
    xy_eval_m = np.concatenate([x, y[eval_perm]], axis=1)
    curve = []
    step = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for bi in range(n_batches):
            idx = order[bi * cfg.batch_size:(bi + 1) * cfg.batch_size]
            xb, yb = x[idx], y[idx]
            yb_m = yb[rng.permutation(len(idx))]
            z = np.concatenate([np.concatenate([xb, yb], axis=1), np.concatenate([xb, yb_m], axis=1)])
            for t in p.values():
                t.grad = None
            out = _statistic(p, Tensor(z), cfg.n_layers)
            b = len(idx)
            loss = ad.neg(dv_bound(out[:b], out[b:]))
            backward(loss)
            opt.lr = linear_warmup_decay(cfg.lr, total, step, cfg.warmup_fraction)
            adamw_step(p, opt)
            step += 1
        with no_grad():
            tj = _statistic(p, Tensor(xy_eval), cfg.n_layers)
            tm = _statistic(p, Tensor(xy_eval_m), cfg.n_layers)
            curve.append(dv_bound(tj, tm).item())
    return curve


def mine_estimate(x, y, config: MineConfig | None = None) -> MineResult:
    """Lower-bound estimates of I(X; Y) in nats, one per repetition.

    Each repetition trains a fresh statistic network; its estimate is the
    mean of the full-sample bound over the last ``tail_epochs`` epochs,
    clamped at zero.
    """
    cfg = config or MineConfig()
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if y.ndim == 1:
        y = y[:, None]
    if x.shape[0] != y.shape[0]:
        raise ContractError(f"{x.shape[0]} samples of X but {y.shape[0]} of Y")
    if x.shape[0] < cfg.batch_size:
        raise ContractError(f"need at least batch_size={cfg.batch_size} samples, got {x.shape[0]}")
    if cfg.standardize:
        x, y = _standardize(x), _standardize(y)
    ests, curves = [], []
    for r in range(cfg.repetitions):
        curve = _one_run(x, y, cfg, seed=cfg.seed * 100003 + r)
        curves.append(curve)
        ests.append(max(0.0, float(np.mean(curve[-cfg.tail_epochs:]))))
    return MineResult(np.array(ests), curves)


def gaussian_mi(rho: float) -> float:
    """Closed-form mutual information of a bivariate Gaussian with correlation ``rho``."""
    return -0.5 * math.log(1.0 - rho * rho)


__all__ = ["MineConfig", "MineResult", "mine_estimate", "dv_bound", "gaussian_mi"]
