"""Central finite-difference gradient checker."""
from __future__ import annotations

from typing import Callable

import numpy as np

from .autodiff import ContractError, Tensor, backward, no_grad


class DeterminismError(RuntimeError):
    """Two evaluations of the loss at the same point disagreed."""


def check_gradients(loss_fn: Callable[[], Tensor], params: dict[str, Tensor] | list[Tensor],
                    eps: float = 1e-5, max_coords: int | None = None, seed: int = 0) -> float:
    """Max relative error between the tape gradient and central differences.

    The error of one coordinate is ``|analytic - numeric| / max(1, |numeric|)``.
    ``max_coords`` caps the coordinates probed per parameter (sampled with
    ``seed``); ``None`` probes every coordinate.
    """
    if not (0 < eps <= 1e-2):
        raise ContractError(f"eps must lie in (0, 1e-2], got {eps}")
    if isinstance(params, dict):
        params = list(params.values())
    for p in params:
        p.grad = None
    loss = loss_fn()
    backward(loss)
    with no_grad():
        again = loss_fn().value
    if again != loss.value:
        raise DeterminismError(f"loss changed between identical evaluations: {loss.value!r} vs {again!r}")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for p in params:
        analytic = np.zeros_like(p.value) if p.grad is None else p.grad
        flat = p.value.reshape(-1)
        idx = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            idx = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        for i in idx:
            orig = flat[i]
            with no_grad():
                flat[i] = orig + eps
                up = loss_fn().value
                flat[i] = orig - eps
                down = loss_fn().value
            flat[i] = orig
            numeric = (up - down) / (2 * eps)
            err = abs(analytic.reshape(-1)[i] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, float(err))
    return worst
