"""Central-difference verification of reverse-mode gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward

DENOM_FLOOR = 1e-8


def numeric_grad(f: Callable[..., Tensor], inputs: Sequence[Tensor], eps: float = 1e-5) -> list[np.ndarray]:
    grads = []
    for x in inputs:
        g = np.zeros_like(x.data)
        flat = x.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = f(*inputs).item()
            flat[i] = orig - eps
            fm = f(*inputs).item()
            flat[i] = orig
            gflat[i] = (fp - fm) / (2 * eps)
        grads.append(g)
    return grads


def analytic_grad(f: Callable[..., Tensor], inputs: Sequence[Tensor]) -> list[np.ndarray]:
    for x in inputs:
        x.requires_grad = True
        x.grad = None
    backward(f(*inputs))
    return [np.zeros_like(x.data) if x.grad is None else x.grad.copy() for x in inputs]


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), DENOM_FLOOR)
    return float(np.max(np.abs(a - b) / denom))


def grad_check(f: Callable[..., Tensor], inputs: Sequence[Tensor], eps: float = 1e-5,
               analytic: Sequence[np.ndarray] | None = None) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    ``f`` maps the input tensors to a scalar Tensor and must be
    deterministic; inputs should be float64. ``analytic`` overrides the
    reverse-mode gradients (used for negative controls).
    """
    if analytic is None:
        analytic = analytic_grad(f, inputs)
    numeric = numeric_grad(f, inputs, eps)
    return max((relative_error(a, n) for a, n in zip(analytic, numeric)), default=0.0)
