"""Central finite differences, used as an independent oracle for the tape."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .autodiff import Tensor, grad


def numerical_grad(fn: Callable[..., float], inputs: list[np.ndarray], step: float = 1e-5) -> list[np.ndarray]:
    """Central differences of a scalar numpy function w.r.t. every input entry."""
    inputs = [np.array(x, dtype=np.float64) for x in inputs]
    out = []
    for x in inputs:
        g = np.zeros_like(x)
        flat, gflat = x.reshape(-1), g.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + step
            hi = fn(*inputs)
            flat[k] = orig - step
            lo = fn(*inputs)
            flat[k] = orig
            gflat[k] = (hi - lo) / (2 * step)
        out.append(g)
    return out


def relative_error(analytic: np.ndarray, numeric: np.ndarray, atol: float = 1e-7) -> np.ndarray:
    """Elementwise |a - n| / max(|a|, |n|); entries already within ``atol``
    in absolute terms count as zero error (near-zero gradients)."""
    a, n = np.asarray(analytic), np.asarray(numeric)
    diff = np.abs(a - n)
    denom = np.maximum(np.abs(a), np.abs(n))
    return np.where(diff <= atol, 0.0, diff / np.where(denom > 0, denom, 1.0))


def check_gradients(fn: Callable[..., Tensor], inputs: list[np.ndarray], step: float = 1e-5,
                    atol: float = 1e-7) -> float:
    """Worst relative error between tape gradients and central differences."""
    analytic = grad(fn, *inputs)
    numeric = numerical_grad(lambda *xs: fn(*[Tensor(x) for x in xs]).item(), inputs, step)
    return max(float(relative_error(a, n, atol).max()) for a, n in zip(analytic, numeric))
