import logging
from typing import Callable, Dict

import numpy as np

from .tensor import Tensor

logger = logging.getLogger(__name__)


def numerical_gradient(fn: Callable[[Dict[str, Tensor]], Tensor], arrays: Dict[str, np.ndarray],
                       h: float = 1e-5) -> Dict[str, np.ndarray]:
    """Central finite differences of a scalar function of named arrays"""
    grads = {}
    for name, array in arrays.items():
        grad = np.zeros_like(array, dtype=np.float64)
        for idx in np.ndindex(array.shape):
            original = array[idx]
            array[idx] = original + h
            plus = fn({k: Tensor(v) for k, v in arrays.items()}).item()
            array[idx] = original - h
            minus = fn({k: Tensor(v) for k, v in arrays.items()}).item()
            array[idx] = original
            grad[idx] = (plus - minus) / (2.0 * h)
        grads[name] = grad
    return grads


def analytic_gradient(fn: Callable[[Dict[str, Tensor]], Tensor],
                      arrays: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
    tensors = {k: Tensor(v.copy(), requires_grad=True) for k, v in arrays.items()}
    fn(tensors).backward()
    return {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in tensors.items()}


def gradient_check(fn: Callable[[Dict[str, Tensor]], Tensor], arrays: Dict[str, np.ndarray],
                   h: float = 1e-5) -> float:
    """
    Largest relative error between tape gradients and finite differences

    Relative error is |a - n| / max(1, |a|, |n|) elementwise so that
    near-zero gradients are compared absolutely.
    """
    arrays = {k: np.array(v, dtype=np.float64) for k, v in arrays.items()}
    analytic = analytic_gradient(fn, arrays)
    numeric = numerical_gradient(fn, arrays, h)
    worst = 0.0
    for name in arrays:
        a, n = analytic[name], numeric[name]
        scale = np.maximum(1.0, np.maximum(np.abs(a), np.abs(n)))
        worst = max(worst, float(np.max(np.abs(a - n) / scale)) if a.size else 0.0)
    return worst
