"""
Parameter sets, gradient collection and the Adam optimizer
"""

import copy
import logging
from collections import OrderedDict
from typing import Dict, Iterator, Mapping, Optional, Tuple

import numpy as np

from ..errors import NumericError, ShapeError
from .tensor import Tensor

logger = logging.getLogger(__name__)


class ParamSet:
    """
    Named parameter tensors in a stable order plus their Adam moments

    Rollout workers receive ``snapshot()`` copies; only the trainer mutates a
    ParamSet, and only between collection rounds.
    """

    def __init__(self, arrays: Optional[Mapping[str, np.ndarray]] = None, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.params: "OrderedDict[str, Tensor]" = OrderedDict()
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}
        self.step_count = 0
        for name, array in (arrays or {}).items():
            self.add(name, array)

    def add(self, name: str, array: np.ndarray) -> Tensor:
        if name in self.params:
            raise KeyError(f"duplicate parameter name {name}")
        tensor = Tensor(np.array(array, dtype=self.dtype), requires_grad=True, name=name)
        self.params[name] = tensor
        self.m[name] = np.zeros_like(tensor.data)
        self.v[name] = np.zeros_like(tensor.data)
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __iter__(self) -> Iterator[str]:
        return iter(self.params)

    def __len__(self) -> int:
        return len(self.params)

    def items(self):
        return self.params.items()

    def names(self):
        return list(self.params)

    def group(self, prefix: str) -> Dict[str, Tensor]:
        """Parameters under ``prefix/`` keyed by their remaining name"""
        head = prefix + "/"
        return {name[len(head):]: t for name, t in self.params.items() if name.startswith(head)}

    def arrays(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((name, t.data) for name, t in self.params.items())

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None

    def snapshot(self) -> "ParamSet":
        """Deep copy including optimizer state"""
        clone = ParamSet(dtype=self.dtype)
        for name, t in self.params.items():
            clone.add(name, t.data.copy())
        clone.m = copy.deepcopy(self.m)
        clone.v = copy.deepcopy(self.v)
        clone.step_count = self.step_count
        return clone

    def restore(self, other: "ParamSet"):
        """Overwrite values and moments from another set with the same names"""
        if other.names() != self.names():
            raise ShapeError("cannot restore from a parameter set with different names")
        for name, t in self.params.items():
            t.data = other.params[name].data.copy()
            t.grad = None
        self.m = copy.deepcopy(other.m)
        self.v = copy.deepcopy(other.v)
        self.step_count = other.step_count

    def num_values(self) -> int:
        return int(sum(t.size for t in self.params.values()))


def backward_gradients(loss: Tensor, params: ParamSet) -> Dict[str, np.ndarray]:
    """
    Run backward on a scalar loss and collect gradients for every parameter

    Parameters the loss does not reach receive an all-zero gradient.
    """
    params.zero_grad()
    loss.backward()
    grads = {}
    for name, t in params.items():
        grads[name] = np.zeros_like(t.data) if t.grad is None else t.grad.astype(t.data.dtype)
    return grads


def clip_grad_norm(grads: Dict[str, np.ndarray], max_norm: float) -> Tuple[Dict[str, np.ndarray], float]:
    """Scale gradients so their global L2 norm is at most ``max_norm``"""
    total = float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values())))
    if not np.isfinite(total):
        raise NumericError("gradient norm is not finite")
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        grads = {name: g * scale for name, g in grads.items()}
    return grads, total


def adam_step(params: ParamSet, grads: Mapping[str, np.ndarray], lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> ParamSet:
    """Bias-corrected Adam update, in place; returns ``params``"""
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise ShapeError(f"gradient {g.shape} does not match parameter {name} {params[name].shape}")
    params.step_count += 1
    t = params.step_count
    for name, g in grads.items():
        m = beta1 * params.m[name] + (1.0 - beta1) * g
        v = beta2 * params.v[name] + (1.0 - beta2) * g * g
        params.m[name] = m.astype(params.dtype)
        params.v[name] = v.astype(params.dtype)
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        update = params[name].data - lr * m_hat / (np.sqrt(v_hat) + eps)
        if not np.all(np.isfinite(update)):
            raise NumericError(f"Adam produced non-finite values for {name}")
        params[name].data = update.astype(params.dtype)
    return params
