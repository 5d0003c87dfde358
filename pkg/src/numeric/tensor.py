import contextlib
import logging
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import ShapeError, TapeError

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, float, int, Sequence]

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording, used for rollout inference"""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def is_grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """
    Dense array with an optional reverse-mode gradient tape

    Every operation that involves a tensor with ``requires_grad`` records its
    parents and a backward closure. ``backward`` walks the tape once; the tape
    is released afterwards and a second call raises ``TapeError``.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_consumed", "name")

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None,
                 dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        array = np.asarray(data, dtype=dtype if dtype is not None else None)
        if array.dtype.kind not in "fc":
            array = array.astype(np.float64)
        self.data = array
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents: Tuple["Tensor", ...] = ()
        self._backward: Optional[Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]] = None
        self._consumed = False
        self.name = name

    def __repr__(self):
        label = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    # arithmetic ---------------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tensor_mean(self, axis=axis, keepdims=keepdims)

    def exp(self) -> "Tensor":
        return exp(self)

    def log(self) -> "Tensor":
        return log(self)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    # tape ---------------------------------------------------------------------

    def backward(self, grad: Optional[np.ndarray] = None):
        """Propagate gradients from this scalar to every leaf that requires them"""
        if self._consumed:
            raise TapeError("backward called twice on the same tape; run a fresh forward pass")
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(f"backward needs a scalar loss, got shape {self.shape}")
            grad = np.ones_like(self.data)
        if not self.requires_grad:
            self._consumed = True
            return

        order = _topological_order(self)
        grads = {id(self): np.asarray(grad, dtype=self.data.dtype)}
        for node in reversed(order):
            node_grad = grads.pop(id(node), None)
            if node_grad is None:
                continue
            if node._backward is None:
                node.grad = node_grad.copy() if node.grad is None else node.grad + node_grad
                continue
            parent_grads = node._backward(node_grad)
            for parent, parent_grad in zip(node._parents, parent_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = parent_grad if key not in grads else grads[key] + parent_grad

        for node in order:
            if node._backward is not None:
                node._backward = None
                node._parents = ()
                node._consumed = True
        self._consumed = True


def _topological_order(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited and parent.requires_grad:
                stack.append((parent, False))
    return order


def as_tensor(value: ArrayLike, dtype=None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value, dtype=dtype)


def record_op(data: np.ndarray, parents: Iterable[Tensor], backward) -> Tensor:
    parents = tuple(parents)
    track = is_grad_enabled() and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=track)
    if track:
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# elementwise ------------------------------------------------------------------

def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return record_op(a.data + b.data, (a, b),
                     lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return record_op(a.data - b.data, (a, b),
                     lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return record_op(a.data * b.data, (a, b),
                     lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return record_op(a.data / b.data, (a, b),
                     lambda g: (_unbroadcast(g / b.data, a.shape),
                                _unbroadcast(-g * a.data / (b.data ** 2), b.shape)))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return record_op(out, (x,), lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    return record_op(np.log(x.data), (x,), lambda g: (g / x.data,))


def square(x: Tensor) -> Tensor:
    return record_op(x.data ** 2, (x,), lambda g: (2.0 * g * x.data,))


def clip(x: Tensor, low: float, high: float) -> Tensor:
    inside = (x.data >= low) & (x.data <= high)
    return record_op(np.clip(x.data, low, high), (x,), lambda g: (g * inside,))


def minimum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise minimum; ties route the gradient to ``a``"""
    a, b = as_tensor(a), as_tensor(b)
    pick_a = a.data <= b.data
    return record_op(np.where(pick_a, a.data, b.data), (a, b),
                     lambda g: (_unbroadcast(g * pick_a, a.shape), _unbroadcast(g * ~pick_a, b.shape)))


def elu(x: Tensor) -> Tensor:
    positive = x.data > 0
    negative_branch = np.exp(np.minimum(x.data, 0.0))
    out = np.where(positive, x.data, negative_branch - 1.0)
    return record_op(out, (x,), lambda g: (g * np.where(positive, 1.0, negative_branch),))


def leaky_relu(x: Tensor, negative_slope: float = 0.2) -> Tensor:
    slope = np.where(x.data > 0, 1.0, negative_slope)
    return record_op(x.data * slope, (x,), lambda g: (g * slope,))


# reductions and shape ---------------------------------------------------------

def tensor_sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return record_op(np.asarray(out), (x,), backward)


def tensor_mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return tensor_sum(x, axis=axis, keepdims=keepdims) * (1.0 / count)


def reshape(x: Tensor, shape: Tuple[int, ...]) -> Tensor:
    return record_op(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        return tuple(np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis)
                     for i in range(len(tensors)))

    return record_op(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
    return record_op(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


# indexing ---------------------------------------------------------------------

def index_select(x: Tensor, index: np.ndarray) -> Tensor:
    """Gather rows ``x[index]``"""
    index = np.asarray(index, dtype=np.int64)

    def backward(g):
        grad = np.zeros_like(x.data)
        np.add.at(grad, index, g)
        return (grad,)

    return record_op(x.data[index], (x,), backward)


def scatter_add(x: Tensor, index: np.ndarray, size: int) -> Tensor:
    """Segment sum: row ``i`` of ``x`` is added into output row ``index[i]``"""
    index = np.asarray(index, dtype=np.int64)
    out = np.zeros((size,) + x.shape[1:], dtype=x.data.dtype)
    np.add.at(out, index, x.data)
    return record_op(out, (x,), lambda g: (g[index],))


def pick(x: Tensor, index: np.ndarray) -> Tensor:
    """Select ``x[i, index[i]]`` from a 2-D tensor"""
    index = np.asarray(index, dtype=np.int64)
    rows = np.arange(x.shape[0])

    def backward(g):
        grad = np.zeros_like(x.data)
        grad[rows, index] = g
        return (grad,)

    return record_op(x.data[rows, index], (x,), backward)


# normalisation ----------------------------------------------------------------

def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)
    return record_op(out, (x,), lambda g: (out * (g - (g * out).sum(axis=axis, keepdims=True)),))


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - log_norm
    probs = np.exp(out)
    return record_op(out, (x,), lambda g: (g - probs * g.sum(axis=axis, keepdims=True),))


def segment_softmax(scores: Tensor, segments: np.ndarray, size: int) -> Tensor:
    """Softmax of ``scores`` rows grouped by ``segments`` (one group per output row)"""
    segments = np.asarray(segments, dtype=np.int64)
    seg_max = np.full((size,) + scores.shape[1:], -np.inf, dtype=scores.data.dtype)
    np.maximum.at(seg_max, segments, scores.data)
    shifted = scores - Tensor(seg_max[segments])
    e = exp(shifted)
    denom = scatter_add(e, segments, size)
    return e / index_select(denom, segments)
