"""
Dense float64 tensors with reverse-mode gradients.

Every op produces a new ``Tensor`` and, while gradients are enabled and one of
its inputs requires them, records a closure mapping the output gradient to one
gradient per parent. Graphs are rebuilt on each forward pass; ``Graph.backward``
walks the recorded nodes once in reverse topological order.
"""
import logging
import threading
from contextlib import contextmanager
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from utils.exceptions import NumericalError, ShapeError

logger = logging.getLogger(__name__)

_state = threading.local()

GELU_C = float(np.sqrt(2.0 / np.pi))


def is_grad_enabled() -> bool:
    """Whether ops on this thread record graph nodes."""
    return getattr(_state, 'grad_enabled', True)


@contextmanager
def no_grad():
    """Disable graph recording on the current thread."""
    previous = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Tuple[int, ...], b: Tuple[int, ...]) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a, b)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a} and {b}") from None


def _swap_last(x: np.ndarray) -> np.ndarray:
    return np.swapaxes(x, -1, -2)


class Tensor:
    """A float64 array plus the graph bookkeeping needed for ``backward``."""

    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None,
                 _parents: Tuple['Tensor', ...] = (), _op: str = 'leaf'):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._parents = _parents
        self._op = _op
        self._backward: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]] = None

    # ------------------------------------------------------------------
    # basics
    # ------------------------------------------------------------------
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
    def op(self) -> str:
        return self._op

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.size == 1 else float('nan')

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self._op!r}{label})"

    @staticmethod
    def lift(value) -> 'Tensor':
        return value if isinstance(value, Tensor) else Tensor(value)

    def _result(self, data, parents: Tuple['Tensor', ...], op: str,
                backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]) -> 'Tensor':
        data = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(data)):
            raise NumericalError(f"{op}: produced non-finite values (output shape {data.shape})")
        track = is_grad_enabled() and any(p.requires_grad for p in parents)
        out = Tensor(data, requires_grad=track, _parents=parents if track else (), _op=op)
        if track:
            out._backward = backward
        return out

    # ------------------------------------------------------------------
    # elementwise arithmetic
    # ------------------------------------------------------------------
    def __add__(self, other) -> 'Tensor':
        other = Tensor.lift(other)
        _broadcast_shape('add', self.shape, other.shape)
        a_shape, b_shape = self.shape, other.shape

        def backward(g):
            return _unbroadcast(g, a_shape), _unbroadcast(g, b_shape)
        return self._result(self.data + other.data, (self, other), 'add', backward)

    def __radd__(self, other) -> 'Tensor':
        return Tensor.lift(other) + self

    def __sub__(self, other) -> 'Tensor':
        other = Tensor.lift(other)
        _broadcast_shape('sub', self.shape, other.shape)
        a_shape, b_shape = self.shape, other.shape

        def backward(g):
            return _unbroadcast(g, a_shape), _unbroadcast(-g, b_shape)
        return self._result(self.data - other.data, (self, other), 'sub', backward)

    def __rsub__(self, other) -> 'Tensor':
        return Tensor.lift(other) - self

    def __mul__(self, other) -> 'Tensor':
        other = Tensor.lift(other)
        _broadcast_shape('mul', self.shape, other.shape)
        a, b = self, other

        def backward(g):
            return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)
        return self._result(a.data * b.data, (a, b), 'mul', backward)

    def __rmul__(self, other) -> 'Tensor':
        return Tensor.lift(other) * self

    def __truediv__(self, other) -> 'Tensor':
        other = Tensor.lift(other)
        _broadcast_shape('div', self.shape, other.shape)
        if np.any(other.data == 0.0):
            raise NumericalError(f"div: zero in denominator of shape {other.shape}")
        a, b = self, other

        def backward(g):
            return (_unbroadcast(g / b.data, a.shape),
                    _unbroadcast(-g * a.data / (b.data * b.data), b.shape))
        return self._result(a.data / b.data, (a, b), 'div', backward)

    def __rtruediv__(self, other) -> 'Tensor':
        return Tensor.lift(other) / self

    def __neg__(self) -> 'Tensor':
        return self._result(-self.data, (self,), 'neg', lambda g: (-g,))

    def abs(self) -> 'Tensor':
        # subgradient of |x| at 0 is taken as 0
        sign = np.sign(self.data)
        return self._result(np.abs(self.data), (self,), 'abs', lambda g: (g * sign,))

    def exp(self) -> 'Tensor':
        out_data = np.exp(self.data)
        return self._result(out_data, (self,), 'exp', lambda g: (g * out_data,))

    def gelu(self) -> 'Tensor':
        """Tanh-approximated GELU."""
        x = self.data
        inner = GELU_C * (x + 0.044715 * x ** 3)
        t = np.tanh(inner)
        out_data = 0.5 * x * (1.0 + t)

        def backward(g):
            d_inner = GELU_C * (1.0 + 3.0 * 0.044715 * x ** 2)
            return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner),)
        return self._result(out_data, (self,), 'gelu', backward)

    # ------------------------------------------------------------------
    # linear algebra
    # ------------------------------------------------------------------
    def __matmul__(self, other) -> 'Tensor':
        other = Tensor.lift(other)
        if self.ndim < 2 or other.ndim < 2 or self.shape[-1] != other.shape[-2]:
            raise ShapeError(f"matmul: incompatible shapes {self.shape} and {other.shape}")
        try:
            np.broadcast_shapes(self.shape[:-2], other.shape[:-2])
        except ValueError:
            raise ShapeError(f"matmul: incompatible batch shapes {self.shape} and {other.shape}") from None
        a, b = self, other

        def backward(g):
            return (_unbroadcast(g @ _swap_last(b.data), a.shape),
                    _unbroadcast(_swap_last(a.data) @ g, b.shape))
        return self._result(a.data @ b.data, (a, b), 'matmul', backward)

    # ------------------------------------------------------------------
    # reductions
    # ------------------------------------------------------------------
    def sum(self, axis=None, keepdims: bool = False) -> 'Tensor':
        shape = self.shape

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape),)
        return self._result(self.data.sum(axis=axis, keepdims=keepdims), (self,), 'sum', backward)

    def mean(self, axis=None, keepdims: bool = False) -> 'Tensor':
        if axis is None:
            count = self.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            count = int(np.prod([self.shape[ax] for ax in axes]))
        if count == 0:
            raise ShapeError(f"mean: empty reduction over shape {self.shape}")
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # ------------------------------------------------------------------
    # shape manipulation
    # ------------------------------------------------------------------
    def reshape(self, *shape) -> 'Tensor':
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        original = self.shape
        try:
            out_data = self.data.reshape(shape)
        except ValueError:
            raise ShapeError(f"reshape: cannot reshape {original} into {shape}") from None
        return self._result(out_data, (self,), 'reshape', lambda g: (g.reshape(original),))

    def transpose(self, *axes) -> 'Tensor':
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        if sorted(axes) != list(range(self.ndim)):
            raise ShapeError(f"transpose: axes {axes} invalid for shape {self.shape}")
        inverse = tuple(np.argsort(axes))
        return self._result(self.data.transpose(axes), (self,), 'transpose',
                            lambda g: (g.transpose(inverse),))

    def __getitem__(self, key) -> 'Tensor':
        shape = self.shape
        try:
            out_data = self.data[key]
        except IndexError as e:
            raise ShapeError(f"slice: {e} for shape {shape}") from None

        def backward(g):
            full = np.zeros(shape, dtype=np.float64)
            np.add.at(full, key, g)
            return (full,)
        return self._result(out_data, (self,), 'slice', backward)

    # ------------------------------------------------------------------
    # normalisation layers
    # ------------------------------------------------------------------
    def softmax(self, axis: int = -1) -> 'Tensor':
        shifted = self.data - self.data.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        s = e / e.sum(axis=axis, keepdims=True)

        def backward(g):
            return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)
        return self._result(s, (self,), 'softmax', backward)

    def layer_norm(self, eps: float = 1e-5) -> 'Tensor':
        """Normalise the last axis to zero mean and unit variance (no affine)."""
        mu = self.data.mean(axis=-1, keepdims=True)
        centered = self.data - mu
        inv_std = 1.0 / np.sqrt((centered ** 2).mean(axis=-1, keepdims=True) + eps)
        xhat = centered * inv_std

        def backward(g):
            return (inv_std * (g - g.mean(axis=-1, keepdims=True)
                               - xhat * (g * xhat).mean(axis=-1, keepdims=True)),)
        return self._result(xhat, (self,), 'layer_norm', backward)

    def dropout(self, p: float, rng: np.random.Generator) -> 'Tensor':
        if p <= 0.0:
            return self
        if p >= 1.0:
            raise ValueError(f"dropout: rate must be < 1, got {p}")
        mask = (rng.random(self.shape) >= p) / (1.0 - p)
        return self * mask

    # ------------------------------------------------------------------
    # gradients
    # ------------------------------------------------------------------
    def backward(self) -> 'Graph':
        return Graph(self).backward()


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Concatenate along ``axis``."""
    tensors = tuple(Tensor.lift(t) for t in tensors)
    if not tensors:
        raise ShapeError("concat: no operands")
    try:
        out_data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise ShapeError(f"concat: incompatible shapes {shapes} along axis {axis}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))
    return tensors[0]._result(out_data, tensors, 'concat', backward)


def parameter(data, name: Optional[str] = None) -> Tensor:
    """Leaf tensor that accumulates gradients."""
    return Tensor(data, requires_grad=True, name=name)


class Graph:
    """Topologically ordered op records reachable from a scalar loss."""

    def __init__(self, loss: Tensor):
        if loss.size != 1:
            raise ShapeError(f"backward: loss must be a scalar, got shape {loss.shape}")
        self.loss = loss
        self.nodes: List[Tensor] = self._topological_order(loss)

    @staticmethod
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
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
        return order

    def backward(self) -> 'Graph':
        """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf that requires it."""
        if not self.loss.requires_grad:
            return self
        pending: Dict[int, np.ndarray] = {id(self.loss): np.ones(self.loss.shape)}
        for node in reversed(self.nodes):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = np.array(g) if node.grad is None else node.grad + g
                continue
            for parent, parent_grad in zip(node._parents, node._backward(g)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                if parent_grad.shape != parent.shape:
                    raise ShapeError(
                        f"backward: {node.op} produced gradient of shape {parent_grad.shape} "
                        f"for operand of shape {parent.shape}")
                if not np.all(np.isfinite(parent_grad)):
                    raise NumericalError(f"backward: non-finite gradient through {node.op}")
                key = id(parent)
                pending[key] = parent_grad if key not in pending else pending[key] + parent_grad
        return self

    def gradients(self, params: Dict[str, Tensor]) -> Dict[str, np.ndarray]:
        """Per-parameter gradients (zeros for parameters the loss does not reach)."""
        return {name: (p.grad if p.grad is not None else np.zeros(p.shape)) for name, p in params.items()}
