"""
Dense tensor with reverse-mode differentiation

Every differentiable op appends a node to the active ComputeGraph in forward
order; backward replays the adjoints in exact reverse order and then releases
the graph. Graphs are thread-confined: each thread has its own default graph
and its own stack of explicitly entered graphs.
"""

import threading
from contextlib import contextmanager
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from core.errors import GraphError, NumericalError, ShapeError

_local = threading.local()

Adjoint = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


def _thread_state():
    if not hasattr(_local, "stack"):
        _local.stack = [ComputeGraph()]
        _local.grad_enabled = True
    return _local


def grad_enabled() -> bool:
    return _thread_state().grad_enabled


def current_graph() -> "ComputeGraph":
    """Innermost graph entered on this thread (the thread default otherwise)"""
    return _thread_state().stack[-1]


@contextmanager
def no_grad():
    """Disable graph recording; ops produce plain constant tensors"""
    state = _thread_state()
    previous = state.grad_enabled
    state.grad_enabled = False
    try:
        yield
    finally:
        state.grad_enabled = previous


class Node:
    """One recorded forward operation"""

    __slots__ = ("op", "output", "inputs", "adjoint")

    def __init__(self, op: str, output: "Tensor", inputs: Tuple["Tensor", ...], adjoint: Adjoint):
        self.op = op
        self.output = output
        self.inputs = inputs
        self.adjoint = adjoint


class ComputeGraph:
    """Ordered record of forward operations with captured adjoint state"""

    def __init__(self):
        self.nodes: List[Node] = []

    def __enter__(self) -> "ComputeGraph":
        _thread_state().stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        stack = _thread_state().stack
        if stack[-1] is not self:
            raise GraphError("compute graphs must be exited in the order they were entered")
        stack.pop()
        return False

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, op: str, output: "Tensor", inputs: Tuple["Tensor", ...], adjoint: Adjoint):
        node = Node(op, output, inputs, adjoint)
        output._node = node
        output._graph = self
        self.nodes.append(node)

    def backward(self, loss: "Tensor"):
        """Populate .grad on every leaf reachable from a scalar loss, then release the graph"""
        if loss.size != 1:
            raise ShapeError("backward", "loss", "scalar", tuple(loss.shape))
        if loss._node is None or loss._graph is not self:
            raise GraphError("loss was not produced by a recorded op of this graph (graph released or never built)")

        end = next(i for i in range(len(self.nodes) - 1, -1, -1) if self.nodes[i] is loss._node)
        pending = {id(loss): np.ones_like(loss.data)}
        leaves = []

        for node in reversed(self.nodes[: end + 1]):
            upstream = pending.pop(id(node.output), None)
            if upstream is None:
                continue
            for tensor, grad in zip(node.inputs, node.adjoint(upstream)):
                if grad is None or not tensor.requires_grad:
                    continue
                if tensor._node is None:
                    if tensor.grad is None:
                        tensor.grad = np.array(grad, dtype=tensor.data.dtype, copy=True)
                        leaves.append(tensor)
                    else:
                        tensor.grad = tensor.grad + grad
                else:
                    key = id(tensor)
                    pending[key] = grad if key not in pending else pending[key] + grad

        self.clear()

        for leaf in leaves:
            if not np.all(np.isfinite(leaf.grad)):
                raise NumericalError(f"non-finite gradient for '{leaf.name or 'tensor'}'")

    def clear(self):
        for node in self.nodes:
            node.output._node = None
            node.output._graph = None
        self.nodes.clear()


Operand = Union["Tensor", float, int]


class Tensor:
    """Dense row-major real array with optional gradient"""

    __slots__ = ("data", "requires_grad", "grad", "name", "_node", "_graph")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        array = np.asarray(data)
        if array.dtype not in (np.float32, np.float64):
            array = array.astype(np.float64)
        self.data = array
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._node: Optional[Node] = None
        self._graph: Optional[ComputeGraph] = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{label}, requires_grad={self.requires_grad})"

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
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        if self._graph is None:
            raise GraphError("backward called on a tensor with no recorded graph (already released?)")
        self._graph.backward(self)

    # arithmetic

    def __add__(self, other: Operand) -> "Tensor":
        if isinstance(other, Tensor):
            _same_shape("add", self, other)
            return _result("add", self.data + other.data, (self, other), lambda g: (g, g))
        return _result("add_scalar", self.data + other, (self,), lambda g: (g,))

    __radd__ = __add__

    def __sub__(self, other: Operand) -> "Tensor":
        if isinstance(other, Tensor):
            _same_shape("sub", self, other)
            return _result("sub", self.data - other.data, (self, other), lambda g: (g, -g))
        return _result("sub_scalar", self.data - other, (self,), lambda g: (g,))

    def __rsub__(self, other: float) -> "Tensor":
        return _result("rsub_scalar", other - self.data, (self,), lambda g: (-g,))

    def __neg__(self) -> "Tensor":
        return _result("neg", -self.data, (self,), lambda g: (-g,))

    def __mul__(self, other: Operand) -> "Tensor":
        if isinstance(other, Tensor):
            _same_shape("mul", self, other)
            a, b = self.data, other.data
            return _result("mul", a * b, (self, other), lambda g: (g * b, g * a))
        return _result("mul_scalar", self.data * other, (self,), lambda g: (g * other,))

    __rmul__ = __mul__

    def __truediv__(self, other: Operand) -> "Tensor":
        if isinstance(other, Tensor):
            _same_shape("div", self, other)
            a, b = self.data, other.data
            out = a / b
            return _result("div", out, (self, other), lambda g: (g / b, -g * out / b))
        return _result("div_scalar", self.data / other, (self,), lambda g: (g / other,))

    def __getitem__(self, index) -> "Tensor":
        source_shape, dtype = self.data.shape, self.data.dtype

        def adjoint(g):
            full = np.zeros(source_shape, dtype=dtype)
            np.add.at(full, index, g)
            return (full,)

        return _result("slice", self.data[index], (self,), adjoint)

    # elementwise

    def square(self) -> "Tensor":
        a = self.data
        return _result("square", a * a, (self,), lambda g: (2.0 * a * g,))

    def abs(self) -> "Tensor":
        a = self.data
        return _result("abs", np.abs(a), (self,), lambda g: (np.sign(a) * g,))

    def log(self) -> "Tensor":
        a = self.data
        return _result("log", np.log(a), (self,), lambda g: (g / a,))

    def sqrt(self) -> "Tensor":
        out = np.sqrt(self.data)
        return _result("sqrt", out, (self,), lambda g: (0.5 * g / out,))

    # reductions and layout

    def sum(self, axis: Optional[Union[int, Tuple[int, ...]]] = None) -> "Tensor":
        shape = self.data.shape
        if axis is None:
            return _result("sum", np.asarray(self.data.sum()), (self,), lambda g: (np.broadcast_to(g, shape),))
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        axes = tuple(a % len(shape) for a in axes)
        kept = tuple(1 if i in axes else n for i, n in enumerate(shape))
        return _result(
            "sum_axes", self.data.sum(axis=axes), (self,), lambda g: (np.broadcast_to(g.reshape(kept), shape),)
        )

    def mean(self, axis: Optional[Union[int, Tuple[int, ...]]] = None) -> "Tensor":
        total = self.sum(axis)
        return total * (total.size / self.size)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        source_shape = self.data.shape
        return _result("reshape", self.data.reshape(shape), (self,), lambda g: (g.reshape(source_shape),))


def _same_shape(op: str, a: Tensor, b: Tensor):
    if a.shape != b.shape:
        mismatched = next((i for i, (x, y) in enumerate(zip(a.shape, b.shape)) if x != y), None)
        dimension = "rank" if mismatched is None else f"axis {mismatched}"
        raise ShapeError(op, dimension, a.shape, b.shape)


def _result(op: str, data: np.ndarray, inputs: Tuple[Tensor, ...], adjoint: Adjoint) -> Tensor:
    requires = grad_enabled() and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=requires)
    if requires:
        current_graph().record(op, out, inputs, adjoint)
    return out


def record(op: str, data: np.ndarray, inputs: Tuple[Tensor, ...], adjoint: Adjoint) -> Tensor:
    """Build an op output and record it on the active graph when any input needs a gradient"""
    return _result(op, data, inputs, adjoint)


def concatenate(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    arrays = [t.data for t in tensors]
    bounds = np.cumsum([a.shape[axis] for a in arrays])[:-1]

    def adjoint(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _result("concatenate", np.concatenate(arrays, axis=axis), tuple(tensors), adjoint)
