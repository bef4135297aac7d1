"""Reverse-mode automatic differentiation over float64 numpy arrays.

Every operation records its inputs and a closure that maps the output
gradient onto input gradients. :func:`backward` walks the recorded graph
in reverse topological order.
"""

import contextlib

import numpy as np

from ..errors import NumericalError

__all__ = ["Tensor", "as_tensor", "backward", "scope", "einsum", "concat", "stack", "where"]

_scope_stack = []


@contextlib.contextmanager
def scope(name):
    """Label tensors created inside the block (used in numerical-failure reports)."""
    _scope_stack.append(name)
    try:
        yield
    finally:
        _scope_stack.pop()


def _current_scope():
    return ".".join(_scope_stack)


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    ndim_extra = grad.ndim - len(shape)
    if ndim_extra > 0:
        grad = grad.sum(axis=tuple(range(ndim_extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op", "scope")

    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None, op=""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents if self.requires_grad else ()
        self._backward = _backward if self.requires_grad else None
        self.op = op
        self.scope = _current_scope()

    # basic properties

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def T(self):
        return self.transpose()

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op!r})"

    def __len__(self):
        return len(self.data)

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = g.copy() if g.base is not None or g is self.data else g
        else:
            self.grad = self.grad + g

    # elementwise arithmetic

    def __add__(self, other):
        other = as_tensor(other)
        a, b = self, other

        def bw(g):
            return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

        return Tensor(a.data + b.data, _parents=(a, b), _backward=bw, op="add")

    __radd__ = __add__

    def __neg__(self):
        return Tensor(-self.data, _parents=(self,), _backward=lambda g: (-g,), op="neg")

    def __sub__(self, other):
        other = as_tensor(other)
        a, b = self, other

        def bw(g):
            return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

        return Tensor(a.data - b.data, _parents=(a, b), _backward=bw, op="sub")

    def __rsub__(self, other):
        return as_tensor(other) - self

    def __mul__(self, other):
        other = as_tensor(other)
        a, b = self, other

        def bw(g):
            return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

        return Tensor(a.data * b.data, _parents=(a, b), _backward=bw, op="mul")

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        a, b = self, other

        def bw(g):
            ga = _unbroadcast(g / b.data, a.shape)
            gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
            return ga, gb

        return Tensor(a.data / b.data, _parents=(a, b), _backward=bw, op="div")

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise TypeError("only constant exponents are supported")
        a = self

        def bw(g):
            return (g * exponent * a.data ** (exponent - 1),)

        return Tensor(a.data**exponent, _parents=(a,), _backward=bw, op="pow")

    def __matmul__(self, other):
        other = as_tensor(other)
        a, b = self, other
        if a.ndim < 2 or b.ndim < 2:
            raise ValueError("matmul operands need at least two dimensions")

        def bw(g):
            ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
            gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
            return ga, gb

        return Tensor(a.data @ b.data, _parents=(a, b), _backward=bw, op="matmul")

    def __rmatmul__(self, other):
        return as_tensor(other) @ self

    # unary maps

    def relu(self):
        a = self
        mask = a.data > 0
        return Tensor(a.data * mask, _parents=(a,), _backward=lambda g: (g * mask,), op="relu")

    def sqrt(self):
        a = self
        out = np.sqrt(a.data)
        return Tensor(out, _parents=(a,), _backward=lambda g: (g * 0.5 / out,), op="sqrt")

    def exp(self):
        a = self
        out = np.exp(a.data)
        return Tensor(out, _parents=(a,), _backward=lambda g: (g * out,), op="exp")

    # reductions and shape ops

    def sum(self, axis=None, keepdims=False):
        a = self

        def bw(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, a.shape),)

        return Tensor(a.data.sum(axis=axis, keepdims=keepdims), _parents=(a,), _backward=bw, op="sum")

    def mean(self, axis=None, keepdims=False):
        n = self.size if axis is None else np.prod([self.shape[i] for i in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        return Tensor(
            a.data.reshape(shape),
            _parents=(a,),
            _backward=lambda g: (g.reshape(a.shape),),
            op="reshape",
        )

    def transpose(self, *axes):
        a = self
        if not axes:
            axes = tuple(reversed(range(a.ndim)))
        elif len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inverse = tuple(np.argsort(axes))
        return Tensor(
            a.data.transpose(axes),
            _parents=(a,),
            _backward=lambda g: (g.transpose(inverse),),
            op="transpose",
        )

    def swapaxes(self, i, j):
        axes = list(range(self.ndim))
        axes[i], axes[j] = axes[j], axes[i]
        return self.transpose(axes)

    def __getitem__(self, idx):
        a = self

        def bw(g):
            full = np.zeros_like(a.data)
            np.add.at(full, idx, g)
            return (full,)

        return Tensor(a.data[idx], _parents=(a,), _backward=bw, op="getitem")


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def einsum(subscripts, a, b):
    """Two-operand einsum; each operand index must appear in the other operand or the output."""
    a, b = as_tensor(a), as_tensor(b)
    inputs, out = subscripts.replace(" ", "").split("->")
    sa, sb = inputs.split(",")

    def bw(g):
        ga = np.einsum(f"{out},{sb}->{sa}", g, b.data, optimize=True)
        gb = np.einsum(f"{sa},{out}->{sb}", a.data, g, optimize=True)
        return ga, gb

    data = np.einsum(subscripts, a.data, b.data, optimize=True)
    return Tensor(data, _parents=(a, b), _backward=bw, op="einsum")


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    data = np.concatenate([t.data for t in tensors], axis=axis)
    return Tensor(data, _parents=tuple(tensors), _backward=bw, op="concat")


def stack(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]

    def bw(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    data = np.stack([t.data for t in tensors], axis=axis)
    return Tensor(data, _parents=tuple(tensors), _backward=bw, op="stack")


def where(mask, a, b):
    """Select ``a`` where ``mask`` (a constant boolean array) holds, else ``b``."""
    a, b = as_tensor(a), as_tensor(b)
    mask = np.asarray(mask, dtype=bool)

    def bw(g):
        return _unbroadcast(np.where(mask, g, 0.0), a.shape), _unbroadcast(np.where(mask, 0.0, g), b.shape)

    return Tensor(np.where(mask, a.data, b.data), _parents=(a, b), _backward=bw, op="where")


def _topological_order(root):
    order, visited = [], set()
    stack_ = [(root, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack_.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack_.append((p, False))
    return order


def backward(loss, check_finite=True):
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf that requires grad.

    Intermediate gradients are freed once propagated. With ``check_finite``
    a :class:`NumericalError` naming the producing layer is raised as soon
    as a non-finite gradient appears.
    """
    if loss.size != 1:
        raise ValueError("backward() needs a scalar loss")
    if not loss.requires_grad:
        return
    order = _topological_order(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is None:
            continue
        grads = node._backward(node.grad)
        for parent, pg in zip(node._parents, grads):
            if not parent.requires_grad or pg is None:
                continue
            pg = np.asarray(pg, dtype=np.float64)
            if check_finite and not np.all(np.isfinite(pg)):
                where_ = node.scope or "<top level>"
                raise NumericalError(f"non-finite gradient from {node.op} in {where_}")
            parent._accumulate(pg)
        node.grad = None
        node._parents = ()
        node._backward = None
