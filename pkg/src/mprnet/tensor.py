"""Dense tensors with reverse-mode automatic differentiation.

A :class:`Tensor` wraps a numpy array. Operations on tensors that require
gradients record a node (parents plus a local-gradient closure); calling
:meth:`Tensor.backward` on a scalar walks the recorded graph once in reverse
topological order and accumulates ``.grad`` on every leaf that asked for it.

Binary operations broadcast like numpy; the gradient is summed back to each
operand's shape. :func:`pointwise` is the strict entry point that insists on
equal shapes.
"""
from __future__ import annotations

import contextlib
import threading

import numpy as np

_state = threading.local()


def is_grad_enabled():
    return getattr(_state, "grad_enabled", True)


@contextlib.contextmanager
def no_grad():
    prev = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


class BranchTape:
    """Records, or replays, which side of each kink the rectifiers and |x| took.

    In ``"record"`` mode every piecewise op appends its branch pattern. In
    ``"replay"`` mode the ops reuse the recorded patterns in call order, so a
    forward pass evaluates the same smooth piece as the recorded one.
    ``flips`` counts entries whose natural branch differed from the replayed
    one; ``min_abs`` is the closest any recorded input came to a kink.
    """

    def __init__(self, mode, patterns=None):
        if mode not in ("record", "replay"):
            raise ValueError(f"unknown tape mode {mode!r}")
        self.mode = mode
        self.patterns = [] if patterns is None else patterns
        self.pos = 0
        self.flips = 0
        self.min_abs = np.inf

    def branch(self, x, pattern):
        if x.size:
            self.min_abs = min(self.min_abs, float(np.min(np.abs(x))))
        if self.mode == "record":
            self.patterns.append(pattern)
            return pattern
        if self.pos >= len(self.patterns):
            raise RuntimeError("branch tape exhausted; forward pass differs from the recorded one")
        ref = self.patterns[self.pos]
        self.pos += 1
        if ref.shape != pattern.shape:
            raise RuntimeError("branch tape shape mismatch; forward pass differs from the recorded one")
        self.flips += int(np.count_nonzero(ref != pattern))
        return ref


@contextlib.contextmanager
def branch_tape(mode="record", patterns=None):
    tape = BranchTape(mode, patterns)
    prev = getattr(_state, "tape", None)
    _state.tape = tape
    try:
        yield tape
    finally:
        _state.tape = prev


def _branch(x, pattern):
    tape = getattr(_state, "tape", None)
    return pattern if tape is None else tape.branch(x, pattern)


def _unbroadcast(grad, shape):
    if grad.shape == tuple(shape):
        return grad
    ndim_extra = grad.ndim - len(shape)
    if ndim_extra > 0:
        grad = grad.sum(axis=tuple(range(ndim_extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """An array node in the autodiff graph."""

    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.array(data, dtype=dtype if dtype is not None else None, copy=True)
        if dtype is None and arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor data contains NaN or Inf")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None

    @classmethod
    def from_op(cls, data, parents, backward):
        """Build the output of an operation.

        ``backward(g)`` receives the upstream gradient and returns one
        gradient (or ``None``) per parent, in order.
        """
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        needs = is_grad_enabled() and any(p.requires_grad for p in parents)
        out.requires_grad = needs
        out._parents = tuple(parents) if needs else ()
        out._backward = backward if needs else None
        return out

    # -- basic properties -------------------------------------------------
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
    def dtype(self):
        return self.data.dtype

    def numpy(self):
        return self.data

    def item(self):
        if self.data.size != 1:
            raise ValueError(f"tensor of shape {self.shape} is not a scalar")
        return float(self.data.reshape(-1)[0])

    def detach(self):
        return Tensor.from_op(self.data, (), None)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    # -- autodiff ---------------------------------------------------------
    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ValueError(f"backward needs a scalar loss, got shape {self.shape}")
            grad = np.ones_like(self.data)
        if not self.requires_grad:
            return

        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        grads = {id(self): grad}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # -- operator sugar ---------------------------------------------------
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

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes)


class Parameter(Tensor):
    """A named trainable leaf whose gradient accumulator matches its value."""

    def __init__(self, data, name="", dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=dtype)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64 if dtype is None else dtype)
    return Tensor.from_op(arr, (), None)


def _pair(a, b):
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        b = as_tensor(np.asarray(b, dtype=a.dtype))
    elif isinstance(b, Tensor) and not isinstance(a, Tensor):
        a = as_tensor(np.asarray(a, dtype=b.dtype))
    return as_tensor(a), as_tensor(b)


# -- elementwise ----------------------------------------------------------
def add(a, b):
    a, b = _pair(a, b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor.from_op(a.data + b.data, (a, b), bw)


def sub(a, b):
    a, b = _pair(a, b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor.from_op(a.data - b.data, (a, b), bw)


def mul(a, b):
    a, b = _pair(a, b)

    def bw(g):
        return (
            _unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
            _unbroadcast(g * a.data, b.shape) if b.requires_grad else None,
        )

    return Tensor.from_op(a.data * b.data, (a, b), bw)


def div(a, b):
    a, b = _pair(a, b)
    if np.any(b.data == 0):
        raise ZeroDivisionError("division by a tensor containing zeros")

    def bw(g):
        return (
            _unbroadcast(g / b.data, a.shape) if a.requires_grad else None,
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape) if b.requires_grad else None,
        )

    return Tensor.from_op(a.data / b.data, (a, b), bw)


def scale(x, factor):
    x = as_tensor(x)
    factor = x.dtype.type(factor)
    return Tensor.from_op(x.data * factor, (x,), lambda g: (g * factor,))


def sigmoid(x):
    x = as_tensor(x)
    # split by sign so exp never overflows
    z = np.exp(-np.abs(x.data))
    out = np.where(x.data >= 0, 1.0 / (1.0 + z), z / (1.0 + z)).astype(x.dtype)
    return Tensor.from_op(out, (x,), lambda g: (g * out * (1.0 - out),))


def relu(x):
    x = as_tensor(x)
    pos = _branch(x.data, x.data > 0)
    return Tensor.from_op(np.where(pos, x.data, 0).astype(x.dtype), (x,), lambda g: (g * pos,))


def leaky_relu(x, slope=0.2):
    x = as_tensor(x)
    factor = np.where(_branch(x.data, x.data > 0), 1.0, slope).astype(x.dtype)
    return Tensor.from_op(x.data * factor, (x,), lambda g: (g * factor,))


def tabs(x):
    x = as_tensor(x)
    sign = _branch(x.data, np.sign(x.data))
    return Tensor.from_op(x.data * sign, (x,), lambda g: (g * sign,))


def exp(x):
    x = as_tensor(x)
    out = np.exp(x.data)
    return Tensor.from_op(out, (x,), lambda g: (g * out,))


_POINTWISE_UNARY = {"sigmoid": sigmoid, "relu": relu, "leaky_relu": leaky_relu}


def pointwise(a, kind, b=None, factor=None):
    """Strict elementwise entry point: binary kinds require equal shapes."""
    if kind in ("add", "mul"):
        if b is None:
            raise ValueError(f"{kind} needs two operands")
        a, b = _pair(a, b)
        if a.shape != b.shape:
            raise ValueError(f"{kind}: shape mismatch {a.shape} vs {b.shape}")
        return add(a, b) if kind == "add" else mul(a, b)
    if kind == "scale":
        return scale(a, 1.0 if factor is None else factor)
    if kind in _POINTWISE_UNARY:
        return _POINTWISE_UNARY[kind](a)
    raise ValueError(f"unknown pointwise kind {kind!r}")


# -- reductions -----------------------------------------------------------
def tsum(x, axis=None, keepdims=False):
    x = as_tensor(x)
    out = np.sum(x.data, axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return Tensor.from_op(np.asarray(out), (x,), bw)


def mean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    count = x.size if axis is None else int(np.prod([x.shape[a] for a in np.atleast_1d(axis)]))
    return scale(tsum(x, axis, keepdims), 1.0 / count)


# -- shape ----------------------------------------------------------------
def reshape(x, shape):
    x = as_tensor(x)
    return Tensor.from_op(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def transpose(x, axes):
    x = as_tensor(x)
    axes = tuple(axes) if axes else tuple(reversed(range(x.ndim)))
    inv = tuple(np.argsort(axes))
    return Tensor.from_op(np.ascontiguousarray(x.data.transpose(axes)), (x,),
                          lambda g: (g.transpose(inv),))


def getitem(x, index):
    x = as_tensor(x)

    def bw(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g) if _is_advanced(index) else _assign_add(full, index, g)
        return (full,)

    return Tensor.from_op(np.array(x.data[index]), (x,), bw)


def _is_advanced(index):
    items = index if isinstance(index, tuple) else (index,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def _assign_add(full, index, g):
    full[index] += g


def concat(tensors, axis=1):
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ValueError("concat needs at least one tensor")
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(
            s != r for i, (s, r) in enumerate(zip(t.shape, ref)) if i != axis % len(ref)
        ):
            raise ValueError(f"concat: incompatible shapes {ref} and {t.shape} along axis {axis}")
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor.from_op(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), bw)


def concat_channels(a, b):
    """Join two (n, c, h, w) tensors along the channel axis."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 4 or b.ndim != 4:
        raise ValueError("concat_channels expects rank-4 tensors")
    if (a.shape[0], a.shape[2], a.shape[3]) != (b.shape[0], b.shape[2], b.shape[3]):
        raise ValueError(f"concat_channels: spatial/batch mismatch {a.shape} vs {b.shape}")
    return concat([a, b], axis=1)


def matmul(a, b):
    a, b = _pair(a, b)

    def bw(g):
        ga = g @ np.swapaxes(b.data, -1, -2) if a.requires_grad else None
        gb = np.swapaxes(a.data, -1, -2) @ g if b.requires_grad else None
        return (
            _unbroadcast(ga, a.shape) if ga is not None else None,
            _unbroadcast(gb, b.shape) if gb is not None else None,
        )

    return Tensor.from_op(a.data @ b.data, (a, b), bw)


# -- normalisation --------------------------------------------------------
def softmax(x, axis=-1, valid=None):
    """Numerically stable softmax along ``axis``.

    ``valid`` is an optional boolean array broadcastable to ``x``; entries
    outside it get probability exactly 0. Every slice must keep at least one
    valid entry.
    """
    x = as_tensor(x)
    if x.size == 0 or x.shape[axis] == 0:
        raise ValueError("softmax of an empty input")
    if valid is None:
        shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
        e = np.exp(shifted)
    else:
        valid = np.broadcast_to(valid, x.shape)
        if not np.all(np.any(valid, axis=axis)):
            raise ValueError("softmax slice has no valid entries")
        masked = np.where(valid, x.data, x.data.dtype.type(-np.inf))
        masked -= np.max(masked, axis=axis, keepdims=True)
        # exp(-inf) is exactly 0, so invalid entries drop out without a second pass
        e = np.exp(masked, out=masked)
    out = e / np.sum(e, axis=axis, keepdims=True)

    def bw(g):
        return (out * (g - np.sum(g * out, axis=axis, keepdims=True)),)

    return Tensor.from_op(out, (x,), bw)


def l2_normalize(x, axis=-1):
    """Scale slices along ``axis`` to unit length; zero-norm slices map to zero."""
    x = as_tensor(x)
    norm = np.sqrt(np.sum(x.data * x.data, axis=axis, keepdims=True))
    nz = norm > 0
    safe = np.where(nz, norm, 1.0)
    out = np.where(nz, x.data / safe, 0.0).astype(x.dtype)

    def bw(g):
        proj = np.sum(g * out, axis=axis, keepdims=True)
        return (np.where(nz, (g - out * proj) / safe, 0.0).astype(x.dtype),)

    return Tensor.from_op(out, (x,), bw)
