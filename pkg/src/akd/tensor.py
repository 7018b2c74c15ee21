"""Dense tensors with reverse-mode differentiation over an explicit tape.

A Tensor wraps a numpy array. Operations executed while a tape is active
are recorded as (output, inputs, backward_fn) entries; backward() replays
the tape once, in reverse, accumulating gradients into every tracked
input. With no active tape, operations run in inference mode and record
nothing (this is how frozen teachers stay gradient-free).
"""

import contextlib
import threading

import numpy as np

from . import kernels
from .errors import ContractError, DimensionError, NumericError

_state = threading.local()


def _tape_stack():
    if not hasattr(_state, "stack"):
        _state.stack = []
    return _state.stack


def active_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tape:
    """Ordered record of primitive operations for one backward pass."""

    def __init__(self):
        self.records = []  # (out, inputs, backward_fn)

    def record(self, out, inputs, backward_fn):
        self.records.append((out, inputs, backward_fn))

    def __len__(self):
        return len(self.records)


@contextlib.contextmanager
def record_tape():
    tape = Tape()
    _tape_stack().append(tape)
    try:
        yield tape
    finally:
        _tape_stack().pop()


class Tensor:
    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None

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

    def item(self):
        return float(self.data.reshape(-1)[0])

    def numpy(self):
        return self.data

    def detach(self):
        """A gradient-free view of the same values."""
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def _emit(out_data, inputs, backward_fn):
    """Wrap a forward result; record it when a tape is tracking."""
    tape = active_tape()
    tracked = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=tracked)
    if tracked:
        tape.record(out, inputs, backward_fn)
    return out


def _unbroadcast(grad, shape):
    """Reduce a gradient back to the shape it was broadcast from."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


def backward(root, tape):
    """Propagate d(root)/d(leaf) to every tracked leaf on the tape.

    Repeated calls without zero_grad accumulate into leaf .grad.
    """
    if root.size != 1:
        raise ContractError(f"backward root must be scalar, got shape {root.shape}")
    grads = {id(root): np.ones_like(root.data)}
    produced = {id(out) for out, _, _ in tape.records}
    for out, inputs, backward_fn in reversed(tape.records):
        gout = grads.pop(id(out), None)
        if gout is None:
            continue
        for inp, g in zip(inputs, backward_fn(gout)):
            if g is None or not inp.requires_grad:
                continue
            if id(inp) in produced:
                # intermediate value: accumulate in the scratch map
                key = id(inp)
                grads[key] = g if key not in grads else grads[key] + g
            else:
                inp.grad = g.copy() if inp.grad is None else inp.grad + g


# ---------------------------------------------------------------------------
# primitives


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise DimensionError(f"matmul inner extents differ: {a.shape} vs {b.shape}")
    out = a.data @ b.data

    def bwd(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _emit(out, (a, b), bwd)


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data + b.data
    except ValueError as e:
        raise DimensionError(f"add shapes {a.shape} vs {b.shape}: {e}") from None
    return _emit(out, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data - b.data
    except ValueError as e:
        raise DimensionError(f"sub shapes {a.shape} vs {b.shape}: {e}") from None
    return _emit(out, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data * b.data
    except ValueError as e:
        raise DimensionError(f"mul shapes {a.shape} vs {b.shape}: {e}") from None

    def bwd(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _emit(out, (a, b), bwd)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def bwd(g):
        return (_unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _emit(out, (a, b), bwd)


def scale(a, c):
    a = as_tensor(a)
    c = float(c)
    return _emit(a.data * c, (a,), lambda g: (g * c,))


def gelu(a):
    a = as_tensor(a)
    out = kernels.gelu_forward(a.data)
    return _emit(out, (a,), lambda g: (kernels.gelu_backward(a.data, g),))


def log(a):
    a = as_tensor(a)
    return _emit(np.log(a.data), (a,), lambda g: (g / a.data,))


def clamp_min(a, floor):
    a = as_tensor(a)
    floor = float(floor)
    out = np.maximum(a.data, floor)
    return _emit(out, (a,), lambda g: (g * (a.data > floor),))


def softmax(a, axis=-1):
    a = as_tensor(a)
    if np.isnan(a.data).any():
        raise NumericError("softmax input contains NaN")
    axis = axis % a.ndim
    moved = np.moveaxis(a.data, axis, -1)
    y2 = kernels.softmax_rows(np.ascontiguousarray(moved).reshape(-1, moved.shape[-1]))
    y = np.moveaxis(y2.reshape(moved.shape), -1, axis)

    def bwd(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return ((g - dot) * y,)

    return _emit(y, (a,), bwd)


def layer_norm(a, eps=1e-6):
    """Standardize the last axis (zero mean, unit variance); pre-affine."""
    a = as_tensor(a)
    lead = a.shape[:-1]
    n = a.shape[-1]
    xhat2, inv_std2 = kernels.layernorm_rows(a.data.reshape(-1, n), eps)
    xhat = xhat2.reshape(a.shape)
    inv_std = inv_std2.reshape(lead + (1,))

    def bwd(g):
        m1 = g.mean(axis=-1, keepdims=True)
        m2 = (g * xhat).mean(axis=-1, keepdims=True)
        return (inv_std * (g - m1 - xhat * m2),)

    return _emit(xhat, (a,), bwd)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, splits, axis=axis))

    return _emit(out, tuple(tensors), bwd)


def slice_axis(a, axis, start, length):
    a = as_tensor(a)
    if start < 0 or start + length > a.shape[axis]:
        raise DimensionError(
            f"slice [{start}:{start + length}) out of range for axis {axis} "
            f"of shape {a.shape}")
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)

    def bwd(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        return (full,)

    return _emit(a.data[idx], (a,), bwd)


def select(a, axis, index):
    """Remove `axis` by picking one index along it."""
    a = as_tensor(a)
    idx = [slice(None)] * a.ndim
    idx[axis] = index
    idx = tuple(idx)

    def bwd(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        return (full,)

    return _emit(a.data[idx], (a,), bwd)


def reshape(a, shape):
    a = as_tensor(a)
    old = a.shape
    out = a.data.reshape(shape)
    return _emit(out, (a,), lambda g: (g.reshape(old),))


def transpose(a, ax0, ax1):
    a = as_tensor(a)
    out = np.swapaxes(a.data, ax0, ax1)
    return _emit(out, (a,), lambda g: (np.swapaxes(g, ax0, ax1),))


def broadcast_to(a, shape):
    a = as_tensor(a)
    out = np.broadcast_to(a.data, shape).copy()
    return _emit(out, (a,), lambda g: (_unbroadcast(g, a.shape),))


def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.shape).copy(),)

    return _emit(out, (a,), bwd)


def tmean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    count = a.size if axis is None else a.shape[axis]
    out = a.data.mean(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy() / count,)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.shape).copy() / count,)

    return _emit(out, (a,), bwd)


def reduce_max(a, axis):
    a = as_tensor(a)
    out = a.data.max(axis=axis)
    arg = a.data.argmax(axis=axis)

    def bwd(g):
        full = np.zeros_like(a.data)
        np.put_along_axis(full, np.expand_dims(arg, axis),
                          np.expand_dims(g, axis), axis=axis)
        return (full,)

    return _emit(out, (a,), bwd)


def reduce_min(a, axis):
    a = as_tensor(a)
    out = a.data.min(axis=axis)
    arg = a.data.argmin(axis=axis)

    def bwd(g):
        full = np.zeros_like(a.data)
        np.put_along_axis(full, np.expand_dims(arg, axis),
                          np.expand_dims(g, axis), axis=axis)
        return (full,)

    return _emit(out, (a,), bwd)


def gather_labels(a, labels):
    """Pick a[i, labels[i]] from a 2-D tensor; backward scatters."""
    a = as_tensor(a)
    if a.ndim != 2:
        raise DimensionError(f"gather_labels expects 2-D input, got {a.shape}")
    labels = np.asarray(labels, dtype=np.int64)
    rows = np.arange(a.shape[0])
    out = a.data[rows, labels]

    def bwd(g):
        full = np.zeros_like(a.data)
        full[rows, labels] = g
        return (full,)

    return _emit(out, (a,), bwd)
