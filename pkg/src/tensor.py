"""
Compute Substrate
Dense rank-≤3 tensors with reverse-mode gradients, the primitive operations
the model is composed of, precision modes and a runtime FLOP counter.
"""
import logging
import math
import threading
from collections import Counter
from contextlib import contextmanager
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import config
from .errors import DimensionError, NumericError, UsageError

logger = logging.getLogger(__name__)

MAX_RANK = 3

_state = threading.local()


def _local():
    if not hasattr(_state, "dtype"):
        _state.dtype = np.float32
        _state.grad_enabled = True
        _state.counters = []
        _state.stages = []
    return _state


def get_default_dtype():
    return _local().dtype


def set_default_dtype(dtype) -> None:
    """Switch between 32-bit (training) and 64-bit (gradient checking) modes."""
    dtype = np.dtype(dtype).type
    if dtype not in (np.float32, np.float64):
        raise UsageError(f"Unsupported precision: {dtype}")
    _local().dtype = dtype


@contextmanager
def precision(dtype) -> Iterator[None]:
    previous = get_default_dtype()
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(previous)


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block."""
    local = _local()
    previous = local.grad_enabled
    local.grad_enabled = False
    try:
        yield
    finally:
        local.grad_enabled = previous


# ---------------------------------------------------------------------------
# Runtime op counter
# ---------------------------------------------------------------------------

class OpCounter:
    """Accumulates forward FLOPs per primitive and per model stage."""

    def __init__(self):
        self.total = 0
        self.by_op: Counter = Counter()
        self.by_stage: Counter = Counter()

    def add(self, op: str, stage_name: Optional[str], flops: int) -> None:
        self.total += flops
        self.by_op[op] += flops
        self.by_stage[stage_name or "other"] += flops

    def __repr__(self):
        return f"OpCounter(total={self.total}, stages={dict(self.by_stage)})"


@contextmanager
def count_ops() -> Iterator[OpCounter]:
    """Count the FLOPs of every primitive executed inside the block."""
    counter = OpCounter()
    local = _local()
    local.counters.append(counter)
    try:
        yield counter
    finally:
        local.counters.remove(counter)


@contextmanager
def stage(name: str) -> Iterator[None]:
    """Label primitives executed inside the block with a stage name."""
    local = _local()
    local.stages.append(name)
    try:
        yield
    finally:
        local.stages.pop()


def _record(op: str, flops: int) -> None:
    local = _local()
    if not local.counters:
        return
    current = local.stages[-1] if local.stages else None
    for counter in local.counters:
        counter.add(op, current, int(flops))


# ---------------------------------------------------------------------------
# Tensor
# ---------------------------------------------------------------------------

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]
Operand = Union["Tensor", float, int, np.ndarray]


class Tensor:
    """Dense real array of rank ≤ 3 that can take part in gradient computation."""

    __array_priority__ = 100  # numpy defers to our reflected operators

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        array = np.asarray(data, dtype=dtype or get_default_dtype())
        if array.ndim > MAX_RANK:
            raise DimensionError(f"Tensor rank {array.ndim} exceeds {MAX_RANK}: shape {array.shape}")
        self.data = array
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._parents: Tuple["Tensor", ...] = ()
        self._backward: Optional[BackwardFn] = None
        self._op = ""

    # -- basic properties -------------------------------------------------
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

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag}, op={self._op or 'leaf'})"

    def __len__(self):
        return self.shape[0]

    # -- backward ---------------------------------------------------------
    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``."""
        if self.data.size != 1:
            raise UsageError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise UsageError("backward() on a tensor that does not depend on any parameter")

        order = _topological_order(self)
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            grad = grads.pop(id(node), None)
            if grad is None:
                continue
            if node._backward is None:
                node.grad = grad.copy() if node.grad is None else node.grad + grad
                continue
            parent_grads = node._backward(grad)
            for parent, parent_grad in zip(node._parents, parent_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = grads[key] + parent_grad if key in grads else parent_grad

    # -- operators --------------------------------------------------------
    def __add__(self, other: Operand) -> "Tensor":
        return add(self, other)

    def __radd__(self, other: Operand) -> "Tensor":
        return add(other, self)

    def __sub__(self, other: Operand) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: Operand) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other: Operand) -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other: Operand) -> "Tensor":
        return mul(other, self)

    def __truediv__(self, other: Operand) -> "Tensor":
        return div(self, other)

    def __rtruediv__(self, other: Operand) -> "Tensor":
        return div(other, self)

    def __neg__(self) -> "Tensor":
        return neg(self)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __rmatmul__(self, other) -> "Tensor":
        return matmul(as_tensor(other), self)

    def __getitem__(self, index) -> "Tensor":
        return getitem(self, index)

    def sum(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        return mean(self, axis=axis, keepdims=keepdims)


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


def as_tensor(value: Operand) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def apply_op(
    data: np.ndarray,
    parents: Sequence[Tensor],
    backward: BackwardFn,
    op: str,
    flops: int = 0,
) -> Tensor:
    """
    Create the result of a primitive and wire it into the graph.

    Args:
        data: Forward result
        parents: Input tensors, in the order ``backward`` returns their gradients
        backward: Maps the output gradient to one gradient (or None) per parent
        op: Primitive name (for the op counter and debugging)
        flops: Forward cost under the library's FLOP convention

    Returns:
        Output tensor
    """
    _record(op, flops)
    track = _local().grad_enabled and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=track)
    if track:
        out._parents = tuple(parents)
        out._backward = backward
        out._op = op
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# Elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return apply_op(out, (a, b), backward, "add", out.size * config.FLOPS_ELEMENTWISE)


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return apply_op(out, (a, b), backward, "sub", out.size * config.FLOPS_ELEMENTWISE)


def mul(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return apply_op(out, (a, b), backward, "mul", out.size * config.FLOPS_ELEMENTWISE)


def div(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def backward(g):
        return (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        )

    return apply_op(out, (a, b), backward, "div", out.size * config.FLOPS_ELEMENTWISE)


def neg(a: Tensor) -> Tensor:
    return apply_op(-a.data, (a,), lambda g: (-g,), "neg", a.size * config.FLOPS_ELEMENTWISE)


# ---------------------------------------------------------------------------
# Linear algebra and data movement
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes, broadcasting a leading batch axis."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out = np.matmul(a.data, b.data)

    def backward(g):
        grad_a = np.matmul(g, np.swapaxes(b.data, -1, -2))
        grad_b = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(grad_a, a.shape), _unbroadcast(grad_b, b.shape)

    flops = config.FLOPS_PER_MAC * out.size * a.shape[-1]
    return apply_op(out, (a, b), backward, "matmul", flops)


def transpose(a: Tensor) -> Tensor:
    """Swap the last two axes."""
    if a.ndim < 2:
        raise DimensionError(f"transpose needs rank ≥ 2, got shape {a.shape}")
    out = np.swapaxes(a.data, -1, -2)
    return apply_op(out, (a,), lambda g: (np.swapaxes(g, -1, -2),), "transpose")


def _is_basic_index(index) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return all(isinstance(p, (slice, int, np.integer)) for p in parts)


def getitem(a: Tensor, index) -> Tensor:
    out = a.data[index]

    basic = _is_basic_index(index)

    def backward(g):
        full = np.zeros_like(a.data)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return apply_op(np.array(out, dtype=a.dtype), (a,), backward, "slice")


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    """Concatenate along ``axis``; all other dims must agree."""
    tensors = [as_tensor(t) for t in tensors]
    reference = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(reference) or any(
            s != r for i, (s, r) in enumerate(zip(t.shape, reference)) if i != axis % len(reference)
        ):
            raise DimensionError(
                f"concat shape mismatch on axis {axis}: {[tuple(x.shape) for x in tensors]}"
            )
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return apply_op(out, tensors, backward, "concat")


def take_rows(table: Tensor, ids: np.ndarray) -> Tensor:
    """Gather rows of a 2-D table (embedding lookup); output shape ids.shape + (d,)."""
    ids = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2:
        raise DimensionError(f"take_rows needs a 2-D table, got shape {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise DimensionError(f"ids out of range for table with {table.shape[0]} rows")
    out = table.data[ids]

    def backward(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids, g)
        return (full,)

    return apply_op(out, (table,), backward, "take_rows")


# ---------------------------------------------------------------------------
# Reductions
# ---------------------------------------------------------------------------

def _expand_reduced(g: np.ndarray, shape, axis, keepdims) -> np.ndarray:
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape).copy()


def tensor_sum(a: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    out = np.sum(a.data, axis=axis, keepdims=keepdims)

    def backward(g):
        return (_expand_reduced(g, a.shape, axis, keepdims),)

    return apply_op(np.asarray(out), (a,), backward, "sum", a.size * config.FLOPS_ELEMENTWISE)


def mean(a: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    out = np.asarray(np.mean(a.data, axis=axis, keepdims=keepdims))
    count = a.size // max(out.size, 1)

    def backward(g):
        return (_expand_reduced(g / count, a.shape, axis, keepdims),)

    flops = (a.size + out.size) * config.FLOPS_ELEMENTWISE
    return apply_op(out, (a,), backward, "mean", flops)


# ---------------------------------------------------------------------------
# Nonlinearities
# ---------------------------------------------------------------------------

def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return apply_op(out, (a,), lambda g: (g * out,), "exp", a.size * config.FLOPS_ELEMENTWISE)


def log(a: Tensor) -> Tensor:
    out = np.log(a.data)
    return apply_op(out, (a,), lambda g: (g / a.data,), "log", a.size * config.FLOPS_ELEMENTWISE)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return apply_op(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh", a.size * config.FLOPS_ELEMENTWISE)


def sigmoid(a: Tensor) -> Tensor:
    out = np.exp(-np.logaddexp(0.0, -a.data)).astype(a.dtype)
    return apply_op(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid", a.size * config.FLOPS_ELEMENTWISE)


def log_sigmoid(a: Tensor) -> Tensor:
    """log σ(x), stable for large |x|."""
    out = (-np.logaddexp(0.0, -a.data)).astype(a.dtype)
    complement = np.exp(-np.logaddexp(0.0, a.data)).astype(a.dtype)  # σ(-x)
    return apply_op(out, (a,), lambda g: (g * complement,), "log_sigmoid", a.size * config.FLOPS_ELEMENTWISE)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    out = np.where(mask, a.data, 0).astype(a.dtype)
    return apply_op(out, (a,), lambda g: (g * mask,), "relu", a.size * config.FLOPS_ELEMENTWISE)


_GELU_SCALE = math.sqrt(2.0 / math.pi)


def gelu(a: Tensor) -> Tensor:
    """GELU, tanh approximation: 0.5x(1 + tanh(√(2/π)(x + 0.044715x³)))."""
    x = a.data
    inner = _GELU_SCALE * (x + config.GELU_COEF * x ** 3)
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def backward(g):
        d_inner = _GELU_SCALE * (1.0 + 3.0 * config.GELU_COEF * x * x)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner),)

    return apply_op(out, (a,), backward, "gelu", a.size * config.FLOPS_GELU)


def _check_finite(a: Tensor, op: str) -> None:
    if np.isnan(a.data).any():
        raise NumericError(f"{op} received NaN input (shape {a.shape})")


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Softmax with max-subtraction."""
    _check_finite(a, "softmax")
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / np.sum(e, axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - np.sum(g * out, axis=axis, keepdims=True)),)

    return apply_op(out, (a,), backward, "softmax", a.size * config.FLOPS_SOFTMAX)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    _check_finite(a, "log_softmax")
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    out = shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))
    probs = np.exp(out)

    def backward(g):
        return (g - probs * np.sum(g, axis=axis, keepdims=True),)

    return apply_op(out, (a,), backward, "log_softmax", a.size * config.FLOPS_SOFTMAX)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = config.LAYER_NORM_EPS) -> Tensor:
    """Normalise each row over the last axis, then apply gain and bias."""
    d = x.shape[-1]
    if d < 1 or gain.shape[-1] != d or bias.shape[-1] != d:
        raise DimensionError(f"layer_norm shapes: x {x.shape}, gain {gain.shape}, bias {bias.shape}")
    mu = np.mean(x.data, axis=-1, keepdims=True)
    centred = x.data - mu
    var = np.mean(centred * centred, axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = centred * inv_std
    out = x_hat * gain.data + bias.data

    def backward(g):
        d_hat = g * gain.data
        grad_x = inv_std * (
            d_hat
            - np.mean(d_hat, axis=-1, keepdims=True)
            - x_hat * np.mean(d_hat * x_hat, axis=-1, keepdims=True)
        )
        grad_gain = _unbroadcast(g * x_hat, gain.shape)
        grad_bias = _unbroadcast(g, bias.shape)
        return grad_x, grad_gain, grad_bias

    return apply_op(out.astype(x.dtype), (x, gain, bias), backward, "layer_norm", x.size * config.FLOPS_LAYER_NORM)


def zeros(shape: Sequence[int]) -> Tensor:
    return Tensor(np.zeros(tuple(shape), dtype=get_default_dtype()))
