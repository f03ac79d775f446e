"""Tensor type and the reverse-mode tape that records operations on it."""

from __future__ import annotations

import threading
import weakref
from contextlib import contextmanager
from typing import Callable, Optional, Sequence

import numpy as np

DEFAULT_DTYPE = np.float32


class DimensionError(ValueError):
    """Operand shapes are incompatible for an operation."""


class ConfigurationError(ValueError):
    """An operation was called with parameters outside its supported range."""


class ContractError(RuntimeError):
    """A usage precondition of the autodiff engine was violated."""


class Node:
    """One recorded operation: output tensor, its inputs and a backward rule.

    ``backward_fn`` maps the output gradient to a tuple of input gradients
    (``None`` for inputs that do not need one). The output is held weakly so
    a graph is freed by reference counting as soon as its tensors go away.
    """

    __slots__ = ("seq", "inputs", "_output", "backward_fn", "name")

    def __init__(self, seq, inputs, output, backward_fn, name):
        self.seq = seq
        self.inputs = inputs
        self._output = weakref.ref(output)
        self.backward_fn = backward_fn
        self.name = name

    @property
    def output(self):
        return self._output()


class Tape:
    """Records operations in execution order.

    Each node gets a monotonically increasing sequence number, so sorting the
    nodes reachable from a loss by that number gives a topological order.
    A frozen tape records nothing (inference mode).
    """

    def __init__(self):
        self.counter = 0
        self.frozen = False

    def record(self, inputs, output, backward_fn, name) -> Node:
        self.counter += 1
        return Node(self.counter, inputs, output, backward_fn, name)

    def nodes_for(self, root: "Tensor") -> list[Node]:
        """Nodes reachable from ``root``, sorted so inputs precede outputs."""
        seen = set()
        nodes = []
        stack = [root]
        while stack:
            t = stack.pop()
            node = t._node
            if node is None or id(node) in seen:
                continue
            seen.add(id(node))
            nodes.append(node)
            stack.extend(node.inputs)
        nodes.sort(key=lambda n: n.seq)
        return nodes


_local = threading.local()


def current_tape() -> Tape:
    tape = getattr(_local, "tape", None)
    if tape is None:
        tape = _local.tape = Tape()
    return tape


@contextmanager
def no_grad():
    """Freeze the tape for the duration of the block."""
    tape = current_tape()
    prev = tape.frozen
    tape.frozen = True
    try:
        yield
    finally:
        tape.frozen = prev


def is_grad_enabled() -> bool:
    return not current_tape().frozen


class Tensor:
    """Dense float array that can take part in reverse-mode differentiation."""

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype != np.float64 or not isinstance(data, np.ndarray):
            # float64 is kept only when explicitly handed a float64 ndarray
            # (gradient checking); everything else is float32.
            arr = arr.astype(DEFAULT_DTYPE, copy=False)
        self.data: np.ndarray = arr
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._node: Optional[Node] = None

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _raise_item(self.shape)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __len__(self) -> int:
        return self.data.shape[0]

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # -- autodiff ---------------------------------------------------------
    def backward(self) -> None:
        backward(self)

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    # -- operator sugar (implemented in ops) ------------------------------
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.scale(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def sum(self):
        from . import ops
        return ops.sum(self)

    def mean(self):
        from . import ops
        return ops.mean(self)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)


def _raise_item(shape):
    raise ContractError(f"item() needs a single-element tensor, got shape {shape}")


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_result(
    data: np.ndarray,
    inputs: Sequence[Tensor],
    backward_fn: Callable[[np.ndarray], tuple],
    name: str,
) -> Tensor:
    """Wrap ``data`` as an op output and record it on the tape if needed."""
    out = Tensor(data, dtype=data.dtype)
    tape = current_tape()
    if not tape.frozen and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._node = tape.record(tuple(inputs), out, backward_fn, name)
    return out


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` of every requires-grad tensor reachable from ``loss``.

    Gradients accumulate additively into existing ``.grad`` buffers.
    """
    if current_tape().frozen:
        raise ContractError("backward() called while the tape is frozen")
    if loss.data.size != 1:
        raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss does not depend on any tensor that requires grad")

    nodes = current_tape().nodes_for(loss)
    # intermediate gradients live here; leaves get them in .grad
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(nodes):
        out = node.output
        if out is None:
            continue
        g_out = grads.pop(id(out), None)
        if g_out is None:
            continue
        in_grads = node.backward_fn(g_out)
        for t, g in zip(node.inputs, in_grads):
            if g is None or not t.requires_grad:
                continue
            if g.shape != t.shape:
                raise DimensionError(
                    f"backward of {node.name} produced grad {g.shape} for input {t.shape}"
                )
            if t._node is None:
                t._accumulate(g)
            else:
                key = id(t)
                if key in grads:
                    grads[key] = grads[key] + g
                else:
                    grads[key] = g
    if loss._node is None:
        loss._accumulate(np.ones_like(loss.data))
