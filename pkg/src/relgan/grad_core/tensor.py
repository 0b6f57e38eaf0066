"""Immutable f64 tensors and the define-by-run tape that records them."""

from __future__ import annotations

import threading
from contextlib import contextmanager

import numpy as np

_state = threading.local()


def _tape_stack():
    stack = getattr(_state, "stack", None)
    if stack is None:
        stack = _state.stack = []
    return stack


def active_tape():
    """The innermost open tape, or None while recording is paused."""
    stack = _tape_stack()
    return stack[-1] if stack else None


@contextmanager
def no_record():
    """Evaluate ops as plain numpy without touching any tape."""
    stack = _tape_stack()
    stack.append(None)
    try:
        yield
    finally:
        stack.pop()


class Tensor:
    """A dense float64 array plus an optional handle into the active tape.

    Leaves created with ``requires_grad=True`` are parameters: ``backward``
    returns gradients for them. Every other leaf (data, buffered fakes) is a
    constant. Array storage is marked read-only, so tensors may be shared
    freely across threads.
    """

    __slots__ = ("data", "requires_grad", "node", "name", "__weakref__")

    def __init__(self, data, requires_grad=False, name=None):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        arr.flags.writeable = False
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.node = None
        self.name = name

    @classmethod
    def _wrap(cls, arr, requires_grad=False):
        # trusted internal constructor: arr is a fresh float64 array
        t = cls.__new__(cls)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        arr.flags.writeable = False
        t.data = arr
        t.requires_grad = requires_grad
        t.node = None
        t.name = None
        return t

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data.reshape(-1)[0])

    def numpy(self):
        return self.data

    def detach(self):
        """Same values, cut from every graph."""
        return Tensor._wrap(self.data)

    def __repr__(self):
        tag = " param" if self.requires_grad and self.node is None else ""
        return f"Tensor(shape={list(self.shape)}{tag})"

    # Operator sugar for the primitives in ops.py.
    def __add__(self, other):
        from . import ops

        return ops.add(self, as_tensor(other, like=self))

    def __radd__(self, other):
        from . import ops

        return ops.add(as_tensor(other, like=self), self)

    def __sub__(self, other):
        from . import ops

        return ops.sub(self, as_tensor(other, like=self))

    def __rsub__(self, other):
        from . import ops

        return ops.sub(as_tensor(other, like=self), self)

    def __mul__(self, other):
        from . import ops

        if isinstance(other, (int, float)):
            return ops.scalar_mul(self, other)
        return ops.mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        from . import ops

        return ops.scalar_mul(self, -1.0)

    def __truediv__(self, other):
        from . import ops

        if isinstance(other, (int, float)):
            return ops.scalar_mul(self, 1.0 / other)
        return ops.div(self, other)

    def __matmul__(self, other):
        from . import ops

        return ops.matmul(self, other)


def as_tensor(value, like=None):
    """Wrap scalars/arrays as constants; a python scalar adopts ``like``'s shape."""
    if isinstance(value, Tensor):
        return value
    if like is not None and np.isscalar(value):
        return Tensor._wrap(np.full(like.shape, float(value)))
    return Tensor(value)


class Node:
    __slots__ = ("kind", "inputs", "output", "vjp", "index")

    def __init__(self, kind, inputs, output, vjp, index):
        self.kind = kind
        self.inputs = inputs
        self.output = output
        self.vjp = vjp
        self.index = index

    def __repr__(self):
        return f"Node({self.index}: {self.kind})"


class Tape:
    """Append-only record of primitive applications.

    Inputs always precede outputs, so iterating ``nodes`` backwards is a
    valid reverse topological order. Use as a context manager::

        with Tape() as tape:
            loss = f(params)
        grads = backward(tape, loss)
    """

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc):
        stack = _tape_stack()
        assert stack and stack[-1] is self, "tapes must be closed in LIFO order"
        stack.pop()
        return False

    @contextmanager
    def resume(self):
        """Reopen this tape, e.g. to record double-backward graphs."""
        stack = _tape_stack()
        stack.append(self)
        try:
            yield self
        finally:
            stack.pop()

    def __len__(self):
        return len(self.nodes)


def record(kind, out_data, inputs, vjp):
    """Wrap ``out_data`` and append a node when any input is differentiable.

    ``vjp(g, out)`` must return one cotangent (or None) per input, built
    from tensor ops so that higher-order graphs can be recorded.
    """
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out = Tensor._wrap(out_data, requires_grad=True)
        node = Node(kind, tuple(inputs), out, vjp, len(tape.nodes))
        tape.nodes.append(node)
        out.node = node
        return out
    return Tensor._wrap(out_data)
