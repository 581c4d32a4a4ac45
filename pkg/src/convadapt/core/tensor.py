"""Dense tensors and the reverse-mode tape.

Every differentiable primitive that runs while gradients are enabled and has
at least one input with ``requires_grad`` appends a :class:`TapeRecord` to the
graph. Records carry a global execution sequence number, so the set of
records reachable from a loss, sorted by that number, is exactly the tape of
the forward pass; :func:`backward` walks it in reverse.
"""

from __future__ import annotations

import contextlib
import contextvars
import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from ..errors import ContractError

_grad_enabled = contextvars.ContextVar("grad_enabled", default=True)
_sequence = itertools.count()

FLOAT_DTYPES = (np.float32, np.float64)


def grad_enabled() -> bool:
    return _grad_enabled.get()


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Run the enclosed block without recording anything on the tape."""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def _as_float_array(data) -> np.ndarray:
    arr = np.asarray(data)
    if arr.dtype in FLOAT_DTYPES:
        return arr
    return arr.astype(np.float32)


class Tensor:
    """A dense float array that may take part in differentiation.

    Storage is float32 unless constructed from a float64 array (the gradient
    checker runs whole models in float64).
    """

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_float_array(data)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._record: Optional[TapeRecord] = None

    @property
    def shape(self) -> tuple:
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
    def is_leaf(self) -> bool:
        return self._record is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # Arithmetic is routed through the primitives in ops so it lands on the tape.
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

        return ops.mul(self, -1.0)

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


class Parameter(Tensor):
    """A named leaf tensor owned by a model.

    ``trainable`` mirrors ``requires_grad``: frozen parameters never get a grad
    buffer and are skipped by the optimizer. Storage is float32 at
    construction; models can be cast afterwards for gradient checks.
    """

    def __init__(self, data, name: str = "", trainable: bool = True):
        super().__init__(np.asarray(data, dtype=np.float32), requires_grad=trainable)
        self.name = name

    @property
    def trainable(self) -> bool:
        return self.requires_grad

    @trainable.setter
    def trainable(self, value: bool) -> None:
        self.requires_grad = bool(value)
        if not value:
            self.grad = None

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape}, trainable={self.trainable})"


@dataclass(eq=False)
class TapeRecord:
    """One executed primitive.

    ``backward_fn`` maps the gradient of the output to a tuple with one entry
    per input (``None`` where no gradient is needed).
    """

    op: str
    inputs: tuple
    backward_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]
    seq: int = field(default_factory=lambda: next(_sequence))


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_output(data: np.ndarray, op: str, inputs: Sequence[Tensor], backward_fn) -> Tensor:
    """Wrap a primitive's result, recording it when any input needs a gradient."""
    out = Tensor(data)
    if grad_enabled() and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._record = TapeRecord(op, tuple(inputs), backward_fn)
    return out


def trace(loss: Tensor) -> list:
    """Return the tape records reachable from ``loss`` in execution order."""
    seen = {}
    stack = [loss]
    while stack:
        t = stack.pop()
        rec = t._record
        if rec is None or id(rec) in seen:
            continue
        seen[id(rec)] = rec
        stack.extend(rec.inputs)
    return sorted(seen.values(), key=lambda r: r.seq)


def _accumulate_leaf(t: Tensor, g: np.ndarray) -> None:
    g = np.asarray(g, dtype=t.data.dtype)
    if g.shape != t.data.shape:
        raise ContractError(f"gradient shape {g.shape} does not match tensor shape {t.data.shape}")
    if t.grad is None:
        t.grad = g.copy()
    else:
        t.grad += g


def backward(loss: Tensor) -> None:
    """Fill ``grad`` on every trainable leaf reachable from a scalar loss.

    Gradients add up when a tensor feeds several consumers. Leaves with
    ``requires_grad=False`` are never touched.
    """
    if loss.size != 1:
        raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
    seed = np.ones_like(loss.data)
    if loss._record is None:
        if loss.requires_grad:
            _accumulate_leaf(loss, seed)
        return
    pending = {id(loss._record): seed}
    for rec in reversed(trace(loss)):
        g_out = pending.pop(id(rec), None)
        if g_out is None:
            continue
        for inp, g in zip(rec.inputs, rec.backward_fn(g_out)):
            if g is None or not inp.requires_grad:
                continue
            if inp._record is None:
                _accumulate_leaf(inp, g)
            else:
                key = id(inp._record)
                if key in pending:
                    pending[key] = pending[key] + g
                else:
                    pending[key] = g
