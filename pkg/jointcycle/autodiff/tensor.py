from __future__ import annotations

import itertools
import logging
import threading
from contextlib import contextmanager
from typing import Any, Iterator, Sequence

import numpy as np

from ..errors import NonFiniteError, TapeError

logger = logging.getLogger(__name__)

FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))

_state = threading.local()
_seq = itertools.count()


def is_grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Evaluate primitives without recording them for backward."""
    prev = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


def _active_tapes() -> list["Tape"]:
    tapes = getattr(_state, "tapes", None)
    if tapes is None:
        tapes = _state.tapes = []
    return tapes


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum out the axes numpy broadcasting added or stretched so grad matches `shape`."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """An immutable float32/float64 array that can take part in a recorded computation.

    `grad` is populated by `backward()` on leaves that have `requires_grad=True`.
    Parameter updates rebind the buffer through `assign()`; buffers are never written in place.
    """

    def __init__(self, data: Any, requires_grad: bool = False, dtype: Any = None, name: str | None = None):
        arr = np.array(data, dtype=dtype, copy=True)
        if arr.dtype not in FLOAT_DTYPES:
            arr = arr.astype(np.float32)
        if arr.ndim == 0:
            arr = arr.reshape(())
        self.data = _frozen(arr)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.creator: Function | None = None
        self.name = name

    @classmethod
    def _from_op(cls, arr: np.ndarray, requires_grad: bool) -> "Tensor":
        t = cls.__new__(cls)
        t.data = _frozen(arr)
        t.requires_grad = requires_grad
        t.grad = None
        t.creator = None
        t.name = None
        return t

    # ---------- properties ----------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        if self.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad}{label})"

    # ---------- graph plumbing ----------
    def detach(self) -> "Tensor":
        return Tensor._from_op(self.data, False)

    def assign(self, arr: np.ndarray) -> None:
        arr = np.asarray(arr, dtype=self.data.dtype)
        if arr.shape != self.shape:
            raise ValueError(f"assign shape {arr.shape} does not match {self.shape}")
        self.data = _frozen(arr.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad: np.ndarray | None = None) -> "Tape":
        return backward(self, grad)

    # ---------- operators ----------
    def __add__(self, other: Any) -> "Tensor":
        from . import ops

        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other: Any) -> "Tensor":
        from . import ops

        return ops.sub(self, other)

    def __rsub__(self, other: Any) -> "Tensor":
        from . import ops

        return ops.sub(other, self)

    def __mul__(self, other: Any) -> "Tensor":
        from . import ops

        if isinstance(other, (int, float)):
            return ops.scale(self, float(other))
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other: Any) -> "Tensor":
        from . import ops

        if isinstance(other, (int, float)):
            return ops.scale(self, 1.0 / float(other))
        return ops.div(self, other)

    def __neg__(self) -> "Tensor":
        from . import ops

        return ops.scale(self, -1.0)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        from . import ops

        return ops.matmul(self, other)

    def __getitem__(self, index: Any) -> "Tensor":
        from . import ops

        return ops.getitem(self, index)

    def reshape(self, *shape: int) -> "Tensor":
        from . import ops

        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes: int) -> "Tensor":
        from . import ops

        return ops.transpose(self, axes)

    def sum(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> "Tensor":
        from . import ops

        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> "Tensor":
        from . import ops

        return ops.mean(self, axis=axis, keepdims=keepdims)


def as_tensor(x: Any, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(x, dtype=dtype)


class Function:
    """A differentiable primitive.

    Subclasses implement `forward(*arrays, **attrs) -> array` and `backward(grad) -> tuple`
    of per-input gradients (None where an input needs none). State needed by backward is
    saved on the instance during forward and released once backward has run.
    """

    name = "function"

    def __init__(self) -> None:
        self.inputs: tuple[Tensor, ...] = ()
        self.attrs: dict[str, Any] = {}
        self.seq = -1
        self.out_shape: tuple[int, ...] = ()
        self.consumed = False
        self._grad_out: np.ndarray | None = None

    def forward(self, *arrays: np.ndarray, **attrs: Any) -> np.ndarray:
        raise NotImplementedError(f"{self.name}: forward not implemented")

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        raise NotImplementedError(f"{self.name}: backward not implemented")

    def needs(self, i: int) -> bool:
        return self.inputs[i].requires_grad

    @classmethod
    def apply(cls, *inputs: Any, **attrs: Any) -> Tensor:
        like = next((x for x in inputs if isinstance(x, Tensor)), None)
        tensors = tuple(as_tensor(x, like) for x in inputs)
        fn = cls()
        fn.inputs = tensors
        fn.attrs = attrs
        out = fn.forward(*(t.data for t in tensors), **attrs)
        out = np.asarray(out)
        if not np.all(np.isfinite(out)):
            raise NonFiniteError(f"{cls.name}: non-finite values in forward output (shape {out.shape})")
        requires = is_grad_enabled() and any(t.requires_grad for t in tensors)
        result = Tensor._from_op(out, requires)
        fn.out_shape = out.shape
        if requires:
            fn.seq = next(_seq)
            result.creator = fn
            for tape in _active_tapes():
                tape._record(fn)
        return result

    def release(self) -> None:
        keep = {"inputs", "attrs", "seq", "out_shape", "consumed", "_grad_out"}
        for k in [k for k in self.__dict__ if k not in keep]:
            del self.__dict__[k]
        self.consumed = True
        self._grad_out = None


class Tape:
    """Ordered record of executed primitives.

    Used as a context manager it records every primitive evaluated while active;
    `Tape.collect(output)` rebuilds the record for the graph that produced `output`.
    Records are ordered by execution, so walking them backwards is a valid reverse
    topological order.
    """

    def __init__(self, nodes: list[Function] | None = None):
        self.nodes: list[Function] = list(nodes or [])

    def __enter__(self) -> "Tape":
        _active_tapes().append(self)
        return self

    def __exit__(self, *exc: Any) -> None:
        _active_tapes().remove(self)

    def _record(self, fn: Function) -> None:
        self.nodes.append(fn)

    def __len__(self) -> int:
        return len(self.nodes)

    def primitives(self) -> list[str]:
        return [fn.name for fn in self.nodes]

    @staticmethod
    def collect(output: Tensor) -> "Tape":
        seen: set[int] = set()
        nodes: list[Function] = []
        stack = [output.creator] if output.creator is not None else []
        while stack:
            fn = stack.pop()
            if id(fn) in seen:
                continue
            seen.add(id(fn))
            if fn.consumed:
                raise TapeError(f"tape already consumed at primitive {fn.name!r}")
            nodes.append(fn)
            for t in fn.inputs:
                if t.creator is not None:
                    stack.append(t.creator)
        nodes.sort(key=lambda f: f.seq)
        return Tape(nodes)

    def run_backward(self, output: Tensor, grad: np.ndarray) -> None:
        if output.creator is None:
            return
        output.creator._grad_out = grad
        for fn in reversed(self.nodes):
            g = fn._grad_out
            if g is None:
                fn.release()
                continue
            in_grads = fn.backward(g)
            for t, gi in zip(fn.inputs, in_grads):
                if gi is None or not t.requires_grad:
                    continue
                gi = np.asarray(gi, dtype=t.dtype)
                if gi.shape != t.shape:
                    raise TapeError(f"{fn.name}: gradient shape {gi.shape} does not match input {t.shape}")
                if t.creator is not None:
                    prev = t.creator._grad_out
                    t.creator._grad_out = gi if prev is None else prev + gi
                else:
                    t.grad = gi.copy() if t.grad is None else t.grad + gi
            fn.release()


def backward(output: Tensor, grad: np.ndarray | None = None) -> Tape:
    """Reverse-mode sweep from `output`; gradients accumulate additively into leaf `.grad`."""
    if grad is None:
        if output.size != 1:
            raise TapeError(f"backward needs a scalar output, got shape {output.shape}")
        grad = np.ones(output.shape, dtype=output.dtype)
    if output.creator is None:
        if output.requires_grad:
            output.grad = grad.copy() if output.grad is None else output.grad + grad
        return Tape()
    if output.creator.consumed:
        raise TapeError("tape already consumed; rebuild the graph before calling backward again")
    tape = Tape.collect(output)
    tape.run_backward(output, np.asarray(grad, dtype=output.dtype))
    return tape
