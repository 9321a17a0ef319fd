"""Eager tape-based reverse-mode differentiation.

Every ``Tensor`` produced by :func:`record` while gradient recording is
enabled keeps its op tag, parents and attributes. Node ids come from a
monotone counter, so sorting by id is a valid tape order.

Backward rules are written with recorded ops. ``backward(create_graph=True)``
therefore leaves the adjoint computation on the tape, and a scalar built from
the returned gradients can be differentiated again.
"""

from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import ContractError, DimensionError

_ids = itertools.count()
_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def grad_mode(enabled: bool):
    prev = is_grad_enabled()
    _state.enabled = enabled
    try:
        yield
    finally:
        _state.enabled = prev


def no_grad():
    return grad_mode(False)


class Op:
    """An op kind: a numpy forward plus a backward built from tape ops.

    ``forward`` returns ``(value, saved)``. ``backward`` receives the output
    node, the upstream gradient (a Tensor) and a per-parent ``needs`` mask,
    and returns one Tensor or ``None`` per parent.
    """

    name: str = ""
    arity: int = 1

    def forward(self, *values: np.ndarray, **attrs):
        raise NotImplementedError

    def backward(self, node: "Tensor", g: "Tensor", needs: Sequence[bool]):
        raise NotImplementedError


OPS: dict[str, Op] = {}


def register(cls):
    op = cls()
    OPS[op.name] = op
    return cls


class Tensor:
    __slots__ = ("data", "requires_grad", "op", "parents", "attrs", "saved", "id", "name")

    __array_ufunc__ = None  # ndarray <op> Tensor defers to the reflected Tensor method

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        arr = np.asarray(data, dtype=dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self.op: str | None = None
        self.parents: tuple[Tensor, ...] = ()
        self.attrs: dict = {}
        self.saved = None
        self.id = next(_ids)
        self.name = name

    # -- introspection -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self.op is None

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        tag = self.op or ("leaf" if self.requires_grad else "const")
        return f"Tensor(shape={self.shape}, op={tag}, id={self.id})"

    def __len__(self):
        return len(self.data)

    # -- arithmetic ----------------------------------------------------
    def __add__(self, other):
        if _is_scalar(other):
            return record("add-scalar", [self], c=float(other))
        return record("add", [self, other])

    def __radd__(self, other):
        return self.__add__(other)

    def __sub__(self, other):
        if _is_scalar(other):
            return record("add-scalar", [self], c=-float(other))
        return record("sub", [self, other])

    def __rsub__(self, other):
        neg = record("scalar-mul", [self], c=-1.0)
        if _is_scalar(other):
            return record("add-scalar", [neg], c=float(other))
        return record("add", [other, neg])

    def __mul__(self, other):
        if _is_scalar(other):
            return record("scalar-mul", [self], c=float(other))
        return record("mul", [self, other])

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        if _is_scalar(other):
            return record("scalar-mul", [self], c=1.0 / float(other))
        return record("div", [self, other], eps=0.0)

    def __neg__(self):
        return record("scalar-mul", [self], c=-1.0)

    def __matmul__(self, other):
        return record("matmul", [self, other])

    def __rmatmul__(self, other):
        return record("matmul", [other, self])

    # -- methods -------------------------------------------------------
    def sum(self, axis=None, keepdims: bool = False):
        return record("sum", [self], axis=_norm_axis(axis, self.ndim), keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return record("mean", [self], axis=_norm_axis(axis, self.ndim), keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return record("reshape", [self], shape=tuple(shape))

    def transpose(self, *axes):
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        elif len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return record("transpose", [self], axes=tuple(axes))

    @property
    def T(self):
        return self.transpose()

    def broadcast_to(self, shape):
        return record("broadcast-to", [self], shape=tuple(shape))

    def relu(self):
        return record("relu", [self])

    def exp(self):
        return record("exp", [self])

    def log(self):
        return record("log", [self])

    def square(self):
        return record("square", [self])

    def sqrt(self):
        return record("sqrt", [self])


def _is_scalar(x) -> bool:
    return isinstance(x, (int, float, np.integer, np.floating)) and not isinstance(x, bool)


def _norm_axis(axis, ndim):
    if axis is None:
        return None
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def record(kind: str, parents: Iterable, **attrs) -> Tensor:
    """Evaluate op ``kind`` eagerly and append the result to the tape."""
    op = OPS.get(kind)
    if op is None:
        raise ContractError(f"unknown op kind {kind!r}")
    parents = tuple(as_tensor(p) for p in parents)
    if len(parents) != op.arity:
        raise ContractError(f"op {kind!r} takes {op.arity} parent(s), got {len(parents)}")
    try:
        value, saved = op.forward(*(p.data for p in parents), **attrs)
    except DimensionError:
        raise
    except ValueError as exc:
        shapes = [p.shape for p in parents]
        raise DimensionError(f"op {kind!r} rejected shapes {shapes}: {exc}") from exc
    track = is_grad_enabled() and any(p.requires_grad for p in parents)
    out = Tensor(value, requires_grad=track)
    if track:
        out.op = kind
        out.parents = parents
        out.attrs = attrs
        out.saved = saved
    return out


class GradientMap(dict):
    """Leaf tensor -> gradient tensor. Leaves that were not reached get zeros."""

    def __missing__(self, leaf: Tensor) -> Tensor:
        return Tensor(np.zeros_like(leaf.data))

    def arrays(self, leaves: Iterable[Tensor]) -> list[np.ndarray]:
        return [self[leaf].data for leaf in leaves]


def _topo(root: Tensor) -> list[Tensor]:
    seen: dict[int, Tensor] = {}
    stack = [root]
    while stack:
        node = stack.pop()
        if node.id in seen or not node.requires_grad:
            continue
        seen[node.id] = node
        stack.extend(node.parents)
    return sorted(seen.values(), key=lambda t: t.id)


def backward(root: Tensor, create_graph: bool = False, inputs: Sequence[Tensor] | None = None) -> GradientMap:
    """Gradients of scalar ``root`` with respect to its ``requires_grad`` leaves.

    With ``inputs`` only those leaves are returned and parts of the graph
    that cannot reach them are skipped.
    """
    if root.data.size != 1:
        raise ContractError(f"backward needs a scalar root, got shape {root.shape}")
    result = GradientMap()
    if not root.requires_grad:
        return result
    order = _topo(root)
    if inputs is not None:
        wanted = {t.id for t in inputs}
        relevant: set[int] = set()
        for node in order:
            if node.id in wanted or any(p.id in relevant for p in node.parents):
                relevant.add(node.id)
    else:
        wanted = None
        relevant = {t.id for t in order}

    grads: dict[int, Tensor] = {root.id: Tensor(np.ones_like(root.data))}
    with grad_mode(create_graph):
        for node in reversed(order):
            g = grads.pop(node.id, None)
            if g is None or node.id not in relevant:
                continue
            if node.is_leaf:
                if wanted is None or node.id in wanted:
                    result[node] = g
                continue
            needs = [p.requires_grad and p.id in relevant for p in node.parents]
            if not any(needs):
                continue
            pgrads = OPS[node.op].backward(node, g, needs)
            for parent, pg, need in zip(node.parents, pgrads, needs):
                if not need or pg is None:
                    continue
                if pg.shape != parent.shape:
                    raise DimensionError(
                        f"backward of {node.op!r} produced {pg.shape} for parent {parent.shape}"
                    )
                prev = grads.get(parent.id)
                grads[parent.id] = pg if prev is None else prev + pg
    return result


def grad(root: Tensor, leaves: Sequence[Tensor], create_graph: bool = False) -> list[Tensor]:
    gm = backward(root, create_graph=create_graph, inputs=leaves)
    return [gm[leaf] for leaf in leaves]


def grad_input(root: Tensor, input_leaf: Tensor, create_graph: bool = False) -> Tensor:
    """Gradient of ``root`` with respect to one leaf (typically the image)."""
    return grad(root, [input_leaf], create_graph=create_graph)[0]


def numeric_grad(f: Callable[[np.ndarray], float], x: np.ndarray, step: float = 1e-4) -> np.ndarray:
    """Central finite differences of a scalar function, for checks."""
    x = np.array(x, dtype=np.float64)
    out = np.zeros_like(x)
    flat = x.reshape(-1)
    of = out.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + step
        fp = f(x)
        flat[i] = old - step
        fm = f(x)
        flat[i] = old
        of[i] = (fp - fm) / (2 * step)
    return out
