"""Reverse-mode automatic differentiation over dense 2-D float64 arrays.

A :class:`Tape` records every primitive applied to tape-attached tensors.
Calling :meth:`Tape.backward` on a scalar result walks the recording once in
reverse and accumulates gradients into the :class:`Parameter` objects that
were watched on that tape. Tensors that never touch a tape behave as plain
constants, so the same primitives serve both training and inference code.
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np


class Tensor:
    """A 2-D float64 matrix, optionally attached to a tape node.

    Scalars become 1x1 and vectors become 1xK row matrices, so every value
    flowing through the graph has a well-defined (rows, cols).
    """

    __slots__ = ("values", "tape", "node")

    def __init__(self, values, tape: Optional["Tape"] = None, node: Optional[int] = None):
        v = np.asarray(values, dtype=np.float64)
        if v.ndim == 0:
            v = v.reshape(1, 1)
        elif v.ndim == 1:
            v = v.reshape(1, -1)
        if v.ndim != 2:
            raise ValueError(f"Tensor must be 2-D, got shape {v.shape}")
        self.values = v
        self.tape = tape
        self.node = node

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    def item(self) -> float:
        if self.values.shape != (1, 1):
            raise ValueError(f"item() needs a 1x1 tensor, got {self.values.shape}")
        return float(self.values[0, 0])

    def __repr__(self) -> str:
        attached = "" if self.tape is None else f", node={self.node}"
        return f"Tensor(shape={self.values.shape}{attached})"


class Parameter:
    """Trainable weight matrix with gradient and Adam moment buffers."""

    __slots__ = ("name", "values", "grad", "adam_m", "adam_v", "step_count")

    def __init__(self, values, name: str = ""):
        v = np.array(values, dtype=np.float64)
        if v.ndim == 0:
            v = v.reshape(1, 1)
        elif v.ndim == 1:
            v = v.reshape(1, -1)
        if v.ndim != 2:
            raise ValueError(f"Parameter must be 2-D, got shape {v.shape}")
        self.name = name
        self.values = v
        self.grad = np.zeros_like(v)
        self.adam_m = np.zeros_like(v)
        self.adam_v = np.zeros_like(v)
        self.step_count = 0

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def zero_grad(self) -> None:
        self.grad[:] = 0.0

    def __repr__(self) -> str:
        return f"Parameter({self.name or '<unnamed>'}, shape={self.values.shape})"


class Tape:
    """Ordered recording of primitive ops for one reverse pass.

    Ops append in execution order, which is a topological order of the
    graph, so the backward pass is a single reverse sweep that visits each
    recorded op exactly once.
    """

    def __init__(self):
        self._ops: list[tuple[int, tuple[Optional[int], ...], Callable]] = []
        self._next_node = 0
        self._watched: dict[int, Tensor] = {}
        self._param_nodes: list[tuple[int, Parameter]] = []

    def _new_node(self) -> int:
        node = self._next_node
        self._next_node += 1
        return node

    def watch(self, param: Parameter) -> Tensor:
        """Return the leaf tensor for ``param``, creating it on first use."""
        leaf = self._watched.get(id(param))
        if leaf is None:
            leaf = Tensor(param.values, self, self._new_node())
            self._watched[id(param)] = leaf
            self._param_nodes.append((leaf.node, param))
        return leaf

    def constant(self, values) -> Tensor:
        """Wrap ``values`` as a tape-less constant (convenience)."""
        return Tensor(values)

    def __len__(self) -> int:
        return len(self._ops)

    def backward(self, root: Tensor) -> None:
        """Accumulate d(root)/d(param) into every watched parameter's grad."""
        if root.tape is not self or root.node is None:
            raise ValueError("backward root was not computed on this tape")
        if root.values.shape != (1, 1):
            raise ValueError(f"backward root must be scalar, got {root.values.shape}")
        grads: dict[int, np.ndarray] = {root.node: np.ones((1, 1))}
        for out_node, in_nodes, vjp in reversed(self._ops):
            g = grads.pop(out_node, None)
            if g is None:
                continue
            for node, gin in zip(in_nodes, vjp(g)):
                if node is None or gin is None:
                    continue
                acc = grads.get(node)
                grads[node] = gin if acc is None else acc + gin
        for node, param in self._param_nodes:
            g = grads.get(node)
            if g is not None:
                param.grad += g


def _record(parents: tuple[Tensor, ...], out_values: np.ndarray, vjp: Callable) -> Tensor:
    tape = None
    for p in parents:
        if p.tape is not None:
            if tape is None:
                tape = p.tape
            elif tape is not p.tape:
                raise ValueError("operands were recorded on different tapes")
    if tape is None:
        return Tensor(out_values)
    out = Tensor(out_values, tape, tape._new_node())
    tape._ops.append((out.node, tuple(p.node for p in parents), vjp))
    return out


def _check_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.values.shape != b.values.shape:
        raise ValueError(f"{op}: shape mismatch {a.values.shape} vs {b.values.shape}")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    av, bv = a.values, b.values
    if av.shape[1] != bv.shape[0]:
        raise ValueError(f"matmul: inner dims differ, {av.shape} @ {bv.shape}")
    na, nb = a.node is not None, b.node is not None

    def vjp(g):
        return (g @ bv.T if na else None, av.T @ g if nb else None)

    return _record((a, b), av @ bv, vjp)


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "add")

    def vjp(g):
        return (g, g)

    return _record((a, b), a.values + b.values, vjp)


def add_bias(a: Tensor, bias: Tensor) -> Tensor:
    """Add a 1xK bias row to every row of ``a``."""
    av, bv = a.values, bias.values
    if bv.shape[0] != 1 or bv.shape[1] != av.shape[1]:
        raise ValueError(f"add_bias: bias {bv.shape} does not fit {av.shape}")

    def vjp(g):
        return (g, g.sum(axis=0, keepdims=True))

    return _record((a, bias), av + bv, vjp)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "sub")

    def vjp(g):
        return (g, -g)

    return _record((a, b), a.values - b.values, vjp)


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "hadamard")
    av, bv = a.values, b.values
    na, nb = a.node is not None, b.node is not None

    def vjp(g):
        return (g * bv if na else None, g * av if nb else None)

    return _record((a, b), av * bv, vjp)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def vjp(g):
        return (g * c,)

    return _record((a,), a.values * c, vjp)


def sigmoid(a: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-a.values))

    def vjp(g):
        return (g * out * (1.0 - out),)

    return _record((a,), out, vjp)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.values)

    def vjp(g):
        return (g * (1.0 - out * out),)

    return _record((a,), out, vjp)


def relu(a: Tensor) -> Tensor:
    av = a.values

    def vjp(g):
        return (g * (av > 0.0),)

    return _record((a,), np.maximum(av, 0.0), vjp)


def log_eps(a: Tensor, eps: float = 1e-12) -> Tensor:
    """Elementwise ln(a + eps); eps keeps exact zeros finite."""
    shifted = a.values + eps

    def vjp(g):
        return (g / shifted,)

    return _record((a,), np.log(shifted), vjp)


def absolute(a: Tensor) -> Tensor:
    av = a.values

    def vjp(g):
        return (g * np.sign(av),)

    return _record((a,), np.abs(av), vjp)


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    av, bv = a.values, b.values
    if av.shape[0] != bv.shape[0]:
        raise ValueError(f"concat_cols: row counts differ, {av.shape} vs {bv.shape}")
    split = av.shape[1]

    def vjp(g):
        return (g[:, :split], g[:, split:])

    return _record((a, b), np.hstack((av, bv)), vjp)


def concat_rows(*tensors: Tensor) -> Tensor:
    if not tensors:
        raise ValueError("concat_rows: need at least one tensor")
    cols = tensors[0].cols
    for t in tensors:
        if t.cols != cols:
            raise ValueError("concat_rows: column counts differ")
    counts = [t.rows for t in tensors]
    offsets = np.cumsum([0] + counts)

    def vjp(g):
        return tuple(g[offsets[i]:offsets[i + 1]] for i in range(len(counts)))

    return _record(tensors, np.vstack([t.values for t in tensors]), vjp)


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    av = a.values
    if not (0 <= start <= stop <= av.shape[0]):
        raise ValueError(f"slice_rows: [{start}:{stop}] out of range for {av.shape}")

    def vjp(g):
        full = np.zeros_like(av)
        full[start:stop] = g
        return (full,)

    return _record((a,), av[start:stop], vjp)


def reverse_rows(a: Tensor) -> Tensor:
    def vjp(g):
        return (g[::-1],)

    return _record((a,), np.ascontiguousarray(a.values[::-1]), vjp)


def sum_all(a: Tensor) -> Tensor:
    shape = a.values.shape

    def vjp(g):
        return (np.full(shape, g[0, 0]),)

    return _record((a,), np.array([[a.values.sum()]]), vjp)
