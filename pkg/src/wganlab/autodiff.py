"""Tape-based reverse-mode autodiff over small dense float64 arrays.

Values are plain ``numpy.ndarray`` objects and are never mutated once on a
tape (some are views of their parents). Every primitive evaluates eagerly
and appends a :class:`Node` to a :class:`Tape`. The backward pass is written
in terms of the same primitives, so with ``create_graph=True`` the gradients
are ordinary nodes on the tape and can be differentiated again. That is what
makes gradient-norm penalties trainable.

Broadcasting is deliberately narrow: elementwise binary ops accept equal
shapes or a 0-d scalar against any shape. Anything wider goes through the
explicit ``broadcast`` primitive.
"""

from __future__ import annotations

import builtins
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "NORM_EPS",
    "AutodiffError",
    "Node",
    "Tape",
    "as_tensor",
    "input",
    "constant",
    "apply_primitive",
    "grad",
    "check_gradient",
    "add",
    "sub",
    "mul",
    "div",
    "matmul",
    "relu",
    "tanh",
    "square",
    "sqrt",
    "sum",
    "mean",
    "max_with_scalar",
    "broadcast",
    "reshape",
    "transpose",
    "slice_rows",
    "pad_rows",
    "concat_rows",
    "l2norm_rows",
]

# Smoothing inside the row norm; keeps d||x||/dx finite at x = 0.
NORM_EPS = 1e-12


class AutodiffError(ValueError):
    """Raised for shape errors, non-finite values and malformed grad calls."""


def as_tensor(value, what: str = "value") -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise AutodiffError(f"{what} contains non-finite entries (shape {arr.shape})")
    return arr


class Tape:
    """Append-only node list. Node ids are indices into ``nodes``."""

    def __init__(self):
        self.nodes: list[Node] = []

    def __len__(self):
        return len(self.nodes)

    def _append(self, op, value, parents, requires_grad, attrs=None) -> "Node":
        node = Node(self, len(self.nodes), value, op, tuple(parents), requires_grad, attrs or {})
        self.nodes.append(node)
        return node


class Node:
    __slots__ = ("tape", "id", "value", "op", "parents", "requires_grad", "attrs")

    def __init__(self, tape, id, value, op, parents, requires_grad, attrs):
        self.tape = tape
        self.id = id
        self.value = value
        self.op = op
        self.parents = parents
        self.requires_grad = requires_grad
        self.attrs = attrs

    @property
    def shape(self) -> tuple:
        return self.value.shape

    def __repr__(self):
        return f"Node(id={self.id}, op={self.op}, shape={self.shape})"

    def __add__(self, other):
        return add(self, _lift(self.tape, other))

    def __radd__(self, other):
        return add(_lift(self.tape, other), self)

    def __sub__(self, other):
        return sub(self, _lift(self.tape, other))

    def __rsub__(self, other):
        return sub(_lift(self.tape, other), self)

    def __mul__(self, other):
        return mul(self, _lift(self.tape, other))

    def __rmul__(self, other):
        return mul(_lift(self.tape, other), self)

    def __truediv__(self, other):
        return div(self, _lift(self.tape, other))

    def __neg__(self):
        return mul(self, constant(self.tape, -1.0))

    def __matmul__(self, other):
        return matmul(self, other)


def _lift(tape: Tape, x) -> Node:
    if isinstance(x, Node):
        return x
    return constant(tape, x)


def input(tape: Tape, value) -> Node:
    """Differentiable leaf holding a private copy of ``value``. Rejects NaN/Inf."""
    return tape._append("input", as_tensor(value, "input").copy(), (), True)


def constant(tape: Tape, value) -> Node:
    """Leaf that never receives a gradient (masks, literals, detached values)."""
    return tape._append("input", as_tensor(value, "constant"), (), False)


# ---------------------------------------------------------------------------
# forward rules


def _shape_error(op, *nodes):
    shapes = ", ".join(str(list(n.shape)) for n in nodes)
    return AutodiffError(f"{op}: incompatible operand shapes {shapes}")


def _check_elementwise(op, a, b):
    if a.shape != b.shape and a.value.ndim != 0 and b.value.ndim != 0:
        raise _shape_error(op, a, b)


def _all_finite(value: np.ndarray) -> bool:
    # v*0 is 0 for finite v and NaN for NaN/Inf, so one BLAS dot finds any bad entry
    # without allocating a mask
    flat = value.reshape(-1)
    if flat.size < 1024:
        return bool(np.isfinite(flat).all())
    return not np.isnan(np.dot(flat, _zeros(flat.size)))


_ZEROS: dict[int, np.ndarray] = {}


def _zeros(n: int) -> np.ndarray:
    z = _ZEROS.get(n)
    if z is None:
        z = _ZEROS[n] = np.zeros(n)
    return z


def _make(op, value, parents, attrs=None):
    tape = parents[0].tape
    for p in parents[1:]:
        if p.tape is not tape:
            raise AutodiffError(f"{op}: operands live on different tapes")
    if not _all_finite(value):
        raise AutodiffError(
            f"{op}: produced non-finite values from operands "
            + ", ".join(f"#{p.id}({p.op})" for p in parents)
        )
    return tape._append(op, value, parents, any(p.requires_grad for p in parents), attrs)


def add(a: Node, b: Node) -> Node:
    _check_elementwise("add", a, b)
    return _make("add", a.value + b.value, (a, b))


def sub(a: Node, b: Node) -> Node:
    _check_elementwise("sub", a, b)
    return _make("sub", a.value - b.value, (a, b))


def mul(a: Node, b: Node) -> Node:
    _check_elementwise("mul", a, b)
    return _make("mul", a.value * b.value, (a, b))


def div(a: Node, b: Node) -> Node:
    _check_elementwise("div", a, b)
    if np.any(b.value == 0.0):
        raise AutodiffError(f"div: zero in denominator #{b.id}({b.op})")
    return _make("div", a.value / b.value, (a, b))


def matmul(a: Node, b: Node) -> Node:
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise _shape_error("matmul", a, b)
    return _make("matmul", a.value @ b.value, (a, b))


def relu(a: Node) -> Node:
    return _make("relu", np.maximum(a.value, 0.0), (a,))


def tanh(a: Node) -> Node:
    return _make("tanh", np.tanh(a.value), (a,))


def square(a: Node) -> Node:
    return _make("square", a.value * a.value, (a,))


def sqrt(a: Node) -> Node:
    if np.any(a.value <= 0.0):
        raise AutodiffError(f"sqrt: non-positive operand #{a.id}({a.op})")
    return _make("sqrt", np.sqrt(a.value), (a,))


def _check_axis(op, a, axis):
    if axis is not None and not (0 <= axis < a.value.ndim):
        raise AutodiffError(f"{op}: axis {axis} out of range for shape {list(a.shape)}")


def sum(a: Node, axis: int | None = None) -> Node:
    _check_axis("sum", a, axis)
    return _make("sum", np.sum(a.value, axis=axis), (a,), {"axis": axis})


def mean(a: Node, axis: int | None = None) -> Node:
    _check_axis("mean", a, axis)
    return _make("mean", np.mean(a.value, axis=axis), (a,), {"axis": axis})


def max_with_scalar(a: Node, c: float = 0.0) -> Node:
    return _make("max_with_scalar", np.maximum(a.value, c), (a,), {"c": float(c)})


def broadcast(a: Node, shape: Sequence[int]) -> Node:
    """numpy-style expansion of size-1 (or missing leading) axes to ``shape``."""
    shape = tuple(int(s) for s in shape)
    lead = len(shape) - a.value.ndim
    ok = lead >= 0 and all(
        s_in in (1, s_out) for s_in, s_out in zip(a.shape, shape[lead:])
    )
    if not ok:
        raise AutodiffError(f"broadcast: cannot expand {list(a.shape)} to {list(shape)}")
    value = np.broadcast_to(a.value, shape)
    return _make("broadcast", value, (a,), {"shape": shape})


def reshape(a: Node, shape: Sequence[int]) -> Node:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != a.value.size:
        raise AutodiffError(f"reshape: cannot reshape {list(a.shape)} to {list(shape)}")
    return _make("reshape", a.value.reshape(shape), (a,), {"shape": shape})


def transpose(a: Node) -> Node:
    if a.value.ndim != 2:
        raise _shape_error("transpose", a)
    return _make("transpose", a.value.T, (a,))


def slice_rows(a: Node, start: int, stop: int) -> Node:
    n = a.shape[0] if a.value.ndim else 0
    if a.value.ndim == 0 or not (0 <= start < stop <= n):
        raise AutodiffError(f"slice: rows [{start}, {stop}) invalid for shape {list(a.shape)}")
    return _make("slice", a.value[start:stop], (a,), {"start": start, "stop": stop, "n": n})


def pad_rows(a: Node, start: int, total: int) -> Node:
    """Zero-pad ``a`` along axis 0 so it occupies rows [start, start+len) of ``total``."""
    if a.value.ndim == 0 or start < 0 or start + a.shape[0] > total:
        raise AutodiffError(f"pad: cannot place {list(a.shape)} at row {start} of {total}")
    value = np.zeros((total,) + a.shape[1:])
    value[start : start + a.shape[0]] = a.value
    return _make("pad", value, (a,), {"start": start, "total": total})


def concat_rows(parts: Sequence[Node]) -> Node:
    """Row concatenation, expressed with pad + add so it needs no extra rule."""
    total = builtins.sum(p.shape[0] for p in parts)
    out, start = None, 0
    for p in parts:
        piece = pad_rows(p, start, total)
        out = piece if out is None else add(out, piece)
        start += p.shape[0]
    return out


def l2norm_rows(a: Node) -> Node:
    """Row norms sqrt(sum_j a_ij^2 + NORM_EPS) of an [n, d] node, shape [n]."""
    if a.value.ndim != 2:
        raise _shape_error("l2norm_rows", a)
    value = np.sqrt(np.sum(a.value * a.value, axis=1) + NORM_EPS)
    return _make("l2norm_rows", value, (a,))


_PRIMITIVES: dict[str, Callable[..., Node]] = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "matmul": matmul,
    "relu": relu,
    "tanh": tanh,
    "square": square,
    "sqrt": sqrt,
    "sum": sum,
    "mean": mean,
    "max_with_scalar": max_with_scalar,
    "broadcast": broadcast,
    "reshape": reshape,
    "transpose": transpose,
    "slice": slice_rows,
    "pad": pad_rows,
    "l2norm_rows": l2norm_rows,
}


def apply_primitive(tape: Tape, op: str, operands: Sequence[Node], **attrs) -> Node:
    """Dispatch by tag, e.g. ``apply_primitive(tape, "matmul", [a, b])``."""
    try:
        fn = _PRIMITIVES[op]
    except KeyError:
        raise AutodiffError(f"unknown primitive {op!r}") from None
    for node in operands:
        if node.tape is not tape:
            raise AutodiffError(f"{op}: operand #{node.id} is not on this tape")
    return fn(*operands, **attrs)


# ---------------------------------------------------------------------------
# backward rules; every rule is built from primitives so it is differentiable


def _unbroadcast(g: Node, shape: tuple) -> Node:
    # elementwise ops only broadcast a 0-d scalar
    if g.shape == shape:
        return g
    return sum(g)


def _vjp(node: Node, g: Node, which: int, ref: Callable[[Node], Node]) -> Node:
    # ``ref`` maps a forward node to something usable on g's tape
    op = node.op
    tape = g.tape
    parents = node.parents
    a = parents[0]
    if op == "add":
        return _unbroadcast(g, parents[which].shape)
    if op == "sub":
        out = g if which == 0 else mul(g, constant(tape, -1.0))
        return _unbroadcast(out, parents[which].shape)
    if op == "mul":
        return _unbroadcast(mul(g, ref(parents[1 - which])), parents[which].shape)
    if op == "div":
        b = ref(parents[1])
        if which == 0:
            return _unbroadcast(div(g, b), a.shape)
        # d(a/b)/db = -(a/b)/b
        return _unbroadcast(mul(constant(tape, -1.0), div(mul(g, ref(node)), b)), b.shape)
    if op == "matmul":
        if which == 0:
            return matmul(g, transpose(ref(parents[1])))
        return matmul(transpose(ref(a)), g)
    if op == "relu":
        return mul(g, constant(tape, (a.value > 0.0).astype(np.float64)))
    if op == "tanh":
        return mul(g, sub(constant(tape, 1.0), square(ref(node))))
    if op == "square":
        return mul(g, mul(constant(tape, 2.0), ref(a)))
    if op == "sqrt":
        return div(g, mul(constant(tape, 2.0), ref(node)))
    if op == "sum":
        return _expand_reduced(g, a.shape, node.attrs["axis"])
    if op == "mean":
        axis = node.attrs["axis"]
        count = a.value.size if axis is None else a.shape[axis]
        return mul(_expand_reduced(g, a.shape, axis), constant(tape, 1.0 / count))
    if op == "max_with_scalar":
        # strict inequality: the subgradient at the kink is 0
        return mul(g, constant(tape, (a.value > node.attrs["c"]).astype(np.float64)))
    if op == "broadcast":
        return _sum_to(g, a.shape)
    if op == "reshape":
        return reshape(g, a.shape)
    if op == "transpose":
        return transpose(g)
    if op == "slice":
        return pad_rows(g, node.attrs["start"], node.attrs["n"])
    if op == "pad":
        start = node.attrs["start"]
        return slice_rows(g, start, start + a.shape[0])
    if op == "l2norm_rows":
        n, d = a.shape
        scale = reshape(div(g, ref(node)), (n, 1))
        return mul(broadcast(scale, (n, d)), ref(a))
    raise AutodiffError(f"no backward rule for {op!r}")


def _expand_reduced(g: Node, in_shape: tuple, axis) -> Node:
    if axis is None:
        return broadcast(reshape(g, (1,) * len(in_shape)) if in_shape else g, in_shape)
    kept = list(in_shape)
    kept[axis] = 1
    return broadcast(reshape(g, kept), in_shape)


def _sum_to(g: Node, shape: tuple) -> Node:
    lead = g.value.ndim - len(shape)
    out = g
    for _ in range(lead):
        out = sum(out, axis=0)
    axes = [i for i, s in enumerate(shape) if s == 1 and out.shape[i] != 1]
    for i in reversed(axes):
        out = sum(out, axis=i)
    if out.shape != shape:
        out = reshape(out, shape)
    return out


def grad(tape: Tape, output: Node, wrt: Sequence[Node], create_graph: bool = False) -> list[Node]:
    """Gradients of scalar ``output`` with respect to each node in ``wrt``.

    With ``create_graph`` the returned nodes are built on ``tape`` from
    differentiable primitives; otherwise they are detached constants on
    ``tape``. A ``wrt`` node that does not influence ``output`` gets zeros.
    """
    if output.tape is not tape:
        raise AutodiffError("grad: output is not on this tape")
    if output.value.size != 1 or output.value.ndim > 1:
        raise AutodiffError(f"grad: output must be scalar, got shape {list(output.shape)}")
    for w in wrt:
        if w.tape is not tape or w.id >= len(tape.nodes) or tape.nodes[w.id] is not w:
            raise AutodiffError(f"grad: wrt node {w!r} is not on this tape")

    if not wrt:
        return []
    nodes = tape.nodes
    lo = min(w.id for w in wrt)
    # forward pass: which nodes depend on some wrt node
    depends = {w.id for w in wrt}
    for i in range(lo, output.id + 1):
        if i in depends:
            continue
        nd = nodes[i]
        if any(p.id in depends for p in nd.parents):
            depends.add(i)

    if create_graph:
        work = tape

        def ref(nd: Node) -> Node:
            return nd

    else:
        # detached backward on a scratch tape; forward values enter as constants
        work = Tape()
        mirrored: dict[int, Node] = {}

        def ref(nd: Node) -> Node:
            if nd.id not in mirrored:
                # already validated on the forward tape
                mirrored[nd.id] = work._append("input", nd.value, (), False)
            return mirrored[nd.id]

    grads: dict[int, Node] = {}
    if output.id in depends:
        grads[output.id] = constant(work, np.ones_like(output.value))

    for i in range(output.id, lo - 1, -1):
        g = grads.get(i)
        if g is None:
            continue
        nd = nodes[i]
        for k, p in enumerate(nd.parents):
            if p.id not in depends:
                continue
            contrib = _vjp(nd, g, k, ref)
            prev = grads.get(p.id)
            grads[p.id] = contrib if prev is None else add(prev, contrib)

    result = []
    for w in wrt:
        g = grads.get(w.id)
        if g is None:
            result.append(constant(tape, np.zeros_like(w.value)))
        elif create_graph:
            result.append(g)
        else:
            result.append(constant(tape, g.value))
    return result


def check_gradient(
    f: Callable[[Tape, Node], Node], x, h: float = 1e-4
) -> float:
    """Max componentwise relative error of reverse mode vs central differences.

    ``f`` builds a scalar on the tape it is given. The relative error uses the
    denominator ``max(|analytic|, |numeric|, 1e-8)``. Non-finite values
    anywhere report ``inf``.
    """
    if h <= 0:
        raise AutodiffError("check_gradient: step must be positive")
    x = np.array(x, dtype=np.float64)
    try:
        tape = Tape()
        xn = input(tape, x)
        (g,) = grad(tape, f(tape, xn), [xn])
        analytic = g.value

        def value_at(v):
            t = Tape()
            return float(np.reshape(f(t, constant(t, v)).value, ()))

        numeric = np.zeros_like(x)
        flat = numeric.reshape(-1)
        for k in range(x.size):
            xp = x.copy().reshape(-1)
            xm = x.copy().reshape(-1)
            xp[k] += h
            xm[k] -= h
            flat[k] = (value_at(xp.reshape(x.shape)) - value_at(xm.reshape(x.shape))) / (2 * h)
    except AutodiffError:
        return float("inf")
    if not (np.all(np.isfinite(analytic)) and np.all(np.isfinite(numeric))):
        return float("inf")
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom)) if x.size else 0.0
