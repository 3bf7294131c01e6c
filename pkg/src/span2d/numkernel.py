"""Dense float64 kernels and a minimal reverse-mode gradient tape.

Everything in this package computes in 64-bit floats on plain numpy
arrays. A 2-D parameter or activation matrix is just a C-ordered
``np.ndarray`` of shape (rows, cols); ``tensor2`` validates that
convention where inputs cross an API boundary.

The same forward code serves two execution modes:

* raw mode - arguments are numpy arrays, results are numpy arrays.
  Used for inference and as the evaluation path of finite-difference
  gradient checks.
* taped mode - arguments are ``Node`` objects created on a ``GradTape``.
  Every operation records how to push gradients back to its inputs;
  ``grad_of`` replays the tape in reverse and returns a gradient for
  every registered parameter.

The elementwise helpers (``gelu_approx``, ``talu``, ``logistic``, ...)
dispatch on their argument type so model code is written once.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

__all__ = [
    "tensor2",
    "gelu_approx",
    "talu",
    "logistic",
    "affine",
    "GradTape",
    "Node",
    "grad_of",
    "matmul",
    "matvec",
    "dot",
    "transpose",
    "take_row",
    "slice_cols",
    "concat_cols",
    "gather_rows",
    "col_plus_row",
    "softmax_rows",
    "mean_rows",
    "sum_all",
    "mean_all",
    "log",
    "clip",
    "power",
    "dropout",
]


def tensor2(data, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    """Coerce ``data`` to a 2-D float64 array and validate its shape."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={arr.ndim}")
    if rows is not None and arr.shape != (rows, cols):
        raise ValueError(f"expected shape ({rows}, {cols}), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix contains non-finite values")
    return arr


# ---------------------------------------------------------------------------
# elementwise activations (raw numpy implementations + derivatives)
# ---------------------------------------------------------------------------


def _gelu_raw(x: np.ndarray) -> np.ndarray:
    inner = 0.8 * x + 0.036 * x**3
    return 0.5 * x * (1.0 + np.tanh(inner))


def _logistic_raw(x: np.ndarray) -> np.ndarray:
    # Split by sign so exp() never overflows.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _talu_raw(x: np.ndarray) -> np.ndarray:
    # e^x / (e^x + e^-x) == logistic(2x); the logistic form stays finite
    # for the whole float64 range while the quotient overflows near 710.
    return _logistic_raw(2.0 * x)


def gelu_approx(x):
    """Tanh-form GELU: 0.5*x*(1 + tanh(0.8*x + 0.036*x^3)), elementwise."""
    if isinstance(x, Node):
        xd = x.data
        t = np.tanh(0.8 * xd + 0.036 * xd**3)

        def back(g, xd=xd, t=t):
            return g * (0.5 * (1.0 + t) + 0.5 * xd * (1.0 - t * t) * (0.8 + 0.108 * xd * xd))

        return x.tape._record(0.5 * xd * (1.0 + t), [(x, back)])
    arr = np.asarray(x, dtype=np.float64)
    y = _gelu_raw(arr)
    return float(y) if arr.ndim == 0 else y


def talu(x):
    """Normalizer e^x / (e^x + e^-x) in (0, 1), elementwise."""
    if isinstance(x, Node):
        s = _talu_raw(x.data)
        return x.tape._record(s, [(x, lambda g: g * (2.0 * s * (1.0 - s)))])
    arr = np.asarray(x, dtype=np.float64)
    y = _talu_raw(arr)
    return float(y) if arr.ndim == 0 else y


def logistic(x):
    """Standard logistic 1 / (1 + e^-x), elementwise and overflow-safe."""
    if isinstance(x, Node):
        s = _logistic_raw(x.data)
        return x.tape._record(s, [(x, lambda g: g * (s * (1.0 - s)))])
    arr = np.asarray(x, dtype=np.float64)
    y = _logistic_raw(arr)
    return float(y) if arr.ndim == 0 else y


# ---------------------------------------------------------------------------
# gradient tape
# ---------------------------------------------------------------------------


class Node:
    """A value on a :class:`GradTape`.

    Supports the arithmetic operators plus the named kernels below; each
    operation appends a new node to the owning tape. ``grad`` is filled
    in by ``grad_of``.
    """

    __slots__ = ("tape", "data", "grad", "links")

    # Keep numpy from elementwise-wrapping Nodes into object arrays;
    # mixed ndarray/Node arithmetic must fall through to the reflected
    # operators below.
    __array_ufunc__ = None

    def __init__(self, tape: "GradTape", data: np.ndarray, links):
        self.tape = tape
        self.data = data
        self.grad: np.ndarray | None = None
        self.links = links  # list of (parent Node, vjp callable)

    @property
    def shape(self):
        return self.data.shape

    def _lift(self, other) -> "Node":
        if isinstance(other, Node):
            if other.tape is not self.tape:
                raise ValueError("cannot combine nodes from different tapes")
            return other
        return self.tape.constant(other)

    def __add__(self, other):
        o = self._lift(other)
        return self.tape._record(
            self.data + o.data,
            [
                (self, lambda g: _unbroadcast(g, self.data.shape)),
                (o, lambda g: _unbroadcast(g, o.data.shape)),
            ],
        )

    __radd__ = __add__

    def __neg__(self):
        return self.tape._record(-self.data, [(self, lambda g: -g)])

    def __sub__(self, other):
        o = self._lift(other)
        return self.tape._record(
            self.data - o.data,
            [
                (self, lambda g: _unbroadcast(g, self.data.shape)),
                (o, lambda g: _unbroadcast(-g, o.data.shape)),
            ],
        )

    def __rsub__(self, other):
        o = self._lift(other)
        return o.__sub__(self)

    def __mul__(self, other):
        o = self._lift(other)
        a, b = self.data, o.data
        return self.tape._record(
            a * b,
            [
                (self, lambda g: _unbroadcast(g * b, a.shape)),
                (o, lambda g: _unbroadcast(g * a, b.shape)),
            ],
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Node):
            raise TypeError("node/node division not supported; multiply by power(x, -1)")
        c = float(other)
        return self.tape._record(self.data / c, [(self, lambda g: g / c)])

    def __repr__(self):
        return f"Node(shape={self.data.shape})"


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


class GradTape:
    """Records operations so that gradients can be replayed in reverse.

    Parameters are registered with :meth:`param`; after building a scalar
    loss out of taped operations, ``grad_of(tape, loss)`` returns the
    gradient for every registered parameter (zero for parameters the loss
    never touched). A tape is single-writer; distinct tapes are
    independent.
    """

    def __init__(self):
        self._nodes: list[Node] = []
        self._params: dict[str, Node] = {}

    def _record(self, data: np.ndarray, links) -> Node:
        node = Node(self, np.asarray(data, dtype=np.float64), links)
        self._nodes.append(node)
        return node

    def param(self, name: str, value: np.ndarray) -> Node:
        if name in self._params:
            raise ValueError(f"parameter {name!r} already registered")
        node = self._record(np.asarray(value, dtype=np.float64), [])
        self._params[name] = node
        return node

    def constant(self, value) -> Node:
        return self._record(np.asarray(value, dtype=np.float64), [])

    @property
    def num_nodes(self) -> int:
        return len(self._nodes)


def grad_of(tape: GradTape, loss: Node) -> dict[str, np.ndarray]:
    """Reverse-replay ``tape`` from ``loss`` and collect parameter grads."""
    if not isinstance(loss, Node) or loss.tape is not tape:
        raise ValueError("loss was not produced on this tape")
    if loss.data.ndim != 0:
        raise ValueError(f"loss must be scalar, got shape {loss.data.shape}")
    for node in tape._nodes:
        node.grad = None
    loss.grad = np.ones((), dtype=np.float64)
    # Reverse creation order is a valid topological order, so each node's
    # gradient is complete by the time it is visited. Gradients are never
    # mutated in place, so a first contribution may be kept by reference.
    for node in reversed(tape._nodes):
        g = node.grad
        if g is None:
            continue
        for parent, vjp in node.links:
            contrib = vjp(g)
            parent.grad = contrib if parent.grad is None else parent.grad + contrib
    out = {}
    for name, p in tape._params.items():
        out[name] = np.zeros_like(p.data) if p.grad is None else np.asarray(p.grad)
    return out


# ---------------------------------------------------------------------------
# linear algebra kernels (raw / taped dispatch)
# ---------------------------------------------------------------------------


def _is_node(x) -> bool:
    return isinstance(x, Node)


def _tape_of(*xs) -> GradTape:
    for x in xs:
        if _is_node(x):
            return x.tape
    raise TypeError("no tape among arguments")


def _as_node(tape: GradTape, x) -> Node:
    return x if _is_node(x) else tape.constant(x)


def affine(X, W, b):
    """Row-wise linear map X @ W.T + b for X (l, d_in), W (d_out, d_in).

    ``b`` broadcasts across rows. Rejects mismatched inner dimensions
    with both shapes in the message.
    """
    xs = X.data.shape if _is_node(X) else np.shape(X)
    ws = W.data.shape if _is_node(W) else np.shape(W)
    if len(xs) != 2 or len(ws) != 2 or xs[1] != ws[1]:
        raise ValueError(f"affine shape mismatch: X has shape {xs}, W has shape {ws}")
    bs = b.data.shape if _is_node(b) else np.shape(b)
    if bs != (ws[0],):
        raise ValueError(f"affine bias mismatch: W has shape {ws}, b has shape {bs}")
    return matmul(X, transpose(W)) + b


def matmul(a, b):
    """2-D matrix product."""
    if _is_node(a) or _is_node(b):
        tape = _tape_of(a, b)
        an, bn = _as_node(tape, a), _as_node(tape, b)
        ad, bd = an.data, bn.data
        return tape._record(
            ad @ bd,
            [(an, lambda g: g @ bd.T), (bn, lambda g: ad.T @ g)],
        )
    return a @ b


def matvec(a, v):
    """Matrix (l, d) times vector (d,) -> vector (l,)."""
    if _is_node(a) or _is_node(v):
        tape = _tape_of(a, v)
        an, vn = _as_node(tape, a), _as_node(tape, v)
        ad, vd = an.data, vn.data
        return tape._record(
            ad @ vd,
            [(an, lambda g: np.outer(g, vd)), (vn, lambda g: ad.T @ g)],
        )
    return a @ v


def dot(u, v):
    """Vector dot product -> scalar."""
    if _is_node(u) or _is_node(v):
        tape = _tape_of(u, v)
        un, vn = _as_node(tape, u), _as_node(tape, v)
        ud, vd = un.data, vn.data
        return tape._record(
            ud @ vd,
            [(un, lambda g: g * vd), (vn, lambda g: g * ud)],
        )
    return u @ v


def transpose(a):
    if _is_node(a):
        return a.tape._record(a.data.T, [(a, lambda g: g.T)])
    return a.T


def take_row(a, i: int):
    """Extract row ``i`` of a matrix as a vector."""
    if _is_node(a):
        shape = a.data.shape

        def back(g, i=i, shape=shape):
            out = np.zeros(shape)
            out[i] = g
            return out

        return a.tape._record(a.data[i].copy(), [(a, back)])
    return a[i]


def slice_cols(a, j0: int, j1: int):
    if _is_node(a):
        shape = a.data.shape

        def back(g, j0=j0, j1=j1, shape=shape):
            out = np.zeros(shape)
            out[:, j0:j1] = g
            return out

        return a.tape._record(a.data[:, j0:j1].copy(), [(a, back)])
    return a[:, j0:j1]


def concat_cols(parts: Sequence):
    """Concatenate matrices with equal row counts along columns."""
    if any(_is_node(p) for p in parts):
        tape = _tape_of(*parts)
        nodes = [_as_node(tape, p) for p in parts]
        widths = [n.data.shape[1] for n in nodes]
        offsets = np.cumsum([0] + widths)
        links = []
        for k, n in enumerate(nodes):
            j0, j1 = int(offsets[k]), int(offsets[k + 1])
            links.append((n, lambda g, j0=j0, j1=j1: g[:, j0:j1]))
        return tape._record(np.concatenate([n.data for n in nodes], axis=1), links)
    return np.concatenate(list(parts), axis=1)


def gather_rows(table, ids: np.ndarray):
    """Row lookup table[ids]; backward scatters into the table."""
    ids = np.asarray(ids, dtype=np.intp)
    if _is_node(table):
        shape = table.data.shape

        def back(g, ids=ids, shape=shape):
            out = np.zeros(shape)
            np.add.at(out, ids, g)
            return out

        return table.tape._record(table.data[ids], [(table, back)])
    return table[ids]


def col_plus_row(u, v):
    """Broadcast sum u[:, None] + v[None, :] of two vectors -> matrix."""
    if _is_node(u) or _is_node(v):
        tape = _tape_of(u, v)
        un, vn = _as_node(tape, u), _as_node(tape, v)
        return tape._record(
            un.data[:, None] + vn.data[None, :],
            [(un, lambda g: g.sum(axis=1)), (vn, lambda g: g.sum(axis=0))],
        )
    return u[:, None] + v[None, :]


def softmax_rows(a):
    """Row-wise softmax of a matrix."""

    def raw(x):
        shifted = x - x.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)

    if _is_node(a):
        s = raw(a.data)

        def back(g, s=s):
            return s * (g - (g * s).sum(axis=1, keepdims=True))

        return a.tape._record(s, [(a, back)])
    return raw(a)


def mean_rows(a):
    """Row means with keepdims, (l, d) -> (l, 1)."""
    if _is_node(a):
        n = a.data.shape[1]
        return a.tape._record(
            a.data.mean(axis=1, keepdims=True),
            [(a, lambda g: np.repeat(g, n, axis=1) / n)],
        )
    return a.mean(axis=1, keepdims=True)


def sum_all(a):
    if _is_node(a):
        shape = a.data.shape
        return a.tape._record(
            np.asarray(a.data.sum()), [(a, lambda g: np.full(shape, float(g)))]
        )
    return a.sum()


def mean_all(a):
    if _is_node(a):
        n = a.data.size
        shape = a.data.shape
        return a.tape._record(
            np.asarray(a.data.mean()), [(a, lambda g: np.full(shape, float(g) / n))]
        )
    return a.mean()


def log(a):
    if _is_node(a):
        d = a.data
        return a.tape._record(np.log(d), [(a, lambda g: g / d)])
    return np.log(a)


def clip(a, lo: float, hi: float):
    """Clamp values into [lo, hi]; gradient passes only where unclipped."""
    if _is_node(a):
        d = a.data
        inside = ((d >= lo) & (d <= hi)).astype(np.float64)
        return a.tape._record(np.clip(d, lo, hi), [(a, lambda g: g * inside)])
    return np.clip(a, lo, hi)


def power(a, p: float):
    if _is_node(a):
        d = a.data
        return a.tape._record(d**p, [(a, lambda g: g * p * d ** (p - 1.0))])
    return a**p


def dropout(x, rate: float, rng: np.random.Generator | None):
    """Inverted dropout; identity when ``rng`` is None or rate is 0."""
    if rng is None or rate <= 0.0:
        return x
    shape = x.data.shape if _is_node(x) else np.shape(x)
    mask = (rng.random(shape) >= rate) / (1.0 - rate)
    return x * mask
