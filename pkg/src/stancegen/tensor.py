"""Dense tensor engine with a recorded tape and reverse-mode gradients.

Tensors are thin wrappers around rank-0/1/2 numpy arrays. Running an
operation while a Tape is active records a node with a backward closure;
``Tape.backward`` replays the nodes in reverse insertion order and
accumulates gradients additively across fan-out. With no active tape,
operations compute values only (cheap inference path).

A tape and the tensors recorded on it belong to one thread; the active-tape
stack is thread-local so independent tapes may run on separate threads.
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, ShapeError

PRECISIONS = {"float32": np.float32, "float64": np.float64}

_TLS = threading.local()


def active_tape() -> "Tape | None":
    stack = getattr(_TLS, "tapes", None)
    return stack[-1] if stack else None


class Tensor:
    """A dense value buffer plus a lazily materialized gradient buffer."""

    __slots__ = ("value", "grad", "node_id")

    def __init__(self, value: np.ndarray):
        self.value = value
        self.grad: np.ndarray | None = None
        self.node_id = -1

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def accum(self, g: np.ndarray) -> None:
        """Add a gradient contribution (copying on first touch)."""
        if self.grad is None:
            self.grad = np.array(g, dtype=self.value.dtype)
        else:
            self.grad += g

    def __repr__(self) -> str:
        return f"Tensor(shape={self.value.shape}, dtype={self.value.dtype})"


def tensor(values, dtype=None) -> Tensor:
    """Create a leaf tensor, defaulting to the active tape's precision."""
    if dtype is None:
        tape = active_tape()
        dtype = tape.dtype if tape is not None else np.float64
    return Tensor(np.asarray(values, dtype=dtype))


def zero_grads(tensors) -> None:
    for t in tensors:
        t.grad = None


class Tape:
    """Ordered record of operations for one forward/backward pass.

    Nodes are appended in execution order, so every node's inputs precede
    it and the backward sweep is a single reversed pass.
    """

    def __init__(self, precision: str = "float32"):
        if precision not in PRECISIONS:
            raise ValueError(f"unknown precision {precision!r}")
        self.precision = precision
        self.dtype = PRECISIONS[precision]
        self._nodes: list[tuple[Tensor, tuple[int, ...], Callable]] = []

    def __enter__(self) -> "Tape":
        stack = getattr(_TLS, "tapes", None)
        if stack is None:
            stack = _TLS.tapes = []
        stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TLS.tapes.pop()

    def __len__(self) -> int:
        return len(self._nodes)

    def record(self, out: Tensor, inputs: Sequence[Tensor], backward: Callable) -> None:
        if out.value.dtype != self.dtype:
            raise ValueError(
                f"tensor dtype {out.value.dtype} does not match tape precision {self.precision}"
            )
        out.node_id = len(self._nodes)
        self._nodes.append((out, tuple(t.node_id for t in inputs), backward))

    def backward(self, root: Tensor) -> None:
        """Accumulate d(root)/d(tensor) into every tensor reachable from root."""
        if root.value.size != 1:
            raise ValueError(f"backward root must be a scalar, got shape {root.value.shape}")
        root.accum(np.ones_like(root.value))
        for out, _inputs, fn in reversed(self._nodes):
            g = out.grad
            if g is not None:
                fn(g)


def _record(out: Tensor, inputs: Sequence[Tensor], backward: Callable) -> Tensor:
    tape = active_tape()
    if tape is not None:
        tape.record(out, inputs, backward)
    return out


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh formulation avoids exp overflow for large |x|
    return 0.5 * (1.0 + np.tanh(0.5 * x))


# name -> (forward(x, const), backward(x_value, out_value, grad, const))
UNARY_OPS = {
    "tanh": (lambda x, c: np.tanh(x), lambda x, y, g, c: g * (1.0 - y * y)),
    "sigmoid": (lambda x, c: _sigmoid(x), lambda x, y, g, c: g * y * (1.0 - y)),
    "relu": (lambda x, c: np.maximum(x, 0.0), lambda x, y, g, c: g * (x > 0.0)),
    "log": (lambda x, c: np.log(x), lambda x, y, g, c: g / x),
    "exp": (lambda x, c: np.exp(x), lambda x, y, g, c: g * y),
    "negate": (lambda x, c: -x, lambda x, y, g, c: -g),
    "scale": (lambda x, c: x * c, lambda x, y, g, c: g * c),
    "clamp_min": (lambda x, c: np.maximum(x, c), lambda x, y, g, c: g * (x > c)),
}

BINARY_OPS = {
    "add": (lambda a, b: a + b, lambda g: g, lambda g: g),
    "sub": (lambda a, b: a - b, lambda g: g, lambda g: -g),
    "mul": None,  # handled separately: backward needs operand values
}


def apply_unary(x: Tensor, f: str, const: float | None = None) -> Tensor:
    """Elementwise unary op; registers the matching backward rule."""
    if f not in UNARY_OPS:
        raise ValueError(f"unknown unary op {f!r}")
    if f == "log":
        bad = np.where(x.value <= 0.0)
        if bad[0].size:
            idx = tuple(int(b[0]) for b in bad)
            raise DomainError(f"log: non-positive entry {x.value[idx]} at index {idx}")
    if f in ("scale", "clamp_min") and const is None:
        raise ValueError(f"{f} requires a constant")
    out = Tensor(UNARY_OPS[f][0](x.value, const))

    def backward(g):
        x.accum(UNARY_OPS[f][1](x.value, out.value, g, const))

    return _record(out, (x,), backward)


def tanh(x: Tensor) -> Tensor:
    return apply_unary(x, "tanh")


def sigmoid(x: Tensor) -> Tensor:
    return apply_unary(x, "sigmoid")


def relu(x: Tensor) -> Tensor:
    return apply_unary(x, "relu")


def log(x: Tensor) -> Tensor:
    return apply_unary(x, "log")


def exp(x: Tensor) -> Tensor:
    return apply_unary(x, "exp")


def negate(x: Tensor) -> Tensor:
    return apply_unary(x, "negate")


def scale(x: Tensor, k: float) -> Tensor:
    return apply_unary(x, "scale", const=k)


def clamp_min(x: Tensor, floor: float) -> Tensor:
    return apply_unary(x, "clamp_min", const=floor)


def apply_binary(a: Tensor, b: Tensor, f: str) -> Tensor:
    """Elementwise binary op over equal shapes."""
    if f not in BINARY_OPS:
        raise ValueError(f"unknown binary op {f!r}")
    if a.value.shape != b.value.shape:
        raise ShapeError(f"{f}: shapes {a.value.shape} and {b.value.shape} differ")
    if f == "mul":
        out = Tensor(a.value * b.value)

        def backward(g):
            a.accum(g * b.value)
            b.accum(g * a.value)

    else:
        fwd, da, db = BINARY_OPS[f]
        out = Tensor(fwd(a.value, b.value))

        def backward(g):
            a.accum(da(g))
            b.accum(db(g))

    return _record(out, (a, b), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    return apply_binary(a, b, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    return apply_binary(a, b, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    return apply_binary(a, b, "mul")


def maximum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise max; ties route the gradient to the first argument."""
    if a.value.shape != b.value.shape:
        raise ShapeError(f"maximum: shapes {a.value.shape} and {b.value.shape} differ")
    out = Tensor(np.maximum(a.value, b.value))

    def backward(g):
        take_a = a.value >= b.value
        a.accum(g * take_a)
        b.accum(g * ~take_a)

    return _record(out, (a, b), backward)


def matvec(w: Tensor, x: Tensor) -> Tensor:
    """Matrix-vector product: (m, n) @ (n,) -> (m,)."""
    if w.value.ndim != 2 or x.value.ndim != 1 or w.value.shape[1] != x.value.shape[0]:
        raise ShapeError(f"matvec: {w.value.shape} @ {x.value.shape}")
    out = Tensor(w.value @ x.value)

    def backward(g):
        w.accum(np.outer(g, x.value))
        x.accum(w.value.T @ g)

    return _record(out, (w, x), backward)


def matmul_t(a: Tensor, w: Tensor) -> Tensor:
    """Row-batched linear map: (B, k) @ (m, k)^T -> (B, m)."""
    if a.value.ndim != 2 or w.value.ndim != 2 or a.value.shape[1] != w.value.shape[1]:
        raise ShapeError(f"matmul_t: {a.value.shape} @ {w.value.shape}^T")
    out = Tensor(a.value @ w.value.T)

    def backward(g):
        a.accum(g @ w.value)
        w.accum(g.T @ a.value)

    return _record(out, (a, w), backward)


def dot(a: Tensor, b: Tensor) -> Tensor:
    """Inner product of two vectors, returned as a length-1 tensor."""
    if a.value.ndim != 1 or a.value.shape != b.value.shape:
        raise ShapeError(f"dot: {a.value.shape} . {b.value.shape}")
    out = Tensor((a.value @ b.value).reshape(1))

    def backward(g):
        a.accum(g[0] * b.value)
        b.accum(g[0] * a.value)

    return _record(out, (a, b), backward)


def concat(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate rank-1 tensors; backward splits by original offsets."""
    if not parts:
        raise ValueError("concat requires at least one part")
    for p in parts:
        if p.value.ndim != 1:
            raise ShapeError(f"concat expects rank-1 parts, got {p.value.shape}")
    parts = list(parts)
    out = Tensor(np.concatenate([p.value for p in parts]))
    offsets = np.cumsum([0] + [p.value.shape[0] for p in parts])

    def backward(g):
        for p, lo, hi in zip(parts, offsets, offsets[1:]):
            p.accum(g[lo:hi])

    return _record(out, parts, backward)


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    """Column-concatenate rank-2 tensors sharing a row count."""
    if not parts:
        raise ValueError("concat_cols requires at least one part")
    rows = parts[0].value.shape[0]
    for p in parts:
        if p.value.ndim != 2 or p.value.shape[0] != rows:
            raise ShapeError(f"concat_cols: incompatible shape {p.value.shape}")
    parts = list(parts)
    out = Tensor(np.concatenate([p.value for p in parts], axis=1))
    offsets = np.cumsum([0] + [p.value.shape[1] for p in parts])

    def backward(g):
        for p, lo, hi in zip(parts, offsets, offsets[1:]):
            p.accum(g[:, lo:hi])

    return _record(out, parts, backward)


def slice1d(x: Tensor, lo: int, hi: int) -> Tensor:
    if x.value.ndim != 1 or not (0 <= lo < hi <= x.value.shape[0]):
        raise ShapeError(f"slice1d: [{lo}:{hi}] of {x.value.shape}")
    out = Tensor(x.value[lo:hi].copy())

    def backward(g):
        if x.grad is None:
            x.grad = np.zeros_like(x.value)
        x.grad[lo:hi] += g

    return _record(out, (x,), backward)


def slice_cols(x: Tensor, lo: int, hi: int) -> Tensor:
    if x.value.ndim != 2 or not (0 <= lo < hi <= x.value.shape[1]):
        raise ShapeError(f"slice_cols: [{lo}:{hi}] of {x.value.shape}")
    out = Tensor(x.value[:, lo:hi].copy())

    def backward(g):
        if x.grad is None:
            x.grad = np.zeros_like(x.value)
        x.grad[:, lo:hi] += g

    return _record(out, (x,), backward)


def column(x: Tensor, j: int) -> Tensor:
    """Extract column j of a rank-2 tensor as a rank-1 tensor."""
    if x.value.ndim != 2 or not (0 <= j < x.value.shape[1]):
        raise ShapeError(f"column: {j} of {x.value.shape}")
    out = Tensor(x.value[:, j].copy())

    def backward(g):
        if x.grad is None:
            x.grad = np.zeros_like(x.value)
        x.grad[:, j] += g

    return _record(out, (x,), backward)


def stack_cols(parts: Sequence[Tensor]) -> Tensor:
    """Stack rank-1 tensors of equal length as the columns of a matrix."""
    if not parts:
        raise ValueError("stack_cols requires at least one part")
    n = parts[0].value.shape[0]
    for p in parts:
        if p.value.ndim != 1 or p.value.shape[0] != n:
            raise ShapeError(f"stack_cols: incompatible shape {p.value.shape}")
    parts = list(parts)
    out = Tensor(np.stack([p.value for p in parts], axis=1))

    def backward(g):
        for j, p in enumerate(parts):
            p.accum(g[:, j])

    return _record(out, parts, backward)


def add_rowvec(m: Tensor, b: Tensor) -> Tensor:
    """Add a vector to every row of a matrix."""
    if m.value.ndim != 2 or b.value.ndim != 1 or m.value.shape[1] != b.value.shape[0]:
        raise ShapeError(f"add_rowvec: {m.value.shape} + {b.value.shape}")
    out = Tensor(m.value + b.value)

    def backward(g):
        m.accum(g)
        b.accum(g.sum(axis=0))

    return _record(out, (m, b), backward)


def scale_rows(m: Tensor, c: np.ndarray) -> Tensor:
    """Multiply row i by constant c[i] (no gradient to c)."""
    c = np.asarray(c, dtype=m.value.dtype)
    if m.value.ndim != 2 or c.shape != (m.value.shape[0],):
        raise ShapeError(f"scale_rows: {m.value.shape} by {c.shape}")
    col = c[:, None]
    out = Tensor(m.value * col)

    def backward(g):
        m.accum(g * col)

    return _record(out, (m,), backward)


def scale_rows_t(m: Tensor, c: Tensor) -> Tensor:
    """Multiply row i by c[i] where c is a differentiable vector."""
    if m.value.ndim != 2 or c.value.shape != (m.value.shape[0],):
        raise ShapeError(f"scale_rows_t: {m.value.shape} by {c.value.shape}")
    out = Tensor(m.value * c.value[:, None])

    def backward(g):
        m.accum(g * c.value[:, None])
        c.accum((g * m.value).sum(axis=1))

    return _record(out, (m, c), backward)


def blend_rows(new: Tensor, old: Tensor, keep_new: np.ndarray) -> Tensor:
    """Per-row select: rows where keep_new is true come from `new`, else `old`."""
    if new.value.shape != old.value.shape or new.value.ndim != 2:
        raise ShapeError(f"blend_rows: {new.value.shape} vs {old.value.shape}")
    keep = np.asarray(keep_new, dtype=bool)
    if keep.shape != (new.value.shape[0],):
        raise ShapeError(f"blend_rows: mask {keep.shape}")
    col = keep[:, None]
    out = Tensor(np.where(col, new.value, old.value))

    def backward(g):
        new.accum(g * col)
        old.accum(g * ~col)

    return _record(out, (new, old), backward)


def fill_rows(m: Tensor, keep: np.ndarray, fill: float) -> Tensor:
    """Replace rows where keep is false by a constant (no gradient there)."""
    keep = np.asarray(keep, dtype=bool)
    if m.value.ndim != 2 or keep.shape != (m.value.shape[0],):
        raise ShapeError(f"fill_rows: {m.value.shape} mask {keep.shape}")
    col = keep[:, None]
    out = Tensor(np.where(col, m.value, m.value.dtype.type(fill)))

    def backward(g):
        m.accum(g * col)

    return _record(out, (m,), backward)


def select_rows(m: Tensor, idx: np.ndarray) -> Tensor:
    """Gather one entry per row: out[i] = m[i, idx[i]]."""
    idx = np.asarray(idx, dtype=np.intp)
    if m.value.ndim != 2 or idx.shape != (m.value.shape[0],):
        raise ShapeError(f"select_rows: {m.value.shape} idx {idx.shape}")
    rows = np.arange(m.value.shape[0])
    out = Tensor(m.value[rows, idx].copy())

    def backward(g):
        if m.grad is None:
            m.grad = np.zeros_like(m.value)
        m.grad[rows, idx] += g

    return _record(out, (m,), backward)


def softmax(x: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Max-subtracted softmax over a vector; masked positions are exactly 0."""
    if x.value.ndim != 1:
        raise ShapeError(f"softmax expects rank-1, got {x.value.shape}")
    v = x.value
    if mask is None:
        e = np.exp(v - v.max())
        p = e / e.sum()
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != v.shape:
            raise ShapeError(f"softmax: mask {mask.shape} vs {v.shape}")
        if not mask.any():
            raise ValueError("softmax: all positions masked")
        e = np.zeros_like(v)
        e[mask] = np.exp(v[mask] - v[mask].max())
        p = e / e.sum()
    out = Tensor(p)

    def backward(g):
        inner = (g * p).sum()
        x.accum(p * (g - inner))

    return _record(out, (x,), backward)


def softmax_rows(x: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Row-wise masked softmax over a matrix."""
    if x.value.ndim != 2:
        raise ShapeError(f"softmax_rows expects rank-2, got {x.value.shape}")
    v = x.value
    if mask is None:
        shifted = v - v.max(axis=1, keepdims=True)
        e = np.exp(shifted)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != v.shape:
            raise ShapeError(f"softmax_rows: mask {mask.shape} vs {v.shape}")
        if not mask.any(axis=1).all():
            raise ValueError("softmax_rows: some row has all positions masked")
        masked = np.where(mask, v, -np.inf)
        rowmax = masked.max(axis=1, keepdims=True)
        e = np.exp(np.where(mask, v - rowmax, -np.inf))
    p = e / e.sum(axis=1, keepdims=True)
    out = Tensor(p)

    def backward(g):
        inner = (g * p).sum(axis=1, keepdims=True)
        x.accum(p * (g - inner))

    return _record(out, (x,), backward)


def weighted_sum(weights: Tensor, vectors: Sequence[Tensor]) -> Tensor:
    """Sum of vectors[i] scaled by weights[i]."""
    vectors = list(vectors)
    if weights.value.ndim != 1 or weights.value.shape[0] != len(vectors):
        raise ShapeError(
            f"weighted_sum: {weights.value.shape[0] if weights.value.ndim == 1 else weights.value.shape} "
            f"weights over {len(vectors)} vectors"
        )
    n = vectors[0].value.shape[0]
    for v in vectors:
        if v.value.shape != (n,):
            raise ShapeError(f"weighted_sum: vector shape {v.value.shape} != ({n},)")
    stacked = np.stack([v.value for v in vectors])
    out = Tensor(weights.value @ stacked)

    def backward(g):
        weights.accum(stacked @ g)
        for w_i, v in zip(weights.value, vectors):
            v.accum(w_i * g)

    return _record(out, [weights] + vectors, backward)


def sum_all(x: Tensor) -> Tensor:
    """Sum of all entries as a length-1 tensor."""
    out = Tensor(x.value.sum().reshape(1))

    def backward(g):
        x.accum(np.full_like(x.value, g[0]))

    return _record(out, (x,), backward)


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: zero with probability `rate`, scale survivors."""
    keep = (rng.random(x.value.shape) >= rate).astype(x.value.dtype)
    factor = keep / (1.0 - rate)
    out = Tensor(x.value * factor)

    def backward(g):
        x.accum(g * factor)

    return _record(out, (x,), backward)


def finite_difference_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-5,
) -> float:
    """Max relative error between tape gradients of f() and central differences.

    f must be a deterministic scalar-valued function of the parameter values
    and must not open a tape of its own; parameters should be float64.
    Relative error uses |a - n| / (|a| + |n| + 1e-12) per coordinate.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    zero_grads(params)
    with Tape("float64") as tape:
        root = f()
        tape.backward(root)
    analytic = [
        np.array(p.grad) if p.grad is not None else np.zeros_like(p.value) for p in params
    ]
    zero_grads(params)
    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.value.reshape(-1)
        a_flat = a.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = float(f().value.reshape(-1)[0])
            flat[i] = orig - eps
            lo = float(f().value.reshape(-1)[0])
            flat[i] = orig
            numeric = (hi - lo) / (2.0 * eps)
            err = abs(float(a_flat[i]) - numeric) / (abs(float(a_flat[i])) + abs(numeric) + 1e-12)
            if err > worst:
                worst = err
    return worst
