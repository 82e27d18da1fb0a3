"""Dense float64 linear algebra with reverse-mode automatic differentiation.

A "matrix" throughout this package is a 2-D, C-contiguous, float64 numpy
array (row-major, all entries finite).  :func:`as_matrix` is the validating
constructor.  Differentiable computations record onto an explicit
:class:`Tape` as they run; :meth:`Tape.backward` replays the recorded nodes
exactly once in reverse creation order, accumulating vector-Jacobian
products into each node's ``grad``.

Every op here is dual-mode: called on plain arrays it returns a plain array
(no recording), called on :class:`Tensor` operands it records.  Model code
is therefore written once and reused for both training and inference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, ShapeError

Array = np.ndarray


def as_matrix(data, *, name: str = "matrix") -> Array:
    """Validate and normalize input into a 2-D float64 C-order array.

    1-D input becomes a single row.  Non-finite entries are rejected so
    NaN/Inf cannot enter a computation at the boundary.
    """
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ShapeError(f"{name}: expected 2-D data, got ndim={arr.ndim}")
    if not np.isfinite(arr).all():
        raise DomainError(f"{name}: non-finite entries")
    return np.ascontiguousarray(arr)


class Tensor:
    """A matrix value plus its slot in a tape's computation graph.

    ``value`` is always a validated matrix.  ``grad`` accumulates during
    :meth:`Tape.backward`; for a leaf that the loss never touched it stays
    exactly zero.
    """

    __slots__ = ("value", "tape", "_grad", "_parents", "_vjps")
    __array_priority__ = 100  # ndarray <op> Tensor defers to Tensor

    def __init__(self, value, tape: "Tape | None" = None):
        self.value = as_matrix(value)
        self.tape = tape
        self._grad: Array | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._vjps: tuple[Callable[[Array], Array], ...] = ()
        if tape is not None:
            tape.nodes.append(self)

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    @property
    def grad(self) -> Array:
        if self._grad is None:
            return np.zeros_like(self.value)
        return self._grad

    def item(self) -> float:
        if self.value.size != 1:
            raise ShapeError(f"item() on non-scalar tensor of shape {self.shape}")
        return float(self.value[0, 0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, tracked={self.tape is not None})"

    # operator sugar; all arithmetic lives in the module-level ops
    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)


class Tape:
    """Wengert list of tensors in creation (topological) order.

    Single-writer: one forward/backward pass at a time.  ``backward`` seeds
    the scalar root with gradient 1 and visits every node exactly once in
    reverse order, so each vjp fires with the node's fully accumulated
    upstream gradient.
    """

    __slots__ = ("nodes",)

    def __init__(self):
        self.nodes: list[Tensor] = []

    def leaf(self, value) -> Tensor:
        """Register an input/parameter the backward pass should reach."""
        return Tensor(value, tape=self)

    def backward(self, root: Tensor) -> None:
        if root.tape is not self:
            raise DomainError("backward root does not belong to this tape")
        if root.value.shape != (1, 1):
            raise ShapeError(f"backward root must be 1x1, got {root.shape}")
        root._grad = np.ones((1, 1))
        for node in reversed(self.nodes):
            g = node._grad
            if g is None:
                continue
            for parent, vjp in zip(node._parents, node._vjps):
                contribution = vjp(g)
                if parent._grad is None:
                    parent._grad = np.zeros_like(parent.value)
                parent._grad += contribution


def _value(x) -> Array:
    return x.value if isinstance(x, Tensor) else as_matrix(x)


def apply_op(value: Array, links: Sequence[tuple[Tensor, Callable[[Array], Array]]]) -> Tensor:
    """Record a primitive application: output value + (parent, vjp) links.

    This is the extension point for custom differentiable primitives; every
    built-in op below routes through it.  All tracked parents must share one
    tape.
    """
    tapes = {p.tape for p, _ in links if p.tape is not None}
    if len(tapes) > 1:
        raise DomainError("operands recorded on different tapes")
    tape = tapes.pop() if tapes else None
    out = Tensor(value, tape=tape)
    out._parents = tuple(p for p, _ in links)
    out._vjps = tuple(v for _, v in links)
    return out


def _dispatch(value: Array, links: list[tuple[Tensor, Callable]], tracked: bool):
    if not tracked:
        return value
    return apply_op(value, links)


def _tracked(*args) -> bool:
    return any(isinstance(a, Tensor) for a in args)


# ---------------------------------------------------------------------------
# primitives


def matmul(a, b):
    """Matrix product.  Backward: dA = g @ B^T, dB = A^T @ g."""
    av, bv = _value(a), _value(b)
    if av.shape[1] != bv.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {av.shape} x {bv.shape}")
    out = av @ bv
    links = []
    if isinstance(a, Tensor):
        links.append((a, lambda g: g @ bv.T))
    if isinstance(b, Tensor):
        links.append((b, lambda g: av.T @ g))
    return _dispatch(out, links, _tracked(a, b))


def add(a, b):
    """Elementwise sum; a 1-row second operand broadcasts as a bias row."""
    av, bv = _value(a), _value(b)
    if av.shape != bv.shape and not (bv.shape == (1, av.shape[1])):
        raise ShapeError(f"add: shapes {av.shape} and {bv.shape} are incompatible")
    out = av + bv
    links = []
    if isinstance(a, Tensor):
        links.append((a, lambda g: g))
    if isinstance(b, Tensor):
        if bv.shape == av.shape:
            links.append((b, lambda g: g))
        else:
            links.append((b, lambda g: g.sum(axis=0, keepdims=True)))
    return _dispatch(out, links, _tracked(a, b))


def sub(a, b):
    av, bv = _value(a), _value(b)
    if av.shape != bv.shape:
        raise ShapeError(f"sub: shapes {av.shape} and {bv.shape} differ")
    out = av - bv
    links = []
    if isinstance(a, Tensor):
        links.append((a, lambda g: g))
    if isinstance(b, Tensor):
        links.append((b, lambda g: -g))
    return _dispatch(out, links, _tracked(a, b))


def mul(a, b):
    """Hadamard product of same-shape matrices."""
    av, bv = _value(a), _value(b)
    if av.shape != bv.shape:
        raise ShapeError(f"mul: shapes {av.shape} and {bv.shape} differ")
    out = av * bv
    links = []
    if isinstance(a, Tensor):
        links.append((a, lambda g: g * bv))
    if isinstance(b, Tensor):
        links.append((b, lambda g: g * av))
    return _dispatch(out, links, _tracked(a, b))


def scale(x, c: float):
    xv = _value(x)
    out = xv * c
    links = [(x, lambda g: g * c)] if isinstance(x, Tensor) else []
    return _dispatch(out, links, _tracked(x))


def transpose(x):
    xv = _value(x)
    out = np.ascontiguousarray(xv.T)
    links = [(x, lambda g: np.ascontiguousarray(g.T))] if isinstance(x, Tensor) else []
    return _dispatch(out, links, _tracked(x))


def concat_cols(a, b):
    """[A | B] with matching row counts."""
    av, bv = _value(a), _value(b)
    if av.shape[0] != bv.shape[0]:
        raise ShapeError(f"concat_cols: row counts differ, {av.shape} vs {bv.shape}")
    out = np.hstack([av, bv])
    na = av.shape[1]
    links = []
    if isinstance(a, Tensor):
        links.append((a, lambda g: np.ascontiguousarray(g[:, :na])))
    if isinstance(b, Tensor):
        links.append((b, lambda g: np.ascontiguousarray(g[:, na:])))
    return _dispatch(out, links, _tracked(a, b))


def tile_rows(x, k: int):
    """Repeat a single row k times."""
    xv = _value(x)
    if xv.shape[0] != 1:
        raise ShapeError(f"tile_rows: expected a single row, got {xv.shape}")
    if k < 1:
        raise DomainError(f"tile_rows: k must be >= 1, got {k}")
    out = np.repeat(xv, k, axis=0)
    links = [(x, lambda g: g.sum(axis=0, keepdims=True))] if isinstance(x, Tensor) else []
    return _dispatch(out, links, _tracked(x))


def take_row(x, i: int):
    """Select row i (embedding lookup).  Backward scatters into that row."""
    xv = _value(x)
    if not 0 <= i < xv.shape[0]:
        raise IndexError(f"take_row: row {i} outside matrix with {xv.shape[0]} rows")
    out = xv[i : i + 1].copy()

    def vjp(g, i=i, shape=xv.shape):
        z = np.zeros(shape)
        z[i] = g[0]
        return z

    links = [(x, vjp)] if isinstance(x, Tensor) else []
    return _dispatch(out, links, _tracked(x))


def slice_cols(x, j0: int, j1: int):
    xv = _value(x)
    if not 0 <= j0 < j1 <= xv.shape[1]:
        raise ShapeError(f"slice_cols: [{j0}:{j1}] invalid for shape {xv.shape}")
    out = np.ascontiguousarray(xv[:, j0:j1])

    def vjp(g, j0=j0, j1=j1, shape=xv.shape):
        z = np.zeros(shape)
        z[:, j0:j1] = g
        return z

    links = [(x, vjp)] if isinstance(x, Tensor) else []
    return _dispatch(out, links, _tracked(x))


def sum_all(x):
    """Sum of all entries, as a 1x1 matrix."""
    xv = _value(x)
    out = np.array([[xv.sum()]])
    links = [(x, lambda g: np.full_like(xv, g[0, 0]))] if isinstance(x, Tensor) else []
    return _dispatch(out, links, _tracked(x))


def tanh(x):
    """Elementwise tanh; output in (-1, 1); gradient 1 - tanh^2."""
    xv = _value(x)
    t = np.tanh(xv)
    links = [(x, lambda g: g * (1.0 - t * t))] if isinstance(x, Tensor) else []
    return _dispatch(t, links, _tracked(x))


def _sigmoid_stable(xv: Array) -> Array:
    out = np.empty_like(xv)
    pos = xv >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-xv[pos]))
    ex = np.exp(xv[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(x):
    """Elementwise logistic; output in (0, 1); gradient s(1-s)."""
    xv = _value(x)
    s = _sigmoid_stable(xv)
    links = [(x, lambda g: g * s * (1.0 - s))] if isinstance(x, Tensor) else []
    return _dispatch(s, links, _tracked(x))


def _softmax_rows_value(xv: Array) -> Array:
    shifted = xv - xv.max(axis=1, keepdims=True)  # stability under large scores
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax(v):
    """Stable softmax of a score vector (single row).

    Shift-invariant by construction: the row maximum is subtracted before
    exponentiation, so inputs like [1000, 1000] cannot overflow.
    """
    vv = _value(v)
    if vv.shape[0] != 1:
        raise ShapeError(f"softmax: expected a single row, got {vv.shape}")
    if vv.shape[1] == 0:
        raise DomainError("softmax: empty input")
    return softmax_rows(v)


def softmax_rows(x):
    """Row-wise stable softmax."""
    xv = _value(x)
    if xv.shape[1] == 0:
        raise DomainError("softmax_rows: empty rows")
    s = _softmax_rows_value(xv)

    def vjp(g):
        # dX = S * (g - sum(g * S, axis=1))
        dot = (g * s).sum(axis=1, keepdims=True)
        return s * (g - dot)

    links = [(x, vjp)] if isinstance(x, Tensor) else []
    return _dispatch(s, links, _tracked(x))


def log_softmax_vec(v: Array) -> Array:
    """Plain-array log softmax of a single row (decode-time scoring)."""
    vv = _value(v) if isinstance(v, Tensor) else as_matrix(v)
    m = vv.max()
    lse = m + math.log(np.exp(vv - m).sum())
    return vv - lse


def cross_entropy(logits, target: int):
    """Negative log softmax probability of ``target``: -log p(target|logits).

    Gradient w.r.t. logits is softmax(logits) - one_hot(target).
    """
    lv = _value(logits)
    if lv.shape[0] != 1:
        raise ShapeError(f"cross_entropy: expected a single logits row, got {lv.shape}")
    n = lv.shape[1]
    if not 0 <= target < n:
        raise IndexError(f"cross_entropy: target {target} outside vocabulary of size {n}")
    m = lv.max()
    lse = m + math.log(np.exp(lv - m).sum())
    out = np.array([[lse - lv[0, target]]])

    def vjp(g):
        p = _softmax_rows_value(lv)
        p[0, target] -= 1.0
        return g[0, 0] * p

    links = [(logits, vjp)] if isinstance(logits, Tensor) else []
    return _dispatch(out, links, _tracked(logits))


# ---------------------------------------------------------------------------
# gradient checking


@dataclass
class GradCheckResult:
    """Outcome of a central-finite-difference check."""

    ok: bool
    worst_rel_err: float
    worst_param: int = -1
    worst_index: tuple = ()

    def __bool__(self) -> bool:
        return self.ok


def _eval_scalar(fn, params: list[Array]) -> float:
    tape = Tape()
    leaves = [tape.leaf(p) for p in params]
    out = fn(tape, *leaves)
    val = out.item()
    if not math.isfinite(val):
        raise DomainError(f"grad_check: function returned non-finite value {val}")
    return val


def grad_check(fn, params: Sequence[Array], eps: float = 1e-5, tol: float = 1e-4) -> GradCheckResult:
    """Compare tape gradients of ``fn`` against central finite differences.

    ``fn(tape, *leaves)`` must build and return a 1x1 Tensor from the given
    leaf tensors.  Every coordinate of every parameter is perturbed by
    +/- eps; relative error is |a - n| / max(|a|, |n|, 1e-8).  Aborts with
    DomainError if the function value goes non-finite.
    """
    params = [as_matrix(p).copy() for p in params]

    tape = Tape()
    leaves = [tape.leaf(p) for p in params]
    out = fn(tape, *leaves)
    if not math.isfinite(out.item()):
        raise DomainError(f"grad_check: function returned non-finite value {out.item()}")
    tape.backward(out)
    analytic = [leaf.grad.copy() for leaf in leaves]

    worst = 0.0
    worst_param, worst_index = -1, ()
    for pi, p in enumerate(params):
        for idx in np.ndindex(*p.shape):
            orig = p[idx]
            p[idx] = orig + eps
            f_plus = _eval_scalar(fn, params)
            p[idx] = orig - eps
            f_minus = _eval_scalar(fn, params)
            p[idx] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = analytic[pi][idx]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            if rel > worst:
                worst, worst_param, worst_index = rel, pi, idx
    return GradCheckResult(ok=worst < tol, worst_rel_err=worst, worst_param=worst_param, worst_index=worst_index)
