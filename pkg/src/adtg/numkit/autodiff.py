"""Reverse-mode automatic differentiation over float64 numpy arrays.

The toolkit's losses are small compositions of dense linear algebra, so the
tape is a plain DAG of :class:`Var` nodes, each holding its value and the
vector-Jacobian products of its parents. Only scalar losses can be
differentiated; ``grad`` and ``finite_diff_check`` are the two entry points
used by training code and by the gradient-integrity tests.

All values are float64. Scalars are 0-d arrays.
"""

from __future__ import annotations

from typing import Callable, Dict, Iterable, Mapping, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes do not match the operation's contract."""


class DomainError(ValueError):
    """Input outside the mathematical domain (e.g. zero-norm vector)."""


class UsageError(ValueError):
    """The caller violated an API precondition."""


Array = np.ndarray


class Var:
    """One node of the computation DAG.

    ``parents`` holds ``(parent, vjp)`` pairs where ``vjp`` maps the upstream
    gradient to this node's contribution to the parent's gradient.
    """

    __slots__ = ("value", "grad", "parents")

    def __init__(self, value: Array, parents: tuple = ()):
        self.value = value
        self.grad: Array | None = None
        self.parents = parents

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def item(self) -> float:
        return float(self.value)


def as_var(x) -> Var:
    if isinstance(x, Var):
        return x
    return Var(np.asarray(x, dtype=np.float64))


def leaf(x) -> Var:
    """A differentiable leaf; rejects non-finite inputs."""
    v = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise DomainError("leaf value contains non-finite entries")
    return Var(v)


def _sum_to_shape(g: Array, shape: tuple[int, ...]) -> Array:
    """Reverse numpy broadcasting: reduce ``g`` down to ``shape``."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def add(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    out = a.value + b.value
    return Var(out, (
        (a, lambda g: _sum_to_shape(g, a.value.shape)),
        (b, lambda g: _sum_to_shape(g, b.value.shape)),
    ))


def sub(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    out = a.value - b.value
    return Var(out, (
        (a, lambda g: _sum_to_shape(g, a.value.shape)),
        (b, lambda g: _sum_to_shape(-g, b.value.shape)),
    ))


def mul(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    out = a.value * b.value
    return Var(out, (
        (a, lambda g: _sum_to_shape(g * b.value, a.value.shape)),
        (b, lambda g: _sum_to_shape(g * a.value, b.value.shape)),
    ))


def div(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    out = a.value / b.value
    return Var(out, (
        (a, lambda g: _sum_to_shape(g / b.value, a.value.shape)),
        (b, lambda g: _sum_to_shape(-g * a.value / (b.value * b.value), b.value.shape)),
    ))


def neg(a) -> Var:
    a = as_var(a)
    return Var(-a.value, ((a, lambda g: -g),))


def matmul(a, b) -> Var:
    """Matrix product for the three layouts the kernel uses.

    (m,k)@(k,) -> (m,); (m,k)@(k,n) -> (m,n); (k,)@(k,n) -> (n,).
    """
    a, b = as_var(a), as_var(b)
    av, bv = a.value, b.value
    if av.ndim == 2 and bv.ndim == 1:
        if av.shape[1] != bv.shape[0]:
            raise ShapeError(f"matmul: {av.shape} @ {bv.shape}")
        out = av @ bv
        return Var(out, (
            (a, lambda g: np.outer(g, bv)),
            (b, lambda g: av.T @ g),
        ))
    if av.ndim == 2 and bv.ndim == 2:
        if av.shape[1] != bv.shape[0]:
            raise ShapeError(f"matmul: {av.shape} @ {bv.shape}")
        out = av @ bv
        return Var(out, (
            (a, lambda g: g @ bv.T),
            (b, lambda g: av.T @ g),
        ))
    if av.ndim == 1 and bv.ndim == 2:
        if av.shape[0] != bv.shape[0]:
            raise ShapeError(f"matmul: {av.shape} @ {bv.shape}")
        out = av @ bv
        return Var(out, (
            (a, lambda g: bv @ g),
            (b, lambda g: np.outer(av, g)),
        ))
    raise ShapeError(f"matmul: unsupported ranks {av.ndim} @ {bv.ndim}")


def transpose(a) -> Var:
    a = as_var(a)
    return Var(a.value.T, ((a, lambda g: g.T),))


def relu(a) -> Var:
    a = as_var(a)
    mask = a.value > 0
    return Var(np.where(mask, a.value, 0.0), ((a, lambda g: g * mask),))


def tanh(a) -> Var:
    a = as_var(a)
    out = np.tanh(a.value)
    return Var(out, ((a, lambda g: g * (1.0 - out * out)),))


def sqrt(a) -> Var:
    a = as_var(a)
    if np.any(a.value < 0):
        raise DomainError("sqrt of negative value")
    out = np.sqrt(a.value)
    return Var(out, ((a, lambda g: g * 0.5 / out),))


def sum_all(a) -> Var:
    a = as_var(a)
    return Var(np.asarray(a.value.sum()), ((a, lambda g: np.broadcast_to(g, a.value.shape).copy()),))


def sum_rows(a) -> Var:
    """Row sums of a 2-d array: (m,n) -> (m,)."""
    a = as_var(a)
    if a.value.ndim != 2:
        raise ShapeError(f"sum_rows expects 2-d, got {a.value.shape}")
    return Var(a.value.sum(axis=1), ((a, lambda g: np.repeat(g[:, None], a.value.shape[1], axis=1)),))


def dot(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    if a.value.shape != b.value.shape or a.value.ndim != 1:
        raise ShapeError(f"dot: {a.value.shape} . {b.value.shape}")
    return Var(np.asarray(a.value @ b.value), (
        (a, lambda g: g * b.value),
        (b, lambda g: g * a.value),
    ))


def stack_rows(rows: Sequence) -> Var:
    """Stack 1-d vars into a 2-d matrix, one per row."""
    rvars = [as_var(r) for r in rows]
    out = np.stack([r.value for r in rvars])

    def make_vjp(i):
        return lambda g: g[i]

    return Var(out, tuple((r, make_vjp(i)) for i, r in enumerate(rvars)))


def concat(parts: Sequence, axis: int = 0) -> Var:
    """Concatenate along ``axis`` (0 for vectors, 1 for row-batched inputs)."""
    pvars = [as_var(p) for p in parts]
    out = np.concatenate([p.value for p in pvars], axis=axis)
    offsets = np.cumsum([0] + [p.value.shape[axis] for p in pvars])

    def make_vjp(i):
        sl = [slice(None)] * out.ndim
        sl[axis] = slice(offsets[i], offsets[i + 1])
        sl = tuple(sl)
        return lambda g: g[sl]

    return Var(out, tuple((p, make_vjp(i)) for i, p in enumerate(pvars)))


def repeat_rows(v, n: int) -> Var:
    """Tile a 1-d vector into an (n, len) matrix."""
    v = as_var(v)
    if v.value.ndim != 1:
        raise ShapeError(f"repeat_rows expects 1-d, got {v.value.shape}")
    out = np.repeat(v.value[None, :], n, axis=0)
    return Var(out, ((v, lambda g: g.sum(axis=0)),))


def repeat_each_row(a, k: int) -> Var:
    """(m, n) -> (m*k, n), each row repeated k times consecutively."""
    a = as_var(a)
    m, n = a.value.shape
    out = np.repeat(a.value, k, axis=0)
    return Var(out, ((a, lambda g: g.reshape(m, k, n).sum(axis=1)),))


def tile_rows(a, k: int) -> Var:
    """(m, n) -> (k*m, n), the whole block repeated k times."""
    a = as_var(a)
    m, n = a.value.shape
    out = np.tile(a.value, (k, 1))
    return Var(out, ((a, lambda g: g.reshape(k, m, n).sum(axis=0)),))


def row(a, i: int) -> Var:
    """Select row ``i`` of a 2-d var; gradient scatters back into the matrix."""
    a = as_var(a)

    def vjp(g):
        full = np.zeros_like(a.value)
        full[i] = g
        return full

    return Var(a.value[i], ((a, vjp),))


def take_rows(a, idx: Sequence[int]) -> Var:
    """Gather rows ``idx`` of a 2-d var; gradient scatter-adds (repeats allowed)."""
    a = as_var(a)
    idx = list(idx)

    def vjp(g):
        full = np.zeros_like(a.value)
        np.add.at(full, idx, g)
        return full

    return Var(a.value[idx], ((a, vjp),))


def slice1d(a, start: int, stop: int) -> Var:
    a = as_var(a)
    if a.value.ndim != 1:
        raise ShapeError(f"slice1d expects 1-d, got {a.value.shape}")

    def vjp(g):
        full = np.zeros_like(a.value)
        full[start:stop] = g
        return full

    return Var(a.value[start:stop], ((a, vjp),))


def at(a, i: int) -> Var:
    """Scalar element of a 1-d var."""
    a = as_var(a)

    def vjp(g):
        full = np.zeros_like(a.value)
        full[i] = g
        return full

    return Var(np.asarray(a.value[i]), ((a, vjp),))


def reshape(a, shape: tuple[int, ...]) -> Var:
    a = as_var(a)
    orig = a.value.shape
    return Var(a.value.reshape(shape), ((a, lambda g: g.reshape(orig)),))


def norm(a) -> Var:
    """Euclidean norm of a 1-d var."""
    return sqrt(sum_all(mul(a, a)))


def cosine_distance_var(v1, v2) -> Var:
    """1 - cos(v1, v2) as a differentiable node; raises on zero-norm input."""
    v1, v2 = as_var(v1), as_var(v2)
    if v1.value.shape != v2.value.shape or v1.value.ndim != 1:
        raise ShapeError(f"cosine distance: {v1.value.shape} vs {v2.value.shape}")
    if np.linalg.norm(v1.value) == 0.0 or np.linalg.norm(v2.value) == 0.0:
        raise DomainError("cosine distance undefined for zero-norm input")
    return sub(as_var(1.0), div(dot(v1, v2), mul(norm(v1), norm(v2))))


def rowwise_cosine_distance(mat, v) -> Var:
    """Distances 1 - cos(row_i, v) for every row of a 2-d var: (m,n),(n,) -> (m,)."""
    mat, v = as_var(mat), as_var(v)
    if mat.value.ndim != 2 or mat.value.shape[1] != v.value.shape[0]:
        raise ShapeError(f"rowwise cosine: {mat.value.shape} vs {v.value.shape}")
    row_norms = np.sqrt((mat.value * mat.value).sum(axis=1))
    if np.any(row_norms == 0.0) or np.linalg.norm(v.value) == 0.0:
        raise DomainError("cosine distance undefined for zero-norm input")
    sims = div(matmul(mat, v), mul(sqrt(sum_rows(mul(mat, mat))), norm(v)))
    return sub(as_var(1.0), sims)


def softmax_cross_entropy(logits, target: int) -> tuple[Var, Array]:
    """Stable softmax cross-entropy against ``target``.

    Returns ``(loss, probs)``: the scalar loss node and the plain probability
    vector (no gradient flows through ``probs``).
    """
    lv = as_var(logits)
    z = lv.value
    if z.ndim != 1:
        raise ShapeError(f"logits must be 1-d, got {z.shape}")
    if not 0 <= target < z.shape[0]:
        raise IndexError(f"target {target} out of range for {z.shape[0]} logits")
    m = z.max()
    exps = np.exp(z - m)
    total = exps.sum()
    probs = exps / total
    loss = float(np.log(total) + m - z[target])

    def vjp(g):
        out = probs.copy()
        out[target] -= 1.0
        return g * out

    return Var(np.asarray(loss), ((lv, vjp),)), probs


def softmax_cross_entropy_rows(logits, targets: Sequence[int]) -> Var:
    """Mean cross-entropy over the rows of a (T, C) logit matrix."""
    lv = as_var(logits)
    z = lv.value
    if z.ndim != 2:
        raise ShapeError(f"row logits must be 2-d, got {z.shape}")
    t = np.asarray(targets, dtype=np.int64)
    if t.shape != (z.shape[0],):
        raise ShapeError(f"targets shape {t.shape} != ({z.shape[0]},)")
    if np.any(t < 0) or np.any(t >= z.shape[1]):
        raise IndexError("row target out of range")
    m = z.max(axis=1, keepdims=True)
    exps = np.exp(z - m)
    totals = exps.sum(axis=1, keepdims=True)
    probs = exps / totals
    rows = np.arange(z.shape[0])
    losses = np.log(totals[:, 0]) + m[:, 0] - z[rows, t]
    n = z.shape[0]

    def vjp(g):
        out = probs.copy()
        out[rows, t] -= 1.0
        return (g / n) * out

    return Var(np.asarray(losses.mean()), ((lv, vjp),))


def softmax_cross_entropy_groups(logits, offsets: Sequence[int], targets: Sequence[int]) -> Var:
    """Mean cross-entropy over variable-size groups of a flat logit vector.

    Group ``i`` spans ``logits[offsets[i]:offsets[i+1]]``; ``targets[i]`` is
    the group-local index of its true entry.
    """
    lv = as_var(logits)
    z = lv.value
    if z.ndim != 1:
        raise ShapeError(f"group logits must be 1-d, got {z.shape}")
    n_groups = len(offsets) - 1
    if n_groups < 1 or len(targets) != n_groups:
        raise UsageError("need one target per group")
    probs_all = np.zeros_like(z)
    total_loss = 0.0
    for i in range(n_groups):
        lo, hi = offsets[i], offsets[i + 1]
        if hi <= lo:
            raise UsageError(f"group {i} is empty")
        seg = z[lo:hi]
        tgt = targets[i]
        if not 0 <= tgt < hi - lo:
            raise IndexError(f"target {tgt} out of range for group of {hi - lo}")
        m = seg.max()
        exps = np.exp(seg - m)
        total = exps.sum()
        probs_all[lo:hi] = exps / total
        total_loss += float(np.log(total) + m - seg[tgt])

    def vjp(g):
        out = probs_all.copy()
        for i in range(n_groups):
            out[offsets[i] + targets[i]] -= 1.0
        return (g / n_groups) * out

    return Var(np.asarray(total_loss / n_groups), ((lv, vjp),))


def log_softmax(logits: Array) -> Array:
    """Plain log-softmax on a 1-d array (no tape)."""
    z = np.asarray(logits, dtype=np.float64)
    m = z.max()
    shifted = z - m
    return shifted - np.log(np.exp(shifted).sum())


def backward(loss: Var) -> None:
    """Accumulate gradients of a scalar ``loss`` into every reachable node."""
    if loss.value.shape != ():
        raise UsageError(f"backward needs a scalar loss, got shape {loss.value.shape}")
    order: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    loss.grad = np.asarray(1.0)
    for node in reversed(order):
        if node.grad is None:
            continue
        for parent, vjp in node.parents:
            contrib = vjp(node.grad)
            if parent.grad is None:
                parent.grad = np.zeros_like(parent.value)
            parent.grad = parent.grad + contrib


LossFn = Callable[[Dict[str, Var]], Var]


def grad(f: LossFn, params: Mapping[str, Array]) -> Dict[str, Array]:
    """Exact reverse-mode gradients of the scalar ``f`` at ``params``.

    ``f`` receives a dict of leaf Vars (same keys) and must return a scalar
    Var built from kernel operations. Unused parameters get zero gradients.
    """
    leaves = {k: leaf(v) for k, v in params.items()}
    out = f(leaves)
    if not isinstance(out, Var):
        raise UsageError("loss function must return a Var")
    backward(out)
    return {
        k: (v.grad if v.grad is not None else np.zeros_like(v.value))
        for k, v in leaves.items()
    }


def value_of(f: LossFn, params: Mapping[str, Array]) -> float:
    wrapped = {k: Var(np.asarray(v, dtype=np.float64)) for k, v in params.items()}
    return float(f(wrapped).value)


def finite_diff_check(f: LossFn, params: Mapping[str, Array], eps: float = 1e-5) -> float:
    """Max relative error between analytic gradients and central differences.

    Per coordinate the error is |analytic - numeric| / max(1, |numeric|); the
    return value is the max over every coordinate of every parameter.
    """
    if eps <= 0:
        raise UsageError("eps must be positive")
    analytic = grad(f, params)
    worst = 0.0
    for name, base in params.items():
        base = np.asarray(base, dtype=np.float64)
        flat = base.reshape(-1)
        for i in range(flat.size):
            bumped = dict(params)
            plus = flat.copy()
            plus[i] += eps
            bumped[name] = plus.reshape(base.shape)
            f_plus = value_of(f, bumped)
            minus = flat.copy()
            minus[i] -= eps
            bumped[name] = minus.reshape(base.shape)
            f_minus = value_of(f, bumped)
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = analytic[name].reshape(-1)[i]
            err = abs(a - numeric) / max(1.0, abs(numeric))
            worst = max(worst, err)
    return worst
