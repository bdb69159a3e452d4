"""Reverse-mode automatic differentiation over numpy arrays.

A tiny tape: each :class:`Var` remembers the operation that produced it and a
vector-Jacobian closure.  ``backward`` walks the graph once in reverse
topological order and accumulates gradients by summation.  Reductions use
numpy's fixed-order kernels, so a given graph always produces bit-identical
gradients.

Custom primitives (rasterization, convolution, ...) plug in through
:func:`custom`, which is the same mechanism the built-in ops use.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import eigen3


class AutodiffUsageError(RuntimeError):
    """Misuse of the engine (non-scalar backward, shape mismatch, ...)."""


class NonFiniteGradientError(RuntimeError):
    """A NaN or Inf appeared in a gradient; names the offending node."""


class Var:
    """A numpy array tracked for differentiation.

    The gradient slot always matches ``value`` in shape and accumulates
    (sums) contributions from every use of the variable.
    """

    __slots__ = ("value", "grad", "parents", "vjp", "name", "requires_grad")

    def __init__(self, value, name: str = "leaf", requires_grad: bool = True):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.parents: tuple[Var, ...] = ()
        self.vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.name = name
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var({self.name}, shape={self.value.shape})"

    # Operator sugar; constants are wrapped on the fly.
    def __add__(self, other):
        return add(self, as_var(other))

    def __radd__(self, other):
        return add(as_var(other), self)

    def __sub__(self, other):
        return sub(self, as_var(other))

    def __rsub__(self, other):
        return sub(as_var(other), self)

    def __mul__(self, other):
        return mul(self, as_var(other))

    def __rmul__(self, other):
        return mul(as_var(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, as_var(other))


def as_var(x) -> Var:
    if isinstance(x, Var):
        return x
    return Var(x, name="const", requires_grad=False)


def constant(x, name: str = "const") -> Var:
    return Var(x, name=name, requires_grad=False)


def custom(
    value: np.ndarray,
    parents: Sequence[Var],
    vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]],
    name: str,
) -> Var:
    """Create a graph node for a user-defined primitive.

    ``vjp(upstream)`` must return one cotangent (or None) per parent.  This is
    the hook the differentiable renderer uses to splice its adjoint into the
    graph.
    """
    req = any(p.requires_grad for p in parents)
    out = Var(value, name=name, requires_grad=req)
    if req:
        out.parents = tuple(parents)
        out.vjp = vjp
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcasted gradient back down to ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# Elementwise and linear-algebra primitives
# ---------------------------------------------------------------------------


def add(a: Var, b: Var) -> Var:
    a, b = as_var(a), as_var(b)
    return custom(
        a.value + b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.value.shape), _unbroadcast(g, b.value.shape)),
        "add",
    )


def sub(a: Var, b: Var) -> Var:
    a, b = as_var(a), as_var(b)
    return custom(
        a.value - b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.value.shape), _unbroadcast(-g, b.value.shape)),
        "sub",
    )


def mul(a: Var, b: Var) -> Var:
    a, b = as_var(a), as_var(b)
    return custom(
        a.value * b.value,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.value, a.value.shape),
            _unbroadcast(g * a.value, b.value.shape),
        ),
        "mul",
    )


def neg(a: Var) -> Var:
    return custom(-a.value, (a,), lambda g: (-g,), "neg")


def abs_(a: Var) -> Var:
    # Subgradient at 0 is 0, so a perfect fit has exactly zero gradient.
    return custom(np.abs(a.value), (a,), lambda g: (g * np.sign(a.value),), "abs")


def exp(a: Var) -> Var:
    out_val = np.exp(a.value)
    return custom(out_val, (a,), lambda g: (g * out_val,), "exp")


def relu(a: Var) -> Var:
    mask = a.value > 0.0
    return custom(np.maximum(a.value, 0.0), (a,), lambda g: (g * mask,), "relu")


def sqrt(a: Var) -> Var:
    """Square root with subgradient 0 at exactly 0 (keeps norms of zero
    residuals inert instead of producing Inf)."""
    out_val = np.sqrt(a.value)
    safe = np.where(out_val > 0.0, out_val, 1.0)
    deriv = np.where(out_val > 0.0, 0.5 / safe, 0.0)
    return custom(out_val, (a,), lambda g: (g * deriv,), "sqrt")


def matmul(a: Var, b: Var) -> Var:
    a, b = as_var(a), as_var(b)
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise AutodiffUsageError("matmul expects 2-D operands")
    return custom(
        a.value @ b.value,
        (a, b),
        lambda g: (g @ b.value.T, a.value.T @ g),
        "matmul",
    )


def sum_(a: Var, axis=None) -> Var:
    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.value.shape).copy(),)
        gx = np.expand_dims(g, axis)
        return (np.broadcast_to(gx, a.value.shape).copy(),)

    return custom(np.sum(a.value, axis=axis), (a,), vjp, "sum")


def mean_(a: Var, axis=None) -> Var:
    count = a.value.size if axis is None else a.value.shape[axis]

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g / count, a.value.shape).copy(),)
        gx = np.expand_dims(g / count, axis)
        return (np.broadcast_to(gx, a.value.shape).copy(),)

    return custom(np.mean(a.value, axis=axis), (a,), vjp, "mean")


def reshape(a: Var, shape) -> Var:
    old = a.value.shape
    return custom(
        a.value.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape"
    )


def stack_last(items: Sequence[Var]) -> Var:
    items = [as_var(x) for x in items]
    value = np.stack([x.value for x in items], axis=-1)

    def vjp(g):
        return tuple(g[..., k] for k in range(len(items)))

    return custom(value, items, vjp, "stack")


def gather_rows(a: Var, index: np.ndarray) -> Var:
    """``a[index]`` along the first axis; adjoint scatter-adds (np.add.at,
    which processes indices in order and is therefore deterministic)."""
    index = np.asarray(index)

    def vjp(g):
        out = np.zeros_like(a.value)
        np.add.at(out, index, g)
        return (out,)

    return custom(a.value[index], (a,), vjp, "gather")


def det3x3(a: Var) -> Var:
    """Determinant of batched 3x3 matrices; adjoint is the cofactor matrix."""
    if a.value.shape[-2:] != (3, 3):
        raise AutodiffUsageError("det3x3 expects (..., 3, 3) input")
    val = eigen3.det3(a.value)

    def vjp(g):
        return (g[..., None, None] * eigen3.cofactor3(a.value),)

    return custom(val, (a,), vjp, "det3x3")


def sym_eigvals3x3(a: Var) -> Var:
    """Eigenvalues (descending) of batched symmetric 3x3 matrices.

    Adjoint uses d(lam_k) = v_k^T dC v_k; near-degenerate pairs fall back to
    a symmetrized subspace adjoint (see :mod:`sftkit.eigen3`).
    """
    if a.value.shape[-2:] != (3, 3):
        raise AutodiffUsageError("sym_eigvals3x3 expects (..., 3, 3) input")
    val = eigen3.sym_eigvals3(a.value)

    def vjp(g):
        return (eigen3.eigvals_adjoint(a.value, g),)

    return custom(val, (a,), vjp, "sym_eigvals3x3")


def centered_covariance3(diffs: Var, counts: np.ndarray) -> Var:
    """Per-vertex covariance ``C_v = (1/n_v) sum_n d_vn d_vn^T``.

    ``diffs`` is (V, N, 3) with padded rows already zeroed; ``counts`` is the
    number of live rows per vertex.
    """
    counts = np.asarray(counts, dtype=np.float64)
    inv = 1.0 / counts
    val = np.einsum("vnd,vne->vde", diffs.value, diffs.value) * inv[:, None, None]

    def vjp(g):
        sym = g + np.swapaxes(g, -1, -2)
        return (
            np.einsum("vde,vne->vnd", sym, diffs.value) * inv[:, None, None],
        )

    return custom(val, (diffs,), vjp, "covariance3")


def detach(a: Var, name: str = "detached") -> Var:
    """A constant copy of ``a``: gradients do not flow through it."""
    return Var(a.value if isinstance(a, Var) else a, name=name, requires_grad=False)


# ---------------------------------------------------------------------------
# Backward pass
# ---------------------------------------------------------------------------


def _toposort(out: Var) -> list[Var]:
    order: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(out, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    return order


def backward(out: Var, dump_grad_norms: str | None = None) -> None:
    """Accumulate gradients of the scalar ``out`` into every reachable Var.

    Visits each node exactly once in reverse topological order.  Raises
    :class:`NonFiniteGradientError` naming the producing node if any cotangent
    is NaN/Inf.  ``dump_grad_norms`` optionally writes one CSV row per node.
    """
    if out.value.size != 1:
        raise AutodiffUsageError(
            f"backward requires a scalar output, got shape {out.value.shape}"
        )
    order = _toposort(out)
    for node in order:
        node.grad = np.zeros_like(node.value)
    out.grad = np.ones_like(out.value)

    rows = []
    for node in reversed(order):
        if node.vjp is None:
            continue
        grads = node.vjp(node.grad)
        if len(grads) != len(node.parents):
            raise AutodiffUsageError(f"vjp of {node.name} returned wrong arity")
        for parent, g in zip(node.parents, grads):
            if g is None or not parent.requires_grad:
                continue
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradientError(
                    f"non-finite gradient produced by node '{node.name}'"
                )
            if parent.grad is None:
                parent.grad = np.zeros_like(parent.value)
            parent.grad += g
        if dump_grad_norms is not None:
            rows.append(
                f"{node.name},{'x'.join(map(str, node.value.shape))},"
                f"{float(np.linalg.norm(node.grad))!r}\n"
            )
    if dump_grad_norms is not None:
        with open(dump_grad_norms, "w") as fh:
            fh.write("node,shape,grad_norm\n")
            fh.writelines(rows)


def evaluate_with_gradients(program, inputs: Sequence[np.ndarray]):
    """Run ``program`` on fresh leaves, backpropagate, return (value, grads)."""
    leaves = [Var(np.array(x, dtype=np.float64)) for x in inputs]
    out = program(*leaves)
    backward(out)
    return float(out.value), [leaf.grad for leaf in leaves]


# ---------------------------------------------------------------------------
# Finite-difference validation harness
# ---------------------------------------------------------------------------


@dataclass
class FDFailure:
    input_index: int
    coord: tuple[int, ...]
    analytic: float
    numeric: float
    rel_error: float


@dataclass
class FDReport:
    passed: bool
    max_rel_error: float
    n_checked: int
    failures: list[FDFailure] = field(default_factory=list)
    per_coord: list = field(default_factory=list)  # (input_idx, coord, rel_error)

    def __str__(self):
        status = "pass" if self.passed else "FAIL"
        return (
            f"[{status}] checked {self.n_checked} coords, "
            f"max rel error {self.max_rel_error:.3e}"
            + (f", {len(self.failures)} failing" if self.failures else "")
        )


def finite_difference_check(
    program,
    inputs: Sequence[np.ndarray],
    h: float = 1e-5,
    tol: float = 1e-4,
    coords: Sequence[tuple[int, tuple[int, ...]]] | None = None,
    max_coords_per_input: int | None = None,
    rng: np.random.Generator | None = None,
    zero_floor: float = 1e-10,
) -> FDReport:
    """Compare analytic gradients against central finite differences.

    ``program`` maps leaf Vars to a scalar Var.  By default every coordinate
    of every input is checked; pass ``coords`` (list of (input_idx, nd-index))
    or ``max_coords_per_input`` with an ``rng`` to sample.  Coordinates where
    both gradients are below ``zero_floor`` count as passing (a zero function
    has matching zero gradients).
    """
    inputs = [np.array(x, dtype=np.float64) for x in inputs]
    _, grads = evaluate_with_gradients(program, inputs)

    if coords is None:
        coords = []
        for i, x in enumerate(inputs):
            all_idx = list(np.ndindex(x.shape))
            if max_coords_per_input is not None and len(all_idx) > max_coords_per_input:
                if rng is None:
                    rng = np.random.default_rng(0)
                pick = rng.choice(len(all_idx), size=max_coords_per_input, replace=False)
                all_idx = [all_idx[int(j)] for j in sorted(pick)]
            coords.extend((i, idx) for idx in all_idx)

    def eval_at(xs):
        leaves = [constant(x) for x in xs]
        return float(program(*leaves).value)

    max_rel = 0.0
    failures: list[FDFailure] = []
    per_coord = []
    for i, idx in coords:
        xp = [x.copy() for x in inputs]
        xm = [x.copy() for x in inputs]
        xp[i][idx] += h
        xm[i][idx] -= h
        numeric = (eval_at(xp) - eval_at(xm)) / (2.0 * h)
        analytic = float(grads[i][idx])
        denom = max(abs(analytic), abs(numeric))
        if denom < zero_floor:
            per_coord.append((i, idx, 0.0))
            continue
        rel = abs(analytic - numeric) / denom
        per_coord.append((i, idx, rel))
        max_rel = max(max_rel, rel)
        if rel > tol:
            failures.append(FDFailure(i, idx, analytic, numeric, rel))
    return FDReport(not failures, max_rel, len(coords), failures, per_coord)
