"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

Operations are recorded on the active :class:`Tape` (entered with ``with
Tape() as tape:``). Outside a tape, or when no operand requires a gradient,
operations just compute values, which keeps finite-difference and evaluation
passes cheap.

    >>> x = Tensor([1.0, 2.0], requires_grad=True)
    >>> with Tape() as tape:
    ...     y = reduce(x, "sum")
    ...     tape.backward(y)
    >>> x.grad
    array([1., 1.])

Gradients accumulate (``+=``) across ``backward`` calls until
:meth:`Tensor.zero_grad` is called.
"""

from __future__ import annotations

import contextvars
import itertools
import math
from typing import Callable, Sequence

import numpy as np

from phvae.errors import DimensionError, DomainError

_ids = itertools.count()
_active_tape: contextvars.ContextVar[Tape | None] = contextvars.ContextVar("phvae_tape", default=None)


class Tensor:
    __slots__ = ("values", "grad", "requires_grad", "parents", "backward_fn", "op", "node_id")

    def __init__(self, values, requires_grad: bool = False):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.parents: tuple[Tensor, ...] = ()
        self.backward_fn: Callable | None = None
        self.op = "leaf"
        self.node_id = next(_ids)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def is_leaf(self) -> bool:
        return not self.parents

    def item(self) -> float:
        return float(self.values.reshape(-1)[0]) if self.values.size == 1 else float("nan")

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op!r})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Records derived tensors in creation order, which is a topological order."""

    def __init__(self):
        self.records: list[Tensor] = []
        self._token = None

    def __enter__(self) -> Tape:
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, *exc):
        _active_tape.reset(self._token)
        self._token = None
        return False

    def backward(self, root: Tensor) -> None:
        """Populate ``grad`` on every tensor reachable from ``root``."""
        if root.values.size != 1:
            raise DimensionError(f"backward needs a scalar root, got shape {root.shape}")
        if not root.requires_grad:
            return
        adjoint: dict[int, np.ndarray] = {root.node_id: np.ones_like(root.values)}
        touched: dict[int, Tensor] = {root.node_id: root}
        for node in reversed(self.records):
            g = adjoint.get(node.node_id)
            if g is None:
                continue
            for parent, pg in zip(node.parents, node.backward_fn(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if parent.node_id in adjoint:
                    adjoint[parent.node_id] = adjoint[parent.node_id] + pg
                else:
                    adjoint[parent.node_id] = pg
                    touched[parent.node_id] = parent
        for nid, t in touched.items():
            t.grad = adjoint[nid] if t.grad is None else t.grad + adjoint[nid]


def backward(root: Tensor, tape: Tape | None = None) -> None:
    tape = tape or _active_tape.get()
    if tape is None:
        raise RuntimeError("backward called with no tape")
    tape.backward(root)


def _make(values: np.ndarray, parents: Sequence[Tensor], backward_fn: Callable, op: str) -> Tensor:
    out = Tensor(values)
    tape = _active_tape.get()
    if tape is None or not any(p.requires_grad for p in parents):
        return out
    out.requires_grad = True
    out.parents = tuple(parents)
    out.backward_fn = backward_fn
    out.op = op
    tape.records.append(out)
    return out


# --------------------------------------------------------------------------- ops


def affine(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    """``W @ x + b`` for a vector ``x`` of shape (m,), or row-wise for a batch (n, m)."""
    xv, Wv, bv = x.values, W.values, b.values
    if Wv.ndim != 2 or bv.shape != (Wv.shape[0],) or xv.ndim not in (1, 2) or xv.shape[-1] != Wv.shape[1]:
        raise DimensionError(f"affine: cannot apply W{Wv.shape}, b{bv.shape} to x{xv.shape}")
    out = xv @ Wv.T + bv

    def grads(g):
        if xv.ndim == 1:
            return g @ Wv, np.outer(g, xv), g
        return g @ Wv, g.T @ xv, g.sum(axis=0)

    return _make(out, (x, W, b), grads, "affine")


def activation(x: Tensor, kind: str) -> Tensor:
    xv = x.values
    if kind == "relu":
        mask = xv > 0
        return _make(np.where(mask, xv, 0.0), (x,), lambda g: (g * mask,), kind)
    if kind == "sigmoid":
        # split by sign so exp never overflows
        e = np.exp(-np.abs(xv))
        y = np.where(xv >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
        return _make(y, (x,), lambda g: (g * y * (1.0 - y),), kind)
    if kind == "tanh":
        y = np.tanh(xv)
        return _make(y, (x,), lambda g: (g * (1.0 - y * y),), kind)
    raise ValueError(f"unknown activation {kind!r}; expected relu, sigmoid or tanh")


def _check_same(a: Tensor, b: Tensor, kind: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{kind}: shapes {a.shape} and {b.shape} differ")


def pointwise(a: Tensor, b=None, kind: str = "add") -> Tensor:
    """Elementwise ``add``, ``sub``, ``mul``, ``scale``, ``exp``, ``log``, ``square``.

    For binary kinds ``b`` is a tensor of the same shape, an array (wrapped as a
    constant) or a Python scalar. ``scale`` multiplies by the scalar ``b``.
    """
    av = a.values
    if kind == "exp":
        y = np.exp(av)
        return _make(y, (a,), lambda g: (g * y,), kind)
    if kind == "log":
        bad = ~(av > 0)
        if bad.any():
            idx = tuple(int(i) for i in np.argwhere(bad)[0])
            raise DomainError(f"log of non-positive value {av[idx]!r} at index {idx}")
        return _make(np.log(av), (a,), lambda g: (g / av,), kind)
    if kind == "square":
        return _make(av * av, (a,), lambda g: (2.0 * g * av,), kind)
    if kind == "scale":
        c = float(b)
        return _make(av * c, (a,), lambda g: (g * c,), kind)

    if kind not in ("add", "sub", "mul"):
        raise ValueError(f"unknown pointwise kind {kind!r}")
    if np.isscalar(b):
        c = float(b)
        if kind == "add":
            return _make(av + c, (a,), lambda g: (g,), kind)
        if kind == "sub":
            return _make(av - c, (a,), lambda g: (g,), kind)
        return _make(av * c, (a,), lambda g: (g * c,), kind)
    b = as_tensor(b)
    _check_same(a, b, kind)
    bv = b.values
    if kind == "add":
        return _make(av + bv, (a, b), lambda g: (g, g), kind)
    if kind == "sub":
        return _make(av - bv, (a, b), lambda g: (g, -g), kind)
    return _make(av * bv, (a, b), lambda g: (g * bv, g * av), kind)


def add(a, b):
    return pointwise(a, b, "add")


def sub(a, b):
    return pointwise(a, b, "sub")


def mul(a, b):
    return pointwise(a, b, "mul")


def scale(a, c):
    return pointwise(a, c, "scale")


def exp(a):
    return pointwise(a, kind="exp")


def log(a):
    return pointwise(a, kind="log")


def square(a):
    return pointwise(a, kind="square")


def reduce(x: Tensor, kind: str = "sum", target=None) -> Tensor:
    """``sum`` -> sum(x); ``mse_sum`` -> sum((x - target)**2). Both return shape ()."""
    xv = x.values
    if kind == "sum":
        return _make(np.asarray(xv.sum()), (x,), lambda g: (np.full_like(xv, g),), kind)
    if kind == "mse_sum":
        if target is None:
            raise ValueError("mse_sum needs a target")
        t = as_tensor(target)
        if t.shape != x.shape:
            raise DimensionError(f"mse_sum: prediction {x.shape} vs target {t.shape}")
        d = xv - t.values
        return _make(np.asarray((d * d).sum()), (x, t), lambda g: (2.0 * g * d, -2.0 * g * d), kind)
    raise ValueError(f"unknown reduction {kind!r}")


def logsumexp_branches(branches: Sequence[Tensor], S: int | None = None) -> Tensor:
    """``log(sum_s exp(v_s)) - log(S)`` elementwise across equally shaped branches."""
    if not branches:
        raise ValueError("logsumexp_branches needs at least one branch")
    S = len(branches) if S is None else S
    if S != len(branches) or S < 1:
        raise ValueError(f"S={S} but {len(branches)} branches given")
    for v in branches[1:]:
        _check_same(branches[0], v, "logsumexp_branches")
    stack = np.stack([v.values for v in branches])
    m = stack.max(axis=0)
    e = np.exp(stack - m)
    s = e.sum(axis=0)
    out = m + (np.log(s) - math.log(S))
    w = e / s

    def grads(g):
        return tuple(g * w[i] for i in range(S))

    return _make(out, tuple(branches), grads, "logsumexp")


def segment(flat: Tensor, start: int, shape: tuple[int, ...]) -> Tensor:
    """A reshaped contiguous slice of a 1-D tensor; used to unpack flat parameter vectors."""
    n = int(np.prod(shape))
    fv = flat.values
    if fv.ndim != 1 or start < 0 or start + n > fv.size:
        raise DimensionError(f"segment [{start}:{start + n}] out of range for shape {fv.shape}")
    out = fv[start:start + n].reshape(shape).copy()

    def grads(g):
        full = np.zeros_like(fv)
        full[start:start + n] = g.reshape(-1)
        return (full,)

    return _make(out, (flat,), grads, "segment")


# ----------------------------------------------------------------- verification


def grad_check(f: Callable[[Tensor], Tensor], theta, h: float = 1e-5) -> float:
    """Max over coordinates of ``|analytic - central| / max(1, |analytic|)``.

    ``f`` maps a flat parameter tensor to a scalar tensor and must be
    deterministic. Returns ``inf`` if any evaluation is non-finite.
    """
    theta = np.array(theta, dtype=np.float64).reshape(-1)
    leaf = Tensor(theta.copy(), requires_grad=True)
    with Tape() as tape:
        out = f(leaf)
        if not np.isfinite(out.values).all():
            return float("inf")
        tape.backward(out)
    analytic = leaf.grad if leaf.grad is not None else np.zeros_like(theta)

    worst = 0.0
    for i in range(theta.size):
        tp = theta.copy()
        tp[i] += h
        tm = theta.copy()
        tm[i] -= h
        fp = float(f(Tensor(tp)).values)
        fm = float(f(Tensor(tm)).values)
        central = (fp - fm) / (2.0 * h)
        if not math.isfinite(central):
            return float("inf")
        err = abs(analytic[i] - central) / max(1.0, abs(analytic[i]))
        worst = max(worst, err)
    return worst
