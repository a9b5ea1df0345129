"""Minimal reverse-mode automatic differentiation over numpy arrays.

Every operation returns a :class:`Var` that remembers its parents together with
a vector-Jacobian product for each of them. The recorded graph is the tape:
:func:`gradient` walks it backwards from a scalar and accumulates adjoints in a
local dictionary, so nodes are never mutated and a graph built against frozen
parameters can be differentiated from several threads at once.

Matrix products that touch the input go through ``einsum`` rather than BLAS.
That keeps every row of a batch numerically independent of the other rows,
which is what lets a batched counterfactual search reproduce the sequential
one bit for bit.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import ConfigurationError

Vjp = Callable[[np.ndarray], np.ndarray]


class Var:
    __slots__ = ("value", "parents", "requires_grad")

    def __init__(self, value, parents: Sequence[tuple["Var", Vjp]] = (), requires_grad: bool = False):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = tuple(parents)
        self.requires_grad = requires_grad or bool(self.parents)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def __float__(self) -> float:
        if self.value.size != 1:
            raise TypeError(f"only scalar Vars convert to float, got shape {self.shape}")
        return float(self.value.reshape(()))

    def __repr__(self) -> str:
        return f"Var({self.value!r}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Var):
            raise NotImplementedError("division by a Var is not supported")
        return mul(self, 1.0 / float(other))

    def __neg__(self):
        return neg(self)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None):
        return vsum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)


def as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def variable(value) -> Var:
    """Leaf node whose gradient is wanted."""
    return Var(np.array(value, dtype=np.float64), requires_grad=True)


def _node(value, *links: tuple[Var, Vjp]) -> Var:
    live = [(p, fn) for p, fn in links if p.requires_grad]
    return Var(value, live)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    out = a.value + b.value
    return _node(out, (a, lambda g: _unbroadcast(g, a.shape)), (b, lambda g: _unbroadcast(g, b.shape)))


def sub(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    out = a.value - b.value
    return _node(out, (a, lambda g: _unbroadcast(g, a.shape)), (b, lambda g: -_unbroadcast(g, b.shape)))


def neg(a: Var) -> Var:
    return _node(-a.value, (a, lambda g: -g))


def mul(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    out = a.value * b.value
    return _node(
        out,
        (a, lambda g: _unbroadcast(g * b.value, a.shape)),
        (b, lambda g: _unbroadcast(g * a.value, b.shape)),
    )


def linear(x: Var, weight: Var, bias: Var | None = None) -> Var:
    """``x @ weight.T + bias`` for a batch ``x`` of shape (n, in)."""
    x, weight = as_var(x), as_var(weight)
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ConfigurationError(f"cannot apply weight {weight.shape} to input {x.shape}")
    out = np.einsum("ni,oi->no", x.value, weight.value)
    node = _node(
        out,
        (x, lambda g: np.einsum("no,oi->ni", g, weight.value)),
        (weight, lambda g: g.T @ x.value),
    )
    if bias is None:
        return node
    bias = as_var(bias)
    if bias.shape != (weight.shape[0],):
        raise ConfigurationError(f"bias shape {bias.shape} does not match {weight.shape[0]} outputs")
    return add(node, bias)


def relu(a: Var) -> Var:
    mask = a.value > 0
    return _node(np.where(mask, a.value, 0.0), (a, lambda g: g * mask))


def vabs(a: Var) -> Var:
    return _node(np.abs(a.value), (a, lambda g: g * np.sign(a.value)))


def square(a: Var) -> Var:
    return _node(a.value * a.value, (a, lambda g: 2.0 * g * a.value))


def exp(a: Var) -> Var:
    out = np.exp(a.value)
    return _node(out, (a, lambda g: g * out))


def vsum(a: Var, axis: int | None = None) -> Var:
    out = a.value.sum(axis=axis)

    def vjp(g):
        if axis is None:
            return np.broadcast_to(g, a.shape).copy()
        return np.broadcast_to(np.expand_dims(g, axis), a.shape).copy()

    return _node(out, (a, vjp))


def mean(a: Var, axis: int | None = None) -> Var:
    n = a.value.size if axis is None else a.shape[axis]
    return vsum(a, axis) / n


def getitem(a: Var, index) -> Var:
    out = a.value[index]

    def vjp(g):
        full = np.zeros_like(a.value)
        np.add.at(full, index, g)
        return full

    return _node(out, (a, vjp))


def pick(a: Var, classes: np.ndarray) -> Var:
    """Row-wise gather: ``a[i, classes[i]]`` for a 2-D ``a``."""
    classes = np.asarray(classes, dtype=np.intp)
    rows = np.arange(a.shape[0])
    out = a.value[rows, classes]

    def vjp(g):
        full = np.zeros_like(a.value)
        full[rows, classes] = g
        return full

    return _node(out, (a, vjp))


def logsumexp(a: Var) -> Var:
    """Max-shifted log-sum-exp over the last axis of a 2-D ``a``."""
    shift = a.value.max(axis=-1, keepdims=True)
    e = np.exp(a.value - shift)
    s = e.sum(axis=-1, keepdims=True)
    out = (np.log(s) + shift)[..., 0]
    probs = e / s
    return _node(out, (a, lambda g: g[..., None] * probs))


def gradient(target: Var, sources: Iterable[Var]) -> list[np.ndarray]:
    """Gradients of a scalar ``target`` with respect to each of ``sources``."""
    sources = list(sources)
    if target.value.size != 1:
        raise ConfigurationError(f"gradient needs a scalar target, got shape {target.shape}")

    order: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(target, False)]
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

    adjoint: dict[int, np.ndarray] = {id(target): np.ones_like(target.value)}
    for node in reversed(order):
        g = adjoint.get(id(node))
        if g is None:
            continue
        for parent, vjp in node.parents:
            contrib = vjp(g)
            key = id(parent)
            if key in adjoint:
                adjoint[key] = adjoint[key] + contrib
            else:
                adjoint[key] = contrib

    return [
        adjoint[id(s)].reshape(s.shape) if id(s) in adjoint else np.zeros_like(s.value)
        for s in sources
    ]
