"""Reverse-mode automatic differentiation over numpy arrays.

A deliberately small tape: sixteen-odd operations are enough to express the
training losses, including the path that backpropagates through sampled
completions (reparameterized Gaussian draws feeding later forward passes).
Tensor operands receive gradients; plain ndarrays are constants.  Scalar
reductions and their gradients dispatch through :mod:`moarm.kernels`.
"""

from __future__ import annotations

import numpy as np

from . import kernels


class Tensor:
    """A node in the computation graph: value plus backward closures."""

    __slots__ = ("data", "grad", "parents")

    def __init__(self, data, parents=()):
        self.data = data
        self.grad = None
        # parents: tuple of (Tensor, grad_fn) where grad_fn maps the output
        # gradient to this parent's gradient contribution.
        self.parents = parents

    @property
    def shape(self):
        return np.shape(self.data)

    def backward(self):
        if np.ndim(self.data) != 0:
            raise ValueError("backward() requires a scalar root")
        order = _toposort(self)
        self.grad = 1.0
        for node in order:
            g = node.grad
            if g is None:
                continue
            for parent, grad_fn in node.parents:
                contrib = grad_fn(g)
                if contrib is None:
                    continue
                if parent.grad is None:
                    parent.grad = contrib
                else:
                    parent.grad = parent.grad + contrib


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    order.reverse()
    return order


def _val(x):
    return x.data if isinstance(x, Tensor) else x


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    # reduce a gradient back to an operand that was broadcast up
    if np.shape(g) == tuple(shape):
        return g
    nd_extra = np.ndim(g) - len(shape)
    if nd_extra > 0:
        g = g.sum(axis=tuple(range(nd_extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _binary(out_data, a, b, da, db) -> Tensor:
    parents = []
    if isinstance(a, Tensor):
        parents.append((a, da))
    if isinstance(b, Tensor):
        parents.append((b, db))
    return Tensor(out_data, tuple(parents))


def matmul(a, b) -> Tensor:
    av, bv = _val(a), _val(b)
    return _binary(av @ bv, a, b, lambda g: g @ bv.T, lambda g: av.T @ g)


def add(a, b) -> Tensor:
    av, bv = _val(a), _val(b)
    return _binary(
        av + bv,
        a,
        b,
        lambda g: _unbroadcast(g, np.shape(av)),
        lambda g: _unbroadcast(g, np.shape(bv)),
    )


def mul(a, b) -> Tensor:
    av, bv = _val(a), _val(b)
    return _binary(
        av * bv,
        a,
        b,
        lambda g: _unbroadcast(g * bv, np.shape(av)),
        lambda g: _unbroadcast(g * av, np.shape(bv)),
    )


def silu(a: Tensor) -> Tensor:
    av = _val(a)
    out = kernels.silu_fwd(av)
    if not isinstance(a, Tensor):
        return Tensor(out)
    return Tensor(out, ((a, lambda g: kernels.silu_bwd(av, g)),))


def clamp(a, lo: float, hi: float) -> Tensor:
    av = _val(a)
    out = np.clip(av, lo, hi)
    if not isinstance(a, Tensor):
        return Tensor(out)
    inside = (av > lo) & (av < hi)
    return Tensor(out, ((a, lambda g: g * inside),))


def hstack(parts) -> Tensor:
    vals = [_val(p) for p in parts]
    out = np.concatenate(vals, axis=1)
    parents = []
    col = 0
    for p, v in zip(parts, vals):
        w = v.shape[1]
        if isinstance(p, Tensor):
            lo = col
            parents.append((p, lambda g, lo=lo, w=w: g[:, lo : lo + w]))
        col += w
    return Tensor(out, tuple(parents))


def gather_rows(a, idx: np.ndarray) -> Tensor:
    """out[i, j] = a[i, idx[i, j]] for a row-indexed column gather."""
    av = _val(a)
    rows = np.arange(av.shape[0])[:, None]
    out = av[rows, idx]
    if not isinstance(a, Tensor):
        return Tensor(out)

    def da(g):
        acc = np.zeros_like(av)
        np.add.at(acc, (rows, idx), g)
        return acc

    return Tensor(out, ((a, da),))


def scatter_add_rows(a, b, idx: np.ndarray) -> Tensor:
    """out = a with b[i, j] added at column idx[i, j] of row i."""
    av, bv = _val(a), _val(b)
    out = np.array(av, copy=True)
    rows = np.arange(out.shape[0])[:, None]
    np.add.at(out, (rows, idx), bv)
    return _binary(out, a, b, lambda g: g, lambda g: g[rows, idx])


def gauss_sample(mu, logs, eps: np.ndarray) -> Tensor:
    """Reparameterized draw mu + exp(logs) * eps with eps held constant."""
    muv, lsv = _val(mu), _val(logs)
    sig = np.exp(lsv)
    out = muv + sig * eps
    return _binary(out, mu, logs, lambda g: g, lambda g: g * sig * eps)


def gauss_wsum(mu, logs, x, w: np.ndarray) -> Tensor:
    """Weighted sum of Gaussian log-densities; scalar output."""
    muv, lsv, xv = _val(mu), _val(logs), _val(x)
    out = kernels.gauss_wsum(muv, lsv, xv, w)
    parents = []
    cache: dict[str, tuple] = {}

    def grads(g):
        if "g" not in cache or cache["g"] is not g:
            cache["g"] = g
            cache["v"] = kernels.gauss_wsum_bwd(muv, lsv, xv, w, float(g))
        return cache["v"]

    if isinstance(mu, Tensor):
        parents.append((mu, lambda g: grads(g)[0]))
    if isinstance(logs, Tensor):
        parents.append((logs, lambda g: grads(g)[1]))
    if isinstance(x, Tensor):
        parents.append((x, lambda g: grads(g)[2]))
    return Tensor(out, tuple(parents))


def bce_wsum(logits, y: np.ndarray, w: np.ndarray) -> Tensor:
    """Weighted Bernoulli log-likelihood of labels y under the logits."""
    zv = _val(logits)
    out = kernels.bce_wsum(zv, y, w)
    if not isinstance(logits, Tensor):
        return Tensor(out)
    return Tensor(out, ((logits, lambda g: kernels.bce_wsum_bwd(zv, y, w, float(g))),))


def anneal(a: Tensor, alpha: float) -> Tensor:
    """Identity on values; scales the backward flow by alpha.

    Equivalent to stopgrad(a) + alpha * (a - stopgrad(a)).  At alpha == 0 the
    graph is cut outright so upstream parameters see no gradient term at all.
    """
    av = _val(a)
    if not isinstance(a, Tensor) or alpha == 0.0:
        return Tensor(av)
    return Tensor(av, ((a, lambda g: g * alpha),))


def scale(a: Tensor, c: float) -> Tensor:
    av = _val(a)
    if not isinstance(a, Tensor):
        return Tensor(av * c)
    return Tensor(av * c, ((a, lambda g: g * c),))
