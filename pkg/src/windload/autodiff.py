"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

Just enough ops for the surrogate: affine maps, neighborhood averaging via a
constant sparse operator, layer norm, pointwise nonlinearities, and a mean
squared error head. Gradients accumulate into ``Tensor.grad`` on a call to
``backward``; evaluation order is the reverse of construction order, so runs
are bit-reproducible.

Backward closures report whether the gradient array they hand over is
freshly allocated (``own=True``) or aliases another tensor's gradient;
shared arrays are copied lazily only if a second contribution arrives.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "_parents", "_back", "_grad_shared")

    def __init__(self, data, parents=(), back=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._parents = parents
        self._back = back
        self._grad_shared = False

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"


def _acc(t: Tensor, g: np.ndarray, own: bool) -> None:
    if t.grad is None:
        t.grad = g
        t._grad_shared = not own
    else:
        if t._grad_shared:
            t.grad = t.grad.copy()
            t._grad_shared = False
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple) -> tuple[np.ndarray, bool]:
    """Reduce a gradient onto a broadcast operand; returns (grad, fresh)."""
    fresh = False
    while g.ndim > len(shape):
        g = g.sum(axis=0)
        fresh = True
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
            fresh = True
    return g, fresh


def backward(out: Tensor) -> None:
    """Seed d(out)/d(out) = 1 and push gradients to every reachable leaf."""
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack = [(out, False)]
    while stack:
        node, done = stack.pop()
        if done:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))
    out.grad = np.ones_like(out.data)
    out._grad_shared = False
    for node in reversed(topo):
        if node._back is not None:
            node._back(node.grad)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data @ b.data, (a, b))

    def back(g):
        _acc(a, g @ b.data.T, own=True)
        _acc(b, a.data.T @ g, own=True)

    out._back = back
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data + b.data, (a, b))

    def back(g):
        ga, fa = _unbroadcast(g, a.data.shape)
        _acc(a, ga, own=fa)
        gb, fb = _unbroadcast(g, b.data.shape)
        _acc(b, gb, own=fb)

    out._back = back
    return out


def affine(x: Tensor, w: Tensor, bias: Tensor) -> Tensor:
    """Fused ``x @ w + bias``."""
    val = x.data @ w.data
    val += bias.data
    out = Tensor(val, (x, w, bias))

    def back(g):
        _acc(x, g @ w.data.T, own=True)
        _acc(w, x.data.T @ g, own=True)
        _acc(bias, g.sum(axis=0), own=True)

    out._back = back
    return out


def affine_pair(x: Tensor, m: Tensor, w_x: Tensor, w_m: Tensor, bias: Tensor) -> Tensor:
    """Fused ``x @ w_x + m @ w_m + bias``."""
    val = x.data @ w_x.data
    val += m.data @ w_m.data
    val += bias.data
    out = Tensor(val, (x, m, w_x, w_m, bias))

    def back(g):
        _acc(x, g @ w_x.data.T, own=True)
        _acc(m, g @ w_m.data.T, own=True)
        _acc(w_x, x.data.T @ g, own=True)
        _acc(w_m, m.data.T @ g, own=True)
        _acc(bias, g.sum(axis=0), own=True)

    out._back = back
    return out


def scale(a: Tensor, c: float) -> Tensor:
    out = Tensor(a.data * c, (a,))

    def back(g):
        _acc(a, g * c, own=True)

    out._back = back
    return out


def relu(a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.data, 0.0), (a,))

    def back(g):
        _acc(a, g * (out.data > 0.0), own=True)

    out._back = back
    return out


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)
    out = Tensor(t, (a,))

    def back(g):
        _acc(a, g * (1.0 - t * t), own=True)

    out._back = back
    return out


def neighbor_mean(x: Tensor, op, op_t) -> Tensor:
    """Rows averaged over graph neighborhoods: forward ``op @ x`` with a
    constant row-normalized adjacency, backward through its transpose."""
    out = Tensor(op @ x.data, (x,))

    def back(g):
        _acc(x, op_t @ g, own=True)

    out._back = back
    return out


def layer_norm(x: Tensor, gain: Tensor, shift: Tensor, eps: float = 1e-5) -> Tensor:
    """Row-wise normalization with learned gain and shift; rows are 2D only."""
    h = x.data.shape[1]
    mu = x.data.mean(axis=1, keepdims=True)
    xhat = x.data - mu
    var = (np.einsum("ij,ij->i", xhat, xhat) / h)[:, None]
    inv = 1.0 / np.sqrt(var + eps)
    xhat *= inv
    val = xhat * gain.data
    val += shift.data
    out = Tensor(val, (x, gain, shift))

    def back(g):
        _acc(gain, np.einsum("ij,ij->j", g, xhat), own=True)
        _acc(shift, g.sum(axis=0), own=True)
        dxhat = g * gain.data
        m1 = dxhat.mean(axis=1, keepdims=True)
        m2 = (np.einsum("ij,ij->i", dxhat, xhat) / h)[:, None]
        dxhat -= m1
        dxhat -= xhat * m2
        dxhat *= inv
        _acc(x, dxhat, own=True)

    out._back = back
    return out


def fold_mean(a: Tensor, n: int) -> Tensor:
    """Average the first and second halves of the leading axis:
    0.5 * (a[:n] + a[n:]). The halves must partition the rows exactly."""
    if a.data.shape[0] != 2 * n:
        raise ValueError("fold_mean needs exactly 2n rows")
    out = Tensor(0.5 * (a.data[:n] + a.data[n:]), (a,))

    def back(g):
        _acc(a, np.concatenate([g, g], axis=0) * 0.5, own=True)

    out._back = back
    return out


def reshape(a: Tensor, shape) -> Tensor:
    out = Tensor(a.data.reshape(shape), (a,))

    def back(g):
        _acc(a, g.reshape(a.data.shape), own=False)

    out._back = back
    return out


def mse(pred: Tensor, target: np.ndarray) -> Tensor:
    resid = pred.data - target
    out = Tensor(np.mean(resid * resid), (pred,))

    def back(g):
        _acc(pred, resid * (g * 2.0 / resid.size), own=True)

    out._back = back
    return out
