"""Minimal reverse-mode autodiff over float64 numpy arrays.

The operator vocabulary is fixed and small: elementwise arithmetic,
exp/log/sqrt/tanh, ReLU, matmul, 2-D convolution, global average pooling,
reductions, row gathering, concatenation, Cholesky (with jitter schedule)
and triangular solves, plus fused stationary-kernel profiles evaluated on
squared distances.  Everything the model graph needs, nothing more.

Gradients accumulate on `Tensor.grad` during `backward`; a global
`no_grad()` context disables taping for pure evaluation paths.
"""

from __future__ import annotations

import contextlib

import numpy as np
from scipy.linalg import solve_triangular

from .errors import NotPositiveDefinite, ShapeMismatch

DEFAULT_JITTER_SCHEDULE = (0.0, 1e-8, 1e-6, 1e-4)

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled():
    return _GRAD_ENABLED


class Tensor:
    """A float64 array plus an optional backward closure."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, check_finite=False):
        arr = np.asarray(data, dtype=np.float64)
        if check_finite and not np.all(np.isfinite(arr)):
            raise ShapeMismatch("tensor constructed from non-finite external data")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    # operator sugar -----------------------------------------------------
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __truediv__(self, other):
        return div(self, _as_tensor(other))

    def __rtruediv__(self, other):
        return div(_as_tensor(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))

    def __pow__(self, k):
        return pow_const(self, k)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward):
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad or p._parents for p in parents):
        out._parents = tuple(parents)
        out._backward = backward
        out.requires_grad = True
    return out


def _unbroadcast(g, shape):
    """Sum `g` down to `shape` (reverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# elementwise ------------------------------------------------------------

def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data + b.data

    def backward(g):
        a.accumulate(_unbroadcast(g, a.data.shape))
        b.accumulate(_unbroadcast(g, b.data.shape))

    return _make(out_data, (a, b), backward)


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data - b.data

    def backward(g):
        a.accumulate(_unbroadcast(g, a.data.shape))
        b.accumulate(_unbroadcast(-g, b.data.shape))

    return _make(out_data, (a, b), backward)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data * b.data

    def backward(g):
        a.accumulate(_unbroadcast(g * b.data, a.data.shape))
        b.accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _make(out_data, (a, b), backward)


def div(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data / b.data

    def backward(g):
        a.accumulate(_unbroadcast(g / b.data, a.data.shape))
        b.accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _make(out_data, (a, b), backward)


def neg(a):
    def backward(g):
        a.accumulate(-g)

    return _make(-a.data, (a,), backward)


def pow_const(a, k):
    k = float(k)
    out_data = a.data ** k

    def backward(g):
        a.accumulate(g * k * a.data ** (k - 1.0))

    return _make(out_data, (a,), backward)


def exp(a):
    out_data = np.exp(a.data)

    def backward(g):
        a.accumulate(g * out_data)

    return _make(out_data, (a,), backward)


def log(a):
    def backward(g):
        a.accumulate(g / a.data)

    return _make(np.log(a.data), (a,), backward)


def sqrt(a):
    out_data = np.sqrt(a.data)

    def backward(g):
        a.accumulate(g * 0.5 / out_data)

    return _make(out_data, (a,), backward)


def tanh(a):
    out_data = np.tanh(a.data)

    def backward(g):
        a.accumulate(g * (1.0 - out_data * out_data))

    return _make(out_data, (a,), backward)


def relu(a):
    mask = a.data > 0.0
    out_data = np.where(mask, a.data, 0.0)

    def backward(g):
        a.accumulate(g * mask)

    return _make(out_data, (a,), backward)


def square(a):
    return mul(a, a)


# shape / structure ------------------------------------------------------

def reshape(a, shape):
    old = a.data.shape
    out_data = a.data.reshape(shape)

    def backward(g):
        a.accumulate(g.reshape(old))

    return _make(out_data, (a,), backward)


def transpose(a):
    def backward(g):
        a.accumulate(g.T)

    return _make(a.data.T, (a,), backward)


def concat(tensors, axis=0):
    tensors = [_as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            t.accumulate(g[tuple(idx)])

    return _make(out_data, tuple(tensors), backward)


def gather_rows(a, index):
    index = np.asarray(index, dtype=np.intp)
    out_data = a.data[index]

    def backward(g):
        acc = np.zeros_like(a.data)
        np.add.at(acc, index, g)
        a.accumulate(acc)

    return _make(out_data, (a,), backward)


def sum_(a, axis=None, keepdims=False):
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            a.accumulate(np.broadcast_to(g, a.data.shape).copy())
            return
        gg = g
        if not keepdims:
            axes = axis if isinstance(axis, tuple) else (axis,)
            axes = tuple(ax % a.data.ndim for ax in axes)
            for ax in sorted(axes):
                gg = np.expand_dims(gg, ax)
        a.accumulate(np.broadcast_to(gg, a.data.shape).copy())

    return _make(out_data, (a,), backward)


def mean_(a, axis=None, keepdims=False):
    if axis is None:
        count = a.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = 1
        for ax in axes:
            count *= a.data.shape[ax]
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / count)


# linear algebra ---------------------------------------------------------

def matmul(a, b):
    out_data = a.data @ b.data

    def backward(g):
        a.accumulate(g @ b.data.T)
        b.accumulate(a.data.T @ g)

    return _make(out_data, (a, b), backward)


def cholesky_with_jitter(m, schedule=DEFAULT_JITTER_SCHEDULE):
    """Numpy-level Cholesky of a symmetric matrix, trying jitters in order.

    Returns (L, jitter_used).  Raises NotPositiveDefinite when the whole
    schedule fails, ShapeMismatch when `m` is not square-symmetric within
    1e-10 relative tolerance.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeMismatch(f"cholesky needs a square matrix, got {m.shape}")
    scale = max(np.abs(m).max(), 1e-300)
    if np.abs(m - m.T).max() > 1e-10 * max(scale, 1.0):
        raise ShapeMismatch("cholesky input is not symmetric within tolerance")
    eye = np.eye(m.shape[0])
    for j in schedule:
        try:
            return np.linalg.cholesky(m + j * eye), float(j)
        except np.linalg.LinAlgError:
            continue
    raise NotPositiveDefinite(
        f"matrix not positive definite for any jitter in {tuple(schedule)}"
    )


def cholesky(a, schedule=DEFAULT_JITTER_SCHEDULE):
    """Graph op: lower Cholesky factor of a + jI (smallest working jitter).

    The chosen jitter is treated as a constant of the graph.  Backward is
    the standard triangular-solve formula, symmetrized because the input
    is symmetric by contract.
    """
    L, j = cholesky_with_jitter(a.data, schedule)

    def backward(g):
        p = np.tril(L.T @ g)
        d = np.diag_indices_from(p)
        p[d] *= 0.5
        tmp = solve_triangular(L, p, lower=True, trans="T")
        sbar = solve_triangular(L, tmp.T, lower=True, trans="T").T
        a.accumulate(0.5 * (sbar + sbar.T))

    out = _make(L, (a,), backward)
    return out, j


def solve_lower(l, b, trans=False):
    """Graph op: X = L^{-1} B (or L^{-T} B when trans), L lower-triangular."""
    t = "T" if trans else "N"
    x = solve_triangular(l.data, b.data, lower=True, trans=t)

    def backward(g):
        if not trans:
            gb = solve_triangular(l.data, g, lower=True, trans="T")
            l.accumulate(np.tril(-gb @ x.T))
            b.accumulate(gb)
        else:
            gb = solve_triangular(l.data, g, lower=True, trans="N")
            l.accumulate(np.tril(-x @ gb.T))
            b.accumulate(gb)

    return _make(x, (l, b), backward)


def lower_from_packed(v, m):
    """Build an m x m lower-triangular matrix from a packed row-major
    vector of length m(m+1)/2, exponentiating the diagonal entries so the
    factor has a strictly positive diagonal."""
    rows, cols = np.tril_indices(m)
    diag_mask = rows == cols
    out_data = np.zeros((m, m))
    vals = v.data.copy()
    vals[diag_mask] = np.exp(vals[diag_mask])
    out_data[rows, cols] = vals

    def backward(g):
        gv = g[rows, cols].copy()
        gv[diag_mask] *= vals[diag_mask]
        v.accumulate(gv)

    return _make(out_data, (v,), backward)


# convolution / pooling --------------------------------------------------

def conv2d(x, w, b=None):
    """Same-padded stride-1 conv: x (N,C,H,W), w (F,C,kh,kw), b (F,)."""
    n, c, h, wd = x.data.shape
    f, c2, kh, kw = w.data.shape
    if c != c2:
        raise ShapeMismatch(f"conv2d channels mismatch: {c} vs {c2}")
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    col = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * wd, c * kh * kw)
    wmat = w.data.reshape(f, c * kh * kw)
    out_data = col @ wmat.T
    if b is not None:
        out_data = out_data + b.data
    out_data = out_data.reshape(n, h, wd, f).transpose(0, 3, 1, 2)

    def backward(g):
        g2 = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(n * h * wd, f)
        w.accumulate((g2.T @ col).reshape(f, c, kh, kw))
        if b is not None:
            b.accumulate(g2.sum(axis=0))
        gcol = (g2 @ wmat).reshape(n, h, wd, c, kh, kw)
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i:i + h, j:j + wd] += gcol[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        x.accumulate(gxp[:, :, ph:ph + h, pw:pw + wd])

    parents = (x, w) if b is None else (x, w, b)
    return _make(out_data, parents, backward)


def global_avg_pool(x):
    """Adaptive average pooling to 1x1: (N,C,H,W) -> (N,C)."""
    return mean_(x, axis=(2, 3))


# fused stationary kernel profiles ----------------------------------------

_SQRT5 = np.sqrt(5.0)


def matern52_profile(u):
    """Matern-5/2 correlation as a function of squared scaled distance.

    phi(u) = (1 + sqrt(5) r + (5/3) u) exp(-sqrt(5) r), r = sqrt(max(u, 0)).
    The derivative w.r.t. u is smooth through r = 0, which is why the
    profile is fused instead of composed from sqrt.
    """
    uc = np.maximum(u.data, 0.0)
    r = np.sqrt(uc)
    e = np.exp(-_SQRT5 * r)
    out_data = (1.0 + _SQRT5 * r + (5.0 / 3.0) * uc) * e

    def backward(g):
        du = -(5.0 / 6.0) * (1.0 + _SQRT5 * r) * e
        u.accumulate(g * du * (u.data > 0.0))

    return _make(out_data, (u,), backward)


def rbf_profile(u):
    """Squared-exponential correlation on squared scaled distance."""
    uc = np.maximum(u.data, 0.0)
    out_data = np.exp(-0.5 * uc)

    def backward(g):
        u.accumulate(g * (-0.5 * out_data) * (u.data > 0.0))

    return _make(out_data, (u,), backward)


# engine -----------------------------------------------------------------

def backward(out, seed=None):
    """Reverse-mode sweep from `out`, accumulating into `.grad` fields."""
    topo = []
    visited = set()
    stack = [(out, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited and (p._parents or p.requires_grad):
                stack.append((p, False))
    if seed is None:
        seed = np.ones_like(out.data)
    out.grad = np.asarray(seed, dtype=np.float64).reshape(out.data.shape).copy()
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    # intermediate grads are not needed by callers; free them
    for node in topo:
        if node._parents and node is not out:
            node.grad = None
