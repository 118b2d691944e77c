"""Vectorised forward-mode dual numbers.

A :class:`Dual` holds a value array of shape ``S`` and a tangent array of shape
``S + (k,)``, one column per active seed direction. Model code written against
plain numpy (``+``, ``*``, ``@``, ``np.tanh``, ...) runs unchanged on duals; the
few structural helpers that numpy cannot dispatch (stacking, concatenation,
scatter, linear solves) live in this module and accept plain arrays too.

Comparisons read values only. ``abs`` and ``sqrt`` take tangent 0 at 0.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .errors import NonFiniteGradient

__all__ = [
    "Dual",
    "is_dual",
    "value",
    "tangent_width",
    "stack",
    "concat",
    "scatter",
    "solve",
    "lstsq",
    "seed",
    "gradient",
    "finite_difference_gradient",
]


def _bcast_tangent(t, shape):
    if t.shape[:-1] == shape:
        return t
    return np.broadcast_to(t, tuple(shape) + t.shape[-1:])


class Dual:
    __slots__ = ("value", "tangent")
    __array_priority__ = 1000

    def __init__(self, value, tangent):
        self.value = np.asarray(value, dtype=float)
        self.tangent = np.asarray(tangent, dtype=float)

    @classmethod
    def constant(cls, value, k):
        value = np.asarray(value, dtype=float)
        return cls(value, np.zeros(value.shape + (k,)))

    # ---- array-like surface -------------------------------------------------
    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def size(self):
        return self.value.size

    @property
    def k(self):
        return self.tangent.shape[-1]

    def __len__(self):
        return len(self.value)

    def __getitem__(self, idx):
        return Dual(self.value[idx], self.tangent[idx])

    def __iter__(self):
        for i in range(len(self.value)):
            yield self[i]

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        v = self.value.reshape(shape)
        return Dual(v, self.tangent.reshape(v.shape + (self.k,)))

    def ravel(self):
        return self.reshape(-1)

    @property
    def T(self):
        if self.ndim < 2:
            return self
        return Dual(self.value.T, np.swapaxes(self.tangent, 0, 1))

    def copy(self):
        return Dual(self.value.copy(), self.tangent.copy())

    def __float__(self):
        return float(self.value)

    def __repr__(self):
        return f"Dual(value={self.value!r}, k={self.k})"

    # ---- arithmetic ---------------------------------------------------------
    def __neg__(self):
        return Dual(-self.value, -self.tangent)

    def __pos__(self):
        return self

    def __add__(self, other):
        if isinstance(other, Dual):
            v = self.value + other.value
            return Dual(v, _bcast_tangent(self.tangent, v.shape) + _bcast_tangent(other.tangent, v.shape))
        v = self.value + other
        return Dual(v, _bcast_tangent(self.tangent, v.shape))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            v = self.value - other.value
            return Dual(v, _bcast_tangent(self.tangent, v.shape) - _bcast_tangent(other.tangent, v.shape))
        v = self.value - other
        return Dual(v, _bcast_tangent(self.tangent, v.shape))

    def __rsub__(self, other):
        v = other - self.value
        return Dual(v, -_bcast_tangent(self.tangent, v.shape))

    def __mul__(self, other):
        if isinstance(other, Dual):
            v = self.value * other.value
            t = self.tangent * other.value[..., None] + other.tangent * self.value[..., None]
            return Dual(v, _bcast_tangent(t, v.shape))
        o = np.asarray(other, dtype=float)
        v = self.value * o
        return Dual(v, _bcast_tangent(self.tangent * o[..., None], v.shape))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            v = self.value / other.value
            t = (self.tangent - other.tangent * v[..., None]) / other.value[..., None]
            return Dual(v, _bcast_tangent(t, v.shape))
        o = np.asarray(other, dtype=float)
        v = self.value / o
        return Dual(v, _bcast_tangent(self.tangent / o[..., None], v.shape))

    def __rtruediv__(self, other):
        o = np.asarray(other, dtype=float)
        v = o / self.value
        t = -self.tangent * (v / self.value)[..., None]
        return Dual(v, _bcast_tangent(t, v.shape))

    def __pow__(self, n):
        if isinstance(n, Dual):
            raise TypeError("dual exponents are not supported")
        v = self.value**n
        d = n * self.value ** (n - 1) if n != 0 else np.zeros_like(self.value)
        return Dual(v, self.tangent * np.asarray(d)[..., None])

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    # ---- comparisons on values ------------------------------------------------
    def __lt__(self, other):
        return self.value < value(other)

    def __le__(self, other):
        return self.value <= value(other)

    def __gt__(self, other):
        return self.value > value(other)

    def __ge__(self, other):
        return self.value >= value(other)

    # ---- numpy ufunc dispatch -------------------------------------------------
    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        if method != "__call__" or kwargs.get("out") is not None:
            return NotImplemented
        fn = _UFUNCS.get(ufunc)
        if fn is None:
            return NotImplemented
        return fn(*inputs)


def is_dual(x) -> bool:
    return isinstance(x, Dual)


def value(x):
    """Strip tangents; plain inputs pass through unchanged."""
    return x.value if isinstance(x, Dual) else x


def tangent_width(*xs) -> int | None:
    for x in xs:
        if isinstance(x, Dual):
            return x.k
    return None


def matmul(a, b):
    if isinstance(a, Dual) and isinstance(b, Dual):
        v = a.value @ b.value
        return Dual(v, _matmul_dual_plain(a.tangent, b.value, a.ndim) + _matmul_plain_dual(a.value, b.tangent))
    if isinstance(a, Dual):
        b = np.asarray(b, dtype=float)
        return Dual(a.value @ b, _matmul_dual_plain(a.tangent, b, a.ndim))
    a = np.asarray(a, dtype=float)
    return Dual(a @ b.value, _matmul_plain_dual(a, b.tangent))


def _matmul_plain_dual(a, bt):
    if a.ndim == 2 and bt.ndim == 2:
        return a @ bt
    return np.tensordot(a, bt, axes=([a.ndim - 1], [0]))


def _matmul_dual_plain(at, b, a_ndim):
    if b.ndim == 1 and a_ndim == 2:
        return np.einsum("ijk,j->ik", at, b)
    r = np.tensordot(at, b, axes=([a_ndim - 1], [0]))
    return np.moveaxis(r, a_ndim - 1, -1)


def _tanh(x):
    v = np.tanh(x.value)
    return Dual(v, x.tangent * (1.0 - v * v)[..., None])


def _sqrt(x):
    v = np.sqrt(x.value)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.where(v > 0.0, 0.5 / np.where(v > 0.0, v, 1.0), 0.0)
    return Dual(v, x.tangent * d[..., None])


def _abs(x):
    return Dual(np.abs(x.value), x.tangent * np.sign(x.value)[..., None])


def _exp(x):
    v = np.exp(x.value)
    return Dual(v, x.tangent * v[..., None])


def _log(x):
    return Dual(np.log(x.value), x.tangent / x.value[..., None])


def _sin(x):
    return Dual(np.sin(x.value), x.tangent * np.cos(x.value)[..., None])


def _cos(x):
    return Dual(np.cos(x.value), -x.tangent * np.sin(x.value)[..., None])


def _binary(op):
    def f(a, b):
        if isinstance(a, Dual):
            return op(a, b)
        # plain left operand: route through the reflected dual method
        return _REFLECTED[op](b, a)

    return f


_REFLECTED = {
    Dual.__add__: Dual.__radd__,
    Dual.__sub__: Dual.__rsub__,
    Dual.__mul__: Dual.__rmul__,
    Dual.__truediv__: Dual.__rtruediv__,
    matmul: lambda b, a: matmul(a, b),
}

_UFUNCS: dict[np.ufunc, Callable] = {
    np.add: _binary(Dual.__add__),
    np.subtract: _binary(Dual.__sub__),
    np.multiply: _binary(Dual.__mul__),
    np.true_divide: _binary(Dual.__truediv__),
    np.matmul: _binary(matmul),
    np.negative: Dual.__neg__,
    np.positive: Dual.__pos__,
    np.tanh: _tanh,
    np.sqrt: _sqrt,
    np.absolute: _abs,
    np.exp: _exp,
    np.log: _log,
    np.sin: _sin,
    np.cos: _cos,
    np.square: lambda x: x * x,
}


# ---- structural helpers ---------------------------------------------------------


def stack(items, axis=0):
    """``np.stack`` that tolerates a mix of floats, arrays and duals."""
    k = tangent_width(*items)
    if k is None:
        return np.stack([np.asarray(i, dtype=float) for i in items], axis=axis)
    vals = [np.asarray(value(i), dtype=float) for i in items]
    tans = [i.tangent if isinstance(i, Dual) else np.zeros(np.shape(v) + (k,)) for i, v in zip(items, vals)]
    ax = axis if axis >= 0 else axis - 1
    return Dual(np.stack(vals, axis=axis), np.stack(tans, axis=ax))


def concat(items):
    """Concatenate 1-D vectors (plain or dual) into one vector."""
    k = tangent_width(*items)
    if k is None:
        return np.concatenate([np.asarray(i, dtype=float).ravel() for i in items])
    vals = [np.asarray(value(i), dtype=float).ravel() for i in items]
    tans = [
        i.tangent.reshape(-1, k) if isinstance(i, Dual) else np.zeros((v.size, k)) for i, v in zip(items, vals)
    ]
    return Dual(np.concatenate(vals), np.concatenate(tans, axis=0))


def scatter(base, mask, values):
    """Copy of ``base`` with ``base[mask] = values`` (row-major order)."""
    base = np.asarray(base, dtype=float)
    if isinstance(values, Dual):
        v = base.copy()
        v[mask] = values.value
        t = np.zeros(base.shape + (values.k,))
        t[mask] = values.tangent.reshape(-1, values.k)
        return Dual(v, t)
    v = base.copy()
    v[mask] = values
    return v


def solve(a, b):
    """Dense linear solve with tangents via ``dx = A^-1 (db - dA x)``."""
    if not isinstance(a, Dual) and not isinstance(b, Dual):
        return np.linalg.solve(a, b)
    av = value(a)
    x = np.linalg.solve(av, value(b))
    k = tangent_width(a, b)
    rhs = np.zeros(x.shape + (k,))
    if isinstance(b, Dual):
        rhs = rhs + b.tangent
    if isinstance(a, Dual):
        rhs = rhs - _matmul_dual_plain(a.tangent, x, 2)
    return Dual(x, np.linalg.solve(av, rhs))


def lstsq(a, b):
    """Minimum-norm least-squares solution of ``a x = b`` for plain arrays."""
    return np.linalg.lstsq(np.asarray(a, dtype=float), np.asarray(b, dtype=float), rcond=None)[0]


# ---- gradients ----------------------------------------------------------------


def seed(params, start, stop):
    """Dual view of ``params`` seeded on the coordinates ``start:stop``."""
    params = np.asarray(params, dtype=float)
    k = stop - start
    t = np.zeros((params.size, k))
    t[np.arange(start, stop), np.arange(k)] = 1.0
    return Dual(params.copy(), t)


def gradient(loss_fn, params, chunk=None, return_value=False):
    """Gradient of a scalar ``loss_fn`` by forward sweeps of ``chunk`` seeds.

    The loss value is taken from the first sweep; every sweep evaluates the same
    value path, so it matches an undifferentiated call bitwise.
    """
    params = np.asarray(params, dtype=float)
    n = params.size
    chunk = n if chunk is None else int(chunk)
    if chunk < 1:
        raise ValueError("chunk must be >= 1")
    grad = np.zeros(n)
    loss_value = None
    for start in range(0, max(n, 1), chunk):
        stop = min(start + chunk, n)
        out = loss_fn(seed(params, start, stop))
        if isinstance(out, Dual):
            g = out.tangent.reshape(-1)
            v = float(out.value)
        else:
            g = np.zeros(stop - start)
            v = float(out)
        grad[start:stop] = g
        if loss_value is None:
            loss_value = v
    bad = np.flatnonzero(~np.isfinite(grad))
    if bad.size:
        raise NonFiniteGradient(int(bad[0]))
    if return_value:
        return grad, loss_value
    return grad


def finite_difference_gradient(loss_fn, params, h=1e-6, indices=None):
    """Central differences with step ``h * (1 + |p_i|)``."""
    if h <= 0:
        raise ValueError("h must be positive")
    params = np.asarray(params, dtype=float)
    idx = range(params.size) if indices is None else indices
    grad = np.zeros(params.size)
    for i in idx:
        step = h * (1.0 + abs(params[i]))
        hi = params.copy()
        lo = params.copy()
        hi[i] += step
        lo[i] -= step
        g = (float(value(loss_fn(hi))) - float(value(loss_fn(lo)))) / (2.0 * step)
        if not math.isfinite(g):
            raise NonFiniteGradient(int(i))
        grad[i] = g
    return grad
