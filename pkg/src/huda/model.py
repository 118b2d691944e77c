"""The common model interface: continuous dynamics, outputs, event conditions
and event affects over a state split into continuous and discrete parts."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import DimensionMismatch, NoEventFlagged

EMPTY = np.zeros(0)


@dataclass(frozen=True)
class Dims:
    n_xc: int = 0
    n_xd: int = 0
    n_u: int = 0
    n_y: int = 0
    n_z: int = 0
    n_p: int = 0

    def __post_init__(self):
        for name, v in vars(self).items():
            if int(v) != v or v < 0:
                raise ValueError(f"{name} must be a nonnegative integer, got {v!r}")

    @property
    def n_x(self) -> int:
        return self.n_xc + self.n_xd


class SuperDenseTime(NamedTuple):
    """Physical time plus a minor index ordering instants at equal ``t``."""

    t: float
    minor: int = 0

    def bump(self) -> "SuperDenseTime":
        return SuperDenseTime(self.t, self.minor + 1)

    def advance(self, t: float) -> "SuperDenseTime":
        if t < self.t:
            raise ValueError("super-dense time cannot move backwards")
        return SuperDenseTime(t, self.minor if t == self.t else 0)


def event_q(n_z: int, *flagged: int) -> np.ndarray:
    """Multi-hot event vector with ones at ``flagged``."""
    q = np.zeros(n_z, dtype=np.int8)
    q[list(flagged)] = 1
    return q


class HudaModel:
    """Base class for every model, learned or first-principles, and for
    combinations of models.

    Subclasses override :meth:`f_c`, :meth:`g`, :meth:`c` and :meth:`a`. The
    default implementations describe a model without the corresponding part
    (zero-length outputs, identity affect). All maps must be pure.
    """

    name: str = "model"
    dims: Dims
    p0: np.ndarray
    x_c0: np.ndarray
    x_d0: np.ndarray
    incidence: np.ndarray | None = None
    input_fn: Callable | None = None

    def f_c(self, x_c, x_d, u, p, t):
        return EMPTY

    def g(self, x_c, x_d, u, p, t):
        return EMPTY

    def c(self, x_c, x_d, u, p, t):
        return EMPTY

    def a(self, x_c, x_d, u, p, t, q):
        return x_c, x_d

    def inputs(self, t):
        if self.input_fn is None:
            return EMPTY
        return self.input_fn(t)

    def bind(self, p) -> "Bound":
        return Bound(self, p)

    def split_events(self, q) -> list[tuple[str, np.ndarray]]:
        """Partition a flagged ``q`` into sequentially handled groups."""
        return [("", q)]

    @property
    def x0(self) -> np.ndarray:
        return np.concatenate([self.x_c0, self.x_d0])

    def __repr__(self):
        return f"{type(self).__name__}(name={self.name!r}, dims={self.dims})"


class Bound:
    """A model with its parameter vector fixed; what the solver calls."""

    __slots__ = ("model", "p")

    def __init__(self, model: HudaModel, p):
        self.model = model
        self.p = p

    def f_c(self, x_c, x_d, t):
        return self.model.f_c(x_c, x_d, self.model.inputs(t), self.p, t)

    def g(self, x_c, x_d, t):
        return self.model.g(x_c, x_d, self.model.inputs(t), self.p, t)

    def c(self, x_c, x_d, t):
        return self.model.c(x_c, x_d, self.model.inputs(t), self.p, t)

    def a(self, x_c, x_d, t, q):
        return self.model.a(x_c, x_d, self.model.inputs(t), self.p, t, q)


class FunctionModel(HudaModel):
    """A model assembled from plain callables.

    Every callable takes ``(x_c, x_d, u, p, t)``; the affect additionally takes
    ``q`` and returns ``(x_c_plus, x_d_plus)``. Missing parts default to the
    empty behaviour of :class:`HudaModel`.
    """

    def __init__(
        self,
        dims: Dims,
        f_c=None,
        g=None,
        c=None,
        a=None,
        p0=None,
        x_c0=None,
        x_d0=None,
        input_fn=None,
        incidence=None,
        name="model",
    ):
        self.dims = dims
        self.name = name
        self._f_c, self._g, self._c, self._a = f_c, g, c, a
        self.p0 = np.zeros(dims.n_p) if p0 is None else np.asarray(p0, dtype=float)
        self.x_c0 = np.zeros(dims.n_xc) if x_c0 is None else np.asarray(x_c0, dtype=float)
        self.x_d0 = np.zeros(dims.n_xd) if x_d0 is None else np.asarray(x_d0, dtype=float)
        self.input_fn = input_fn
        self.incidence = incidence
        _check_len("p0", self.p0, dims.n_p)
        _check_len("x_c0", self.x_c0, dims.n_xc)
        _check_len("x_d0", self.x_d0, dims.n_xd)

    def f_c(self, x_c, x_d, u, p, t):
        return EMPTY if self._f_c is None else self._f_c(x_c, x_d, u, p, t)

    def g(self, x_c, x_d, u, p, t):
        return EMPTY if self._g is None else self._g(x_c, x_d, u, p, t)

    def c(self, x_c, x_d, u, p, t):
        return EMPTY if self._c is None else self._c(x_c, x_d, u, p, t)

    def a(self, x_c, x_d, u, p, t, q):
        if self._a is None:
            return x_c, x_d
        return self._a(x_c, x_d, u, p, t, q)


def _check_len(name, v, n):
    if len(v) != n:
        raise DimensionMismatch(f"{name} has length {len(v)}, expected {n}")


def _check_args(model, x_c, x_d, u, p):
    d = model.dims
    _check_len("x_c", x_c, d.n_xc)
    _check_len("x_d", x_d, d.n_xd)
    _check_len("u", u, d.n_u)
    _check_len("p", p, d.n_p)


def eval_fc(model: HudaModel, x_c, x_d, u, p, t):
    """Continuous state derivative, with length checks on every argument."""
    _check_args(model, x_c, x_d, u, p)
    dx = model.f_c(x_c, x_d, u, p, t)
    _check_len("f_c output", dx, model.dims.n_xc)
    return dx


def eval_g(model: HudaModel, x_c, x_d, u, p, t):
    _check_args(model, x_c, x_d, u, p)
    y = model.g(x_c, x_d, u, p, t)
    _check_len("g output", y, model.dims.n_y)
    return y


def eval_c(model: HudaModel, x_c, x_d, u, p, t):
    _check_args(model, x_c, x_d, u, p)
    z = model.c(x_c, x_d, u, p, t)
    _check_len("c output", z, model.dims.n_z)
    return z


def eval_a(model: HudaModel, x_c, x_d, u, p, t, q):
    """Post-event state ``(x_c_plus, x_d_plus)`` for the flagged indicators."""
    _check_args(model, x_c, x_d, u, p)
    q = np.asarray(q)
    _check_len("q", q, model.dims.n_z)
    if not np.any(q):
        raise NoEventFlagged("event affect called without any flagged indicator")
    xc, xd = model.a(x_c, x_d, u, p, t, q)
    _check_len("a output x_c", xc, model.dims.n_xc)
    _check_len("a output x_d", xd, model.dims.n_xd)
    return xc, xd
