"""Combination of two models through connection equations.

The combined model is itself a :class:`HudaModel`. Its continuous state is
the combined input ``u_z`` and its derivative is the combined output ``y_z``;
its discrete state is ``x_d,a ++ x_d,b``. Each submodel is wired through one
of two profiles:

``state``
    the submodel's continuous state is its connection input and its state
    derivative is its connection output (the default);
``output``
    the connection input feeds the submodel input ``u`` and its algebraic
    output ``g`` is the connection output. Such a submodel may hold discrete
    state but no continuous state.

Events raised inside a submodel change its local state. That local state is
mapped back onto the global state by solving the connection equation of the
submodel for ``u_z``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dual
from .connect import ConnDims, ConnectionSet, flatten_params
from .dual import Dual
from .errors import DimensionMismatch, LoopyTopology, NoConvergence, NoSolution
from .model import EMPTY, Dims, HudaModel
from .structure import BltOrder, assemble_incidence, blt_sort

PROFILES = ("state", "output")
RESIDUAL_RTOL = 1e-10


@dataclass(frozen=True)
class EventRouting:
    source: str
    local_q: np.ndarray


# ---- local to global propagation ----------------------------------------------------------


def _inf(x) -> float:
    x = np.asarray(dual.value(x), dtype=float)
    return float(np.max(np.abs(x))) if x.size else 0.0


def _assemble(guess, idx, vals, tan=None):
    """``guess`` with entries ``idx`` replaced; tangents of other entries kept."""
    gv = np.array(dual.value(guess), dtype=float)
    out_v = gv.copy()
    out_v[idx] = vals
    k = dual.tangent_width(guess) if tan is None else tan.shape[-1]
    if k is None:
        return out_v
    gt = guess.tangent.copy() if isinstance(guess, Dual) else np.zeros(gv.shape + (k,))
    if tan is not None:
        gt[idx] = tan
    return Dual(out_v, gt)


def local_to_global_a(conn: ConnectionSet, target, guess=None, W=None, bias=None):
    """Global state ``u_z`` with ``W_az u_z + b_a = target``.

    Uses a direct solve when ``W_az`` is square and invertible, otherwise a
    least-squares solve restricted to the columns of ``W_az`` that are not
    identically zero; the remaining entries keep the value of ``guess``.
    """
    W = conn.blocks["az"] if W is None else W
    bias = conn.biases["a"] if bias is None else bias
    n = W.shape[1]
    if guess is None:
        guess = np.zeros(n)
    if len(target) != W.shape[0] or len(guess) != n:
        raise DimensionMismatch("target/guess length does not match W_az")
    rhs = target - bias
    Wv = np.asarray(dual.value(W), dtype=float)
    sens = np.flatnonzero(np.any(Wv != 0.0, axis=0))
    tol = RESIDUAL_RTOL * (1.0 + _inf(target))
    if sens.size == n and Wv.shape[0] == n and np.linalg.cond(Wv) < 1e12:
        u = dual.solve(W, rhs)
    else:
        Ws = W[:, sens] if isinstance(W, Dual) else Wv[:, sens]
        u = _lstsq_dual(Ws, rhs)
        uv, ut = (u.value, u.tangent) if isinstance(u, Dual) else (u, None)
        u = _assemble(guess, sens, uv, ut)
    res = _inf(dual.value(W) @ dual.value(u) - dual.value(rhs))
    if not res <= tol:
        raise NoSolution("no global state reproduces the local post-event state", res)
    return u


def _lstsq_dual(A, b):
    """Minimum-norm least squares with tangents from the pseudo-inverse."""
    Av = np.asarray(dual.value(A), dtype=float)
    bv = np.asarray(dual.value(b), dtype=float)
    pinv = np.linalg.pinv(Av)
    x = pinv @ bv
    k = dual.tangent_width(A, b)
    if k is None:
        return x
    rhs = np.zeros(bv.shape + (k,))
    if isinstance(b, Dual):
        rhs = rhs + b.tangent
    if isinstance(A, Dual):
        rhs = rhs - np.einsum("ijk,j->ik", A.tangent, x)
    return Dual(x, pinv @ rhs)


def _jacobian(fun, x):
    """Jacobian of ``fun`` at plain ``x`` by forward duals, with a central
    difference fallback for maps that do not accept duals."""
    x = np.asarray(x, dtype=float)
    try:
        out = fun(Dual(x, np.eye(x.size)))
        if isinstance(out, Dual):
            return np.asarray(out.tangent, dtype=float).reshape(-1, x.size)
        if np.asarray(out).dtype != object:
            return np.zeros((len(out), x.size))
        raise TypeError("residual dropped the tangents")
    except (TypeError, ValueError, AttributeError):
        cols = []
        for j in range(x.size):
            h = 1e-7 * (1.0 + abs(x[j]))
            hi, lo = x.copy(), x.copy()
            hi[j] += h
            lo[j] -= h
            cols.append((np.asarray(fun(hi), dtype=float) - np.asarray(fun(lo), dtype=float)) / (2 * h))
        return np.stack(cols, axis=1) if cols else np.zeros((0, 0))


def newton_local_to_global(residual, guess, target_norm, max_iter=50, residual_dual=None):
    """Damped Gauss-Newton on ``residual(u_z) = 0`` starting at ``guess``.

    Only entries of ``u_z`` the residual is sensitive to are moved; the rest
    are returned bitwise equal to ``guess``. ``residual`` is evaluated on
    plain values. If ``residual_dual`` is given it evaluates the residual with
    parameter tangents, and the result carries implicit-function tangents.
    """
    g = np.array(dual.value(guess), dtype=float)
    tol = RESIDUAL_RTOL * (1.0 + target_norm)
    J0 = _jacobian(residual, g)
    probe = g + 1e-3 * (1.0 + np.abs(g)) * np.where(np.arange(g.size) % 2, -1.0, 1.0)
    J1 = _jacobian(residual, probe)
    sens = np.flatnonzero(np.any(J0 != 0.0, axis=0) | np.any(J1 != 0.0, axis=0))
    u = g.copy()
    r = np.asarray(residual(u), dtype=float)
    norm = _inf(r)
    it = 0
    while norm > tol:
        if it >= max_iter or sens.size == 0:
            raise NoConvergence(f"residual solve stopped after {it} iterations", norm)
        J = _jacobian(residual, u)[:, sens]
        step = np.linalg.lstsq(J, -r, rcond=None)[0]
        alpha = 1.0
        for _ in range(30):
            trial = u.copy()
            trial[sens] += alpha * step
            r_new = np.asarray(residual(trial), dtype=float)
            if np.all(np.isfinite(r_new)) and _inf(r_new) < norm:
                break
            alpha *= 0.5
        else:
            raise NoConvergence("damping exhausted in residual solve", norm)
        u, r, norm = trial, r_new, _inf(r_new)
        it += 1
    if residual_dual is None and not isinstance(guess, Dual):
        return u
    k = dual.tangent_width(guess)
    tan = None
    if residual_dual is not None:
        rd = residual_dual(u)
        if isinstance(rd, Dual):
            J = _jacobian(residual, u)[:, sens]
            tan = -np.linalg.pinv(J) @ rd.tangent
            k = rd.k
    if k is None:
        return u
    if tan is None:
        tan = np.zeros((sens.size, k))
    return _assemble(guess if isinstance(guess, Dual) else Dual.constant(g, k), sens, u[sens], tan)


def local_to_global_b(conn: ConnectionSet, s_a, target, guess, max_iter=50):
    """Global state ``u_z`` with ``W_ba s_a(W_az u_z + b_a) + W_bz u_z + b_b = target``.

    ``s_a`` maps the first submodel's connection input to its connection
    output. Newton starts at ``guess`` (the pre-event global state).
    """
    B = conn.blocks

    def residual(u):
        y_a = s_a(B["az"] @ u + conn.biases["a"])
        return B["ba"] @ y_a + B["bz"] @ u + conn.biases["b"] - target

    return newton_local_to_global(residual, guess, _inf(target), max_iter)


# ---- the combined model -------------------------------------------------------------------


def _check_profile(model: HudaModel, profile: str):
    if profile not in PROFILES:
        raise ValueError(f"unknown wiring profile {profile!r}")
    d = model.dims
    if profile == "output" and d.n_xc:
        raise DimensionMismatch(f"{model.name}: output wiring requires a model without continuous state")


def _io_sizes(model: HudaModel, profile: str):
    d = model.dims
    return (d.n_xc, d.n_xc) if profile == "state" else (d.n_u, d.n_y)


def _dependency(model: HudaModel, profile: str):
    n_in, n_out = _io_sizes(model, profile)
    if profile == "state" and model.incidence is not None:
        inc = np.asarray(model.incidence, dtype=bool)
        if inc.shape == (n_out, n_in):
            return inc
    return np.ones((n_out, n_in), dtype=bool)


class CombinedModel(HudaModel):
    """Two submodels joined by a :class:`ConnectionSet`.

    Parameters are ``flatten(conn, p_a, p_b)``; see :meth:`layout`.
    """

    def __init__(
        self,
        model_a: HudaModel,
        model_b: HudaModel,
        conn: ConnectionSet,
        profile_a: str = "state",
        profile_b: str = "state",
        x_c0=None,
        name: str | None = None,
        order: BltOrder | None = None,
    ):
        for m, p in ((model_a, profile_a), (model_b, profile_b)):
            _check_profile(m, p)
        self.model_a, self.model_b, self.conn = model_a, model_b, conn
        self.profiles = {"a": profile_a, "b": profile_b}
        self.models = {"a": model_a, "b": model_b}
        cd = conn.dims
        n_ua, n_ga = _io_sizes(model_a, profile_a)
        n_ub, n_gb = _io_sizes(model_b, profile_b)
        if (cd.n_ua, cd.n_ga, cd.n_ub, cd.n_gb) != (n_ua, n_ga, n_ub, n_gb):
            raise DimensionMismatch(
                f"connection sizes {(cd.n_ua, cd.n_ga, cd.n_ub, cd.n_gb)} do not match submodels {(n_ua, n_ga, n_ub, n_gb)}"
            )
        if cd.n_uz != cd.n_gz:
            raise DimensionMismatch(f"combined state size {cd.n_uz} differs from derivative size {cd.n_gz}")
        self.order = order or self._order()
        self.p0, self.layout = flatten_params(conn, model_a.p0, model_b.p0)
        da, db = model_a.dims, model_b.dims
        self.n_za, self.n_xda = da.n_z, da.n_xd
        self.dims = Dims(
            n_xc=cd.n_uz,
            n_xd=da.n_xd + db.n_xd,
            n_u=0,
            n_y=da.n_y + db.n_y,
            n_z=da.n_z + db.n_z,
            n_p=self.layout.size,
        )
        self.x_c0 = np.zeros(cd.n_uz) if x_c0 is None else np.asarray(x_c0, dtype=float)
        if len(self.x_c0) != cd.n_uz:
            raise DimensionMismatch(f"x_c0 has length {len(self.x_c0)}, expected {cd.n_uz}")
        self.x_d0 = np.concatenate([model_a.x_d0, model_b.x_d0])
        self.name = name or f"({model_a.name}+{model_b.name})"
        self.incidence = None
        # is the connection row of each submodel fed by u_z alone?
        active = conn.nonzero_blocks()
        self._direct = {s: not (active[s + "a"] or active[s + "b"]) for s in "ab"}

    def _order(self) -> BltOrder:
        inc = assemble_incidence(
            _dependency(self.model_a, self.profiles["a"]),
            _dependency(self.model_b, self.profiles["b"]),
            self.conn,
            structural=True,
        )
        res = blt_sort(inc)
        if not res.ok:
            raise LoopyTopology(res)
        return res

    # HudaModel interface -----------------------------------------------------------
    def bind(self, p) -> "CombinedBound":
        return CombinedBound(self, p)

    def f_c(self, x_c, x_d, u, p, t):
        return self.bind(p).f_c(x_c, x_d, t)

    def g(self, x_c, x_d, u, p, t):
        return self.bind(p).g(x_c, x_d, t)

    def c(self, x_c, x_d, u, p, t):
        return self.bind(p).c(x_c, x_d, t)

    def a(self, x_c, x_d, u, p, t, q):
        return self.bind(p).a(x_c, x_d, t, q)

    def route(self, q) -> list[EventRouting]:
        q = np.asarray(q)
        out = []
        for side, part in (("a", q[: self.n_za]), ("b", q[self.n_za :])):
            if np.any(part):
                out.append(EventRouting(side, part))
        return out

    def split_events(self, q):
        """Only the first flagged submodel is handled; the solver re-detects
        the other one after this affect."""
        routes = self.route(q)
        if not routes:
            return []
        r = routes[0]
        local = np.zeros_like(np.asarray(q))
        if r.source == "a":
            local[: self.n_za] = r.local_q
        else:
            local[self.n_za :] = r.local_q
        return [(r.source, local)]

    def params_of(self, p):
        """``(blocks, biases, p_a, p_b)`` for a flat parameter vector."""
        blocks, biases, (p_a, p_b) = self.layout.unflatten(p, self.conn)
        return blocks, biases, p_a, p_b

    def connections(self, p) -> ConnectionSet:
        return self.conn.with_params(np.asarray(dual.value(p), dtype=float), self.layout)

    def conn_dims(self) -> ConnDims:
        return self.conn.dims


class CombinedBound:
    """A combined model with fixed parameters; unpacks the flat vector once."""

    def __init__(self, cm: CombinedModel, p):
        self.cm = cm
        self.p = p
        self.blocks, self.biases, p_a, p_b = cm.params_of(p)
        self.sub_p = {"a": p_a, "b": p_b}
        self.active = cm.conn.nonzero_blocks()
        self._plain = None

    @property
    def plain(self) -> "CombinedBound":
        """The same binding without tangents (for Newton iterations)."""
        if self._plain is None:
            self._plain = self if not isinstance(self.p, Dual) else CombinedBound(self.cm, self.p.value)
        return self._plain

    def _split_xd(self, x_d):
        n = self.cm.n_xda
        return {"a": x_d[:n], "b": x_d[n:]}

    def _row(self, row, sig):
        out = self.biases[row]
        for col, key in (("a", "y_a"), ("b", "y_b"), ("z", "u_z")):
            name = row + col
            if self.active[name]:
                out = out + self.blocks[name] @ sig[key]
        return out

    def _local(self, side, u_side, xd_side, t):
        """``(x_c, x_d, u)`` of a submodel given its connection input."""
        m = self.cm.models[side]
        if self.cm.profiles[side] == "state":
            return u_side, xd_side, m.inputs(t)
        return EMPTY, xd_side, u_side

    def _sub(self, side, u_side, xd_side, t):
        m = self.cm.models[side]
        xc, xd, u = self._local(side, u_side, xd_side, t)
        if self.cm.profiles[side] == "state":
            return m.f_c(xc, xd, u, self.sub_p[side], t)
        return m.g(xc, xd, u, self.sub_p[side], t)

    def signals(self, x_c, x_d, t, need=("y_z",)):
        """Evaluate the connection chain in BLT order until ``need`` is known."""
        xd = self._split_xd(x_d)
        sig = {"u_z": x_c}
        need = set(need)
        for eq, unk in self.cm.order.steps:
            if need <= sig.keys():
                break
            if eq[0] == "c":
                sig[unk] = self._row(eq[2], sig)
            else:
                side = eq[2]
                sig[unk] = self._sub(side, sig["u_" + side], xd[side], t)
        return sig

    def f_c(self, x_c, x_d, t):
        return self.signals(x_c, x_d, t)["y_z"]

    def _each(self, x_c, x_d, t, method):
        sig = self.signals(x_c, x_d, t, need=("u_a", "u_b"))
        xd = self._split_xd(x_d)
        parts = []
        for side in "ab":
            m = self.cm.models[side]
            xc_l, xd_l, u_l = self._local(side, sig["u_" + side], xd[side], t)
            parts.append(getattr(m, method)(xc_l, xd_l, u_l, self.sub_p[side], t))
        return dual.concat(parts)

    def g(self, x_c, x_d, t):
        return self._each(x_c, x_d, t, "g")

    def c(self, x_c, x_d, t):
        return self._each(x_c, x_d, t, "c")

    def a(self, x_c, x_d, t, q):
        for route in self.cm.route(q):
            x_c, x_d = self._affect(route, x_c, x_d, t)
        return x_c, x_d

    def _affect(self, route: EventRouting, x_c, x_d, t):
        side = route.source
        cm = self.cm
        m = cm.models[side]
        sig = self.signals(x_c, x_d, t, need=("u_a", "u_b"))
        xd = self._split_xd(x_d)
        xc_l, xd_l, u_l = self._local(side, sig["u_" + side], xd[side], t)
        xc_new, xd_new = m.a(xc_l, xd_l, u_l, self.sub_p[side], t, route.local_q)
        xd_full = dual.concat([xd_new, xd["b"]]) if side == "a" else dual.concat([xd["a"], xd_new])
        if cm.profiles[side] == "output" or np.array_equal(dual.value(xc_new), dual.value(xc_l)):
            return x_c, xd_full
        if cm._direct[side]:
            x_new = local_to_global_a(cm.conn, xc_new, x_c, W=self.blocks[side + "z"], bias=self.biases[side])
        else:
            x_new = self._newton(side, xc_new, x_c, xd_full, t)
        return x_new, xd_full

    def _newton(self, side, target, guess, x_d, t):
        plain = self.plain
        tv = np.asarray(dual.value(target), dtype=float)
        xdv = dual.value(x_d)

        def residual(u):
            return plain.signals(u, xdv, t, need=("u_" + side,))["u_" + side] - tv

        residual_dual = None
        if dual.tangent_width(self.p, target, x_d) is not None:

            def residual_dual(u):
                return self.signals(u, x_d, t, need=("u_" + side,))["u_" + side] - target

        return newton_local_to_global(residual, guess, _inf(tv), residual_dual=residual_dual)


def combine(model_a: HudaModel, model_b: HudaModel, conn: ConnectionSet, **kw) -> CombinedModel:
    """Join two models; raises :class:`LoopyTopology` for wirings with loops."""
    return CombinedModel(model_a, model_b, conn, **kw)
