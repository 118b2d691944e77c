"""Adaptive Dormand-Prince 5(4) integration with zero-crossing events.

Continuous states are advanced with the FSAL 5(4) pair and its quartic
continuous extension. After each accepted step the event indicators are
scanned along the interpolant; a sign change against the last recorded
nonzero sign of an indicator is localised by Illinois regula falsi, the
model's affect is applied at the super-dense instant ``(t, minor + 1)`` and
integration restarts with a fresh step-size estimate.

States may carry dual tangents. Step-size control, event detection and
localisation read values only, so every tangent follows the same discrete
path as the plain solve. Event times carry tangents through the implicit
function theorem and the post-event state is corrected by the usual jump
term, which keeps sensitivities continuous across transversal crossings.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import dual
from .dual import Dual
from .errors import EventCascadeLimit, NoCrossing, StepSizeUnderflow
from .model import HudaModel, SuperDenseTime

# Dormand-Prince 5(4) tableau
C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
]
B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
E = np.array([-71 / 57600, 0.0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
# quartic dense output: y(t + s h) = y + h * (P^T K) @ [s, s^2, s^3, s^4]
P = np.array(
    [
        [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
        [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
        [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
        [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0


@dataclass(frozen=True)
class SolverOpts:
    rel_tol: float = 1e-6
    abs_tol: float = 1e-8
    max_step: float = math.inf
    first_step: float | None = None
    event_time_tol: float = 1e-10
    max_events_per_instant: int = 8
    dense_sampling: tuple | np.ndarray | None = None
    # |z| at or below this right after an affect does not count as a sign
    event_zero_tol: float = 1e-12
    # interior interpolant points scanned per step for indicator sign changes
    event_samples: int = 4
    max_steps: int = 200_000

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_events_per_instant < 1:
            raise ValueError("max_events_per_instant must be >= 1")
        if self.event_samples < 1:
            raise ValueError("event_samples must be >= 1")


@dataclass
class EventRecord:
    time: SuperDenseTime
    source: str
    q: np.ndarray
    x_pre: object
    x_post: object


@dataclass
class Trajectory:
    """Samples in super-dense time plus the event log.

    ``states`` hold flat ``x_c ++ x_d`` vectors (arrays or duals). When the
    solve had a dense sampling grid, ``grid_t``/``grid_states`` hold the grid
    samples (right limits at event instants).
    """

    n_xc: int
    n_xd: int
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    events: list = field(default_factory=list)
    grid_t: np.ndarray | None = None
    grid_states: list = field(default_factory=list)

    def add(self, sdt, state):
        self.times.append(sdt)
        self.states.append(state)

    @property
    def t(self) -> np.ndarray:
        return np.array([s.t for s in self.times])

    @property
    def minor(self) -> np.ndarray:
        return np.array([s.minor for s in self.times], dtype=int)

    def values(self) -> np.ndarray:
        n = self.n_xc + self.n_xd
        if not self.states:
            return np.zeros((0, n))
        return np.array([np.asarray(dual.value(s), dtype=float) for s in self.states]).reshape(-1, n)

    def grid_values(self) -> np.ndarray:
        n = self.n_xc + self.n_xd
        if not self.grid_states:
            return np.zeros((0, n))
        return np.array([np.asarray(dual.value(s), dtype=float) for s in self.grid_states]).reshape(-1, n)

    @property
    def final(self):
        return self.states[-1]

    def event_times(self) -> np.ndarray:
        return np.array([e.time.t for e in self.events])


def integrate(model: HudaModel, x0=None, p=None, tspan=(0.0, 1.0), opts: SolverOpts | None = None) -> Trajectory:
    """Simulate ``model`` over ``tspan`` from the flat initial state ``x0``."""
    return _Integrator(model, x0, p, tspan, opts or SolverOpts()).run()


# ---- helpers on (value, tangent) pairs ---------------------------------------------------


def _split(x, k):
    """(value, tangent-or-None) of a plain or dual vector, padded to width k."""
    if isinstance(x, Dual):
        return np.array(x.value, dtype=float), x.tangent
    v = np.array(x, dtype=float)
    if k is None:
        return v, None
    return v, np.zeros(v.shape + (k,))


def _join(v, t):
    return v if t is None else Dual(v, t)


def _rms(x):
    return math.sqrt(float(np.mean(x * x))) if x.size else 0.0


def _signs(z, tol):
    s = np.sign(z)
    s[np.abs(z) <= tol] = 0.0
    return s


def _dense_weights(sigma):
    return P @ np.array([sigma, sigma**2, sigma**3, sigma**4])


def _dense_dweights(sigma):
    return P @ np.array([1.0, 2 * sigma, 3 * sigma**2, 4 * sigma**3])


def locate_event(zfun, t_lo, t_hi, ref=None, tol=1e-10, candidates=None):
    """Earliest crossing time in ``(t_lo, t_hi]`` and the flags of every
    indicator crossing within ``tol`` of it.

    ``zfun(t)`` returns the indicator vector. An indicator crosses when
    ``ref_i * z_i`` becomes nonpositive; ``ref`` defaults to the signs at
    ``t_lo``. The returned time lies on the crossed side of the root.
    """
    roots = _roots(zfun, t_lo, t_hi, ref, tol, candidates)
    t_event = min(roots.values())
    q = np.zeros(len(np.asarray(zfun(t_lo))), dtype=np.int8)
    for i, r in roots.items():
        if r <= t_event + tol:
            q[i] = 1
    return t_event, q


def _roots(zfun, t_lo, t_hi, ref, tol, candidates):
    z_lo = np.asarray(zfun(t_lo), dtype=float)
    z_hi = np.asarray(zfun(t_hi), dtype=float)
    ref = np.sign(z_lo) if ref is None else np.asarray(ref, dtype=float)
    idx = np.flatnonzero((ref != 0) & (ref * z_hi <= 0))
    if candidates is not None:
        idx = np.intersect1d(idx, candidates)
    if idx.size == 0:
        raise NoCrossing(f"no indicator changes sign on [{t_lo}, {t_hi}]")
    roots = {}
    for i in idx:
        g_lo = max(ref[i] * z_lo[i], 0.0)
        g_hi = ref[i] * z_hi[i]
        roots[int(i)] = _illinois(lambda t, i=i: ref[i] * float(np.asarray(zfun(t))[i]), t_lo, t_hi, g_lo, g_hi, tol)
    return roots


def _golden_min(g, lo, hi, tol):
    """Minimum of a unimodal ``g`` on ``[lo, hi]`` to width ``tol``."""
    r = 0.5 * (np.sqrt(5.0) - 1.0)
    a, b = lo, hi
    c, d = b - r * (b - a), a + r * (b - a)
    gc, gd = g(c), g(d)
    while b - a > tol:
        if gc <= 0 or gd <= 0:
            break
        if gc < gd:
            b, d, gd = d, c, gc
            c = b - r * (b - a)
            gc = g(c)
        else:
            a, c, gc = c, d, gd
            d = a + r * (b - a)
            gd = g(d)
    return (c, gc) if gc <= gd else (d, gd)


def _illinois(g, lo, hi, g_lo, g_hi, tol, max_iter=200):
    """Root of ``g`` with ``g(lo) >= 0 >= g(hi)``; returns the ``g <= 0`` end."""
    if g_hi == 0.0 and hi - lo <= tol:
        return hi
    side = 0
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        denom = g_lo - g_hi
        t = hi - g_hi * (hi - lo) / denom if denom > 0 else 0.5 * (lo + hi)
        if not lo < t < hi:
            t = 0.5 * (lo + hi)
        # keep progress when regula falsi stalls at one bracket end
        width = hi - lo
        t = min(max(t, lo + 0.01 * min(tol, width)), hi - 0.01 * min(tol, width))
        gt = g(t)
        if gt > 0:
            lo, g_lo = t, gt
            if side == -1:
                g_hi *= 0.5
            side = -1
        else:
            hi, g_hi = t, gt
            if side == 1:
                g_lo *= 0.5
            side = 1
    return hi


class _Integrator:
    def __init__(self, model, x0, p, tspan, opts):
        self.model = model
        self.opts = opts
        d = model.dims
        self.n_xc, self.n_xd = d.n_xc, d.n_xd
        p = model.p0 if p is None else p
        x0 = model.x0 if x0 is None else x0
        if len(x0) != d.n_x:
            from .errors import DimensionMismatch

            raise DimensionMismatch(f"x0 has length {len(x0)}, expected {d.n_x}")
        self.t0, self.tf = float(tspan[0]), float(tspan[1])
        if not self.tf > self.t0:
            raise ValueError("tspan must satisfy tf > t0")
        self.k = dual.tangent_width(p, x0)
        self.bm = model.bind(p)
        self.bv = model.bind(dual.value(p)) if self.k is not None else self.bm
        xv, xt = _split(x0, self.k)
        self.xv, self.xt = xv[: self.n_xc], None if xt is None else xt[: self.n_xc]
        self.xd = x0[self.n_xc :] if len(x0) > self.n_xc else np.zeros(0)
        if self.k is not None and not isinstance(self.xd, Dual):
            self.xd = np.array(self.xd, dtype=float)
        grid = opts.dense_sampling
        self.grid = None if grid is None else np.asarray(grid, dtype=float)
        self.gi = 0
        self.traj = Trajectory(self.n_xc, self.n_xd, grid_t=self.grid)

    # -- model calls ----------------------------------------------------------------
    def _f(self, xv, xt, xd, t):
        """Derivative (value, tangent) at a state given as value/tangent."""
        if self.k is None:
            return np.asarray(self.bm.f_c(xv, xd, t), dtype=float), None
        out = self.bm.f_c(Dual(xv, xt), xd, t)
        return _split(out, self.k)

    def _fv(self, xv, xd, t):
        return np.asarray(self.bv.f_c(xv, dual.value(xd), t), dtype=float)

    def _z(self, xv, xd, t):
        return np.asarray(self.bv.c(xv, dual.value(xd), t), dtype=float)

    def _state(self, xv, xt, xd):
        return dual.concat([_join(xv, xt), xd])

    # -- main loop ------------------------------------------------------------------
    def run(self) -> Trajectory:
        o = self.opts
        t = self.t0
        sdt = SuperDenseTime(t, 0)
        n_z = self.model.dims.n_z
        self.ref = _signs(self._z(self.xv, self.xd, t), o.event_zero_tol) if n_z else np.zeros(0)
        self.guard = np.zeros(n_z, dtype=bool)
        self.armed = np.ones(n_z, dtype=bool)
        if self.grid is None:
            self.traj.add(sdt, self._state(self.xv, self.xt, self.xd))
        fv, ft = self._f(self.xv, self.xt, self.xd, t)
        h = self._initial_step(t, fv)
        steps = 0
        while t < self.tf:
            steps += 1
            if steps > o.max_steps:
                raise StepSizeUnderflow(f"exceeded {o.max_steps} steps at t={t}")
            h = min(h, o.max_step, self.tf - t)
            if h <= 16 * np.finfo(float).eps * max(1.0, abs(t)):
                raise StepSizeUnderflow(f"step size {h:.3e} too small at t={t}")
            Kv, Kt, yv, yt, err = self._step(t, h, fv, ft)
            if err > 1.0:
                h *= max(MIN_FACTOR, SAFETY * err**-0.2)
                continue
            t_new = self.tf if self.tf - (t + h) <= 4 * np.finfo(float).eps * max(1.0, abs(self.tf)) else t + h
            h_used = t_new - t
            step = (t, h_used, self.xv, self.xt, Kv, Kt)
            hit = self._scan(step) if n_z else None
            if hit is None:
                self._emit_grid(step, t_new, inclusive=False)
                t, self.xv, self.xt = t_new, yv, yt
                fv, ft = Kv[6], None if Kt is None else Kt[6]
                if self.grid is None:
                    sdt = sdt.advance(t)
                    self.traj.add(sdt, self._state(self.xv, self.xt, self.xd))
                else:
                    sdt = sdt.advance(t)
                factor = MAX_FACTOR if err == 0 else min(MAX_FACTOR, SAFETY * err**-0.2)
                h = h_used * factor if h_used == h else max(h, h_used * factor)
                continue
            t_ev, q, i_first = hit
            # samples at (or within the localisation tolerance of) an event
            # report the post-event state
            self._emit_grid(step, t_ev - o.event_time_tol, inclusive=False)
            sdt = sdt.advance(t_ev)
            sdt = self._handle_events(step, t_ev, q, i_first, sdt)
            self._emit_grid(None, t_ev, inclusive=True)
            t = t_ev
            fv, ft = self._f(self.xv, self.xt, self.xd, t)
            h = self._initial_step(t, fv)
        self._emit_grid(None, self.tf, inclusive=True)
        return self.traj

    def _initial_step(self, t, fv):
        o = self.opts
        span = self.tf - t
        if o.first_step is not None:
            return min(o.first_step, span)
        if self.n_xc == 0 or span <= 0:
            return max(span, 0.0) or 1.0
        y0 = self.xv
        scale = o.abs_tol + np.abs(y0) * o.rel_tol
        d0, d1 = _rms(y0 / scale), _rms(fv / scale)
        h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        h0 = min(h0, span)
        f1 = self._fv(y0 + h0 * fv, self.xd, t + h0)
        d2 = _rms((f1 - fv) / scale) / h0
        if d1 <= 1e-15 and d2 <= 1e-15:
            h1 = max(1e-6, h0 * 1e-3)
        else:
            h1 = (0.01 / max(d1, d2)) ** 0.2
        return min(100 * h0, h1, span)

    def _step(self, t, h, fv, ft):
        n = self.n_xc
        Kv = np.empty((7, n))
        Kt = None if ft is None else np.empty((7, n, self.k))
        Kv[0] = fv
        if Kt is not None:
            Kt[0] = ft
        for i in range(1, 6):
            a = A[i]
            sv = self.xv + h * (a @ Kv[:i])
            st = None if Kt is None else self.xt + h * np.tensordot(a, Kt[:i], axes=1)
            Kv[i], kt = self._f(sv, st, self.xd, t + C[i] * h)
            if Kt is not None:
                Kt[i] = kt
        yv = self.xv + h * (B @ Kv[:6])
        yt = None if Kt is None else self.xt + h * np.tensordot(B, Kt[:6], axes=1)
        Kv[6], kt = self._f(yv, yt, self.xd, t + h)
        if Kt is not None:
            Kt[6] = kt
        if n == 0:
            return Kv, Kt, yv, yt, 0.0
        errv = h * (E @ Kv)
        scale = self.opts.abs_tol + np.maximum(np.abs(self.xv), np.abs(yv)) * self.opts.rel_tol
        return Kv, Kt, yv, yt, _rms(errv / scale)

    @staticmethod
    def _interp_value(step, tau):
        t, h, xv, _, Kv, _ = step
        if h == 0.0 or Kv.shape[1] == 0:
            return xv
        return xv + h * (_dense_weights((tau - t) / h) @ Kv)

    def _interp(self, step, tau):
        t, h, xv, xt, Kv, Kt = step
        if Kv.shape[1] == 0:
            return xv, xt
        w = _dense_weights((tau - t) / h)
        v = xv + h * (w @ Kv)
        tt = None if Kt is None else xt + h * np.tensordot(w, Kt, axes=1)
        return v, tt

    def _emit_grid(self, step, t_end, inclusive):
        if self.grid is None:
            return
        while self.gi < len(self.grid):
            tg = self.grid[self.gi]
            if tg > t_end or (tg == t_end and not inclusive):
                break
            if step is None:
                v, tt = self.xv, self.xt
            else:
                v, tt = self._interp(step, tg)
            self.traj.grid_states.append(self._state(v, tt, self.xd))
            self.gi += 1

    # -- events -----------------------------------------------------------------------
    def _scan(self, step):
        """First indicator crossing inside an accepted step, if any.

        Indicators left within the deadband by an affect are guarded: they
        count as crossed only once they pass ``-event_zero_tol``, so roundoff
        on the struck surface cannot fire the same event again. A sampled
        local minimum of an indicator is refined by golden-section search, so
        a graze that enters and leaves between two samples is still found.
        """
        o = self.opts
        t, h = step[0], step[1]
        xd = self.xd
        m = o.event_samples
        tol = o.event_zero_tol
        taus = [t + h / (64 * m)] + [t + h * j / m if j < m else t + h for j in range(1, m + 1)]
        zfun_raw = lambda s: self._z(self._interp_value(step, s), xd, s)
        seq = [(t, zfun_raw(t))]
        for tau in taus:
            ref = self.ref
            off = np.where(self.guard, ref * tol, 0.0)
            zfun = lambda s: zfun_raw(s) + off
            z = zfun_raw(tau)
            seq.append((tau, z))
            live = self.armed & (ref != 0)
            lo = seq[-2][0]
            w = ref * (z + off)
            crossed = np.flatnonzero(live & (w <= 0))
            roots = _roots(zfun, lo, tau, ref, o.event_time_tol, crossed) if crossed.size else {}
            if len(seq) >= 3:
                ta, za = seq[-3]
                wa, wb = ref * (za + off), ref * (seq[-2][1] + off)
                dips = live & (wb < wa) & (wb <= w) & (wb > 0)
            else:
                ta, dips = lo, np.zeros(len(z), dtype=bool)
            # a crossing may hide another indicator entering and leaving before it
            if crossed.size:
                dips = dips | (live & (w > 0))
            for i in np.flatnonzero(dips):
                g = lambda s, i=i: ref[i] * (zfun_raw(s)[i] + off[i])
                t_min, g_min = _golden_min(g, ta, tau, o.event_time_tol)
                if g_min <= 0:
                    roots.update(_roots(zfun, ta, t_min, ref, o.event_time_tol, [i]))
            if roots:
                return self._first(roots, len(z))
            self._refresh_ref(z)
        return None

    def _first(self, roots, n_z):
        # the indicator defining the event time carries its tangent
        i_first = min(roots, key=lambda i: (roots[i], i))
        t_ev = float(roots[i_first])
        q = np.zeros(n_z, dtype=np.int8)
        for i, r in roots.items():
            if r <= t_ev + self.opts.event_time_tol:
                q[i] = 1
        return t_ev, q, i_first

    def _event_time_tangent(self, step, t_ev, xv, xt, i):
        """Tangent of the event time from the defining indicator ``i``."""
        t, h, _, _, Kv, _ = step
        if Kv.shape[1]:
            xdot = _dense_dweights((t_ev - t) / h) @ Kv
        else:
            xdot = np.zeros(0)
        xd = self.xd
        xdv = dual.value(xd)
        z_theta = self.bm.c(Dual(xv, xt), xd if isinstance(xd, Dual) else Dual.constant(xdv, self.k), t_ev)
        dz_theta = z_theta.tangent[i] if isinstance(z_theta, Dual) else np.zeros(self.k)
        z_t = self.bv.c(Dual(xv, xdot[:, None]), Dual.constant(xdv, 1), Dual(np.asarray(t_ev), np.ones(1)))
        dz_dt = float(z_t.tangent[i, 0]) if isinstance(z_t, Dual) else 0.0
        if dz_dt == 0.0 or not np.isfinite(dz_dt):
            return np.zeros(self.k), xdot
        return -dz_theta / dz_dt, xdot

    def _handle_events(self, step, t_ev, q, i_first, sdt):
        o = self.opts
        xv, xt = self._interp(step, t_ev)
        dt_tan = None
        if self.k is not None:
            dt_tan, xdot = self._event_time_tangent(step, t_ev, xv, xt, i_first)
            if xt is not None and xv.size:
                xt = xt + np.outer(xdot, dt_tan)
        xc, xd = _join(xv, xt), self.xd
        count = 0
        pending = q
        while pending is not None:
            for source, q_part in self.model.split_events(pending):
                count += 1
                if count > o.max_events_per_instant:
                    raise EventCascadeLimit(f"more than {o.max_events_per_instant} events at t={t_ev}")
                x_pre = dual.concat([xc, xd])
                self.traj.add(sdt, x_pre)
                xc, xd = self.bm.a(xc, xd, t_ev, q_part)
                sdt = sdt.bump()
                x_post = dual.concat([xc, xd])
                self.traj.add(sdt, x_post)
                self.traj.events.append(EventRecord(sdt, source, np.asarray(q_part), x_pre, x_post))
            z = self._z(np.asarray(dual.value(xc), dtype=float), xd, t_ev)
            self._refresh_ref(z)
            again = self.armed & (self.ref != 0) & (self.ref * z < -o.event_zero_tol)
            pending = again.astype(np.int8) if again.any() else None
        self._settle(xc, xd, t_ev, z)
        xv, xt = _split(xc, self.k)
        if self.k is not None and not isinstance(xd, Dual):
            xd = np.asarray(xd, dtype=float)
        if dt_tan is not None and xv.size:
            f_plus = self._fv(xv, xd, t_ev)
            xt = xt - np.outer(f_plus, dt_tan)
        self.xv, self.xt, self.xd = xv, xt, xd
        return sdt

    def _refresh_ref(self, z):
        tol = self.opts.event_zero_tol
        fresh = (self.ref == 0) & (np.abs(z) > tol)
        if fresh.any():
            self.ref = self.ref.copy()
            self.ref[fresh] = np.sign(z[fresh])
        back = (self.guard | ~self.armed) & (self.ref * z > tol)
        if back.any():
            self.guard = self.guard & ~back
            self.armed = self.armed | back

    def _settle(self, xc, xd, t, z):
        """Guard indicators an affect left on their surface.

        If the post-event flow still drives such an indicator across its
        surface, the affect cannot resolve the contact; the indicator is
        disarmed until the state is back on its valid side instead of
        firing at every roundoff-sized step.
        """
        tol = self.opts.event_zero_tol
        on = (self.ref != 0) & (np.abs(z) <= tol)
        if not on.any():
            return
        self.guard = self.guard | on
        xv = np.asarray(dual.value(xc), dtype=float)
        xdv = np.asarray(dual.value(xd), dtype=float)
        if xv.size == 0:
            return
        f = self._fv(xv, xdv, t)
        zt = self.bv.c(Dual(xv, f[:, None]), Dual.constant(xdv, 1), Dual(np.asarray(t), np.ones(1)))
        if not isinstance(zt, Dual):
            return
        rate = zt.tangent[:, 0]
        into = on & (self.ref * rate < 0)
        if into.any():
            self.armed = self.armed & ~into


# ---- CSV export -------------------------------------------------------------------------


def _fmt(x):
    return format(float(x), ".17g")


def trajectory_to_csv(traj: Trajectory, path, grid: bool = False):
    """``t,minor,x1..xn`` with 17 significant digits, one row per sample."""
    n = traj.n_xc + traj.n_xd
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "minor"] + [f"x{i + 1}" for i in range(n)])
        if grid:
            for t, x in zip(traj.grid_t, traj.grid_values()):
                w.writerow([_fmt(t), 0] + [_fmt(v) for v in x])
        else:
            for sdt, x in zip(traj.times, traj.values()):
                w.writerow([_fmt(sdt.t), sdt.minor] + [_fmt(v) for v in x])


def events_to_csv(traj: Trajectory, path):
    """Sidecar ``t,minor,source,q,pre1..pren,post1..postn``; ``minor`` is the
    pre-event index and ``q`` the flag string."""
    n = traj.n_xc + traj.n_xd
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "minor", "source", "q"] + [f"pre{i + 1}" for i in range(n)] + [f"post{i + 1}" for i in range(n)])
        for e in traj.events:
            pre = np.asarray(dual.value(e.x_pre), dtype=float)
            post = np.asarray(dual.value(e.x_post), dtype=float)
            qs = "".join(str(int(v)) for v in e.q)
            w.writerow([_fmt(e.time.t), e.time.minor - 1, e.source, qs] + [_fmt(v) for v in pre] + [_fmt(v) for v in post])


def read_trajectory_csv(path):
    """Returns ``(t, minor, X)`` arrays."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    body = rows[1:]
    t = np.array([float(r[0]) for r in body])
    minor = np.array([int(r[1]) for r in body], dtype=int)
    x = np.array([[float(v) for v in r[2:]] for r in body]).reshape(len(body), len(rows[0]) - 2)
    return t, minor, x
