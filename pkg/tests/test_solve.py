import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from huda import dual
from huda.bench import BallConsts, build_fpm
from huda.errors import EventCascadeLimit, NoCrossing
from huda.model import Dims, FunctionModel
from huda.solve import A, B, C, E, P, SolverOpts, events_to_csv, integrate, locate_event, read_trajectory_csv, trajectory_to_csv

G = 9.81


def test_tableau_matches_reference_implementation():
    from scipy.integrate._ivp.rk import RK45

    assert np.allclose(C, RK45.C, rtol=1e-15, atol=0)
    for i in range(1, 6):
        assert np.allclose(A[i], RK45.A[i, :i], rtol=1e-15, atol=0)
    assert np.allclose(B, RK45.B, rtol=1e-15)
    assert np.allclose(E, RK45.E, rtol=1e-15)
    assert np.allclose(P, RK45.P, rtol=1e-15)


def test_free_fall_closed_form():
    tr = integrate(build_fpm(), np.zeros(4), None, (0.0, 0.1))
    x = tr.values()[-1]
    assert not tr.events
    assert x[2] == pytest.approx(-0.04905, abs=1e-6)
    assert x[3] == pytest.approx(-0.981, abs=1e-6)


def test_first_bounce_time_and_velocity():
    tr = integrate(build_fpm(), np.zeros(4), None, (0.0, 0.6))
    t_star = math.sqrt(2 * 0.9 / G)
    ev = tr.events[0]
    assert ev.time.t == pytest.approx(t_star, abs=1e-6)
    assert np.array_equal(ev.q, [0, 0, 1, 0])
    assert ev.x_post[3] == pytest.approx(0.9 * G * t_star, abs=1e-5)
    assert ev.x_post[2] == -0.9


def test_zero_dynamics_return_initial_state_bitwise():
    m = FunctionModel(Dims(n_xc=3), f_c=lambda xc, xd, u, p, t: np.zeros(3), x_c0=[0.1, -2.0, 3.3])
    tr = integrate(m, tspan=(0.0, 5.0))
    assert np.array_equal(tr.final, m.x0)


def test_exact_zero_at_start_is_not_an_event():
    tr = integrate(build_fpm(), np.array([0.0, 0.0, -0.9, 1.0]), None, (0.0, 0.1))
    assert not tr.events


def test_locate_linear_root():
    t, q = locate_event(lambda t: np.array([t - 0.5]), 0.0, 1.0, tol=1e-10)
    assert abs(t - 0.5) <= 1e-10 and np.array_equal(q, [1])


def test_locate_double_root_flags_both():
    t, q = locate_event(lambda t: np.array([t - 0.5, t - 0.5 - 1e-12, 1.0]), 0.0, 1.0, tol=1e-10)
    assert np.array_equal(q, [1, 1, 0])


def test_locate_picks_the_earliest_root():
    t, q = locate_event(lambda t: np.array([0.8 - t, t - 0.3]), 0.0, 1.0, ref=np.array([1.0, -1.0]), tol=1e-10)
    assert t == pytest.approx(0.3, abs=1e-10) and np.array_equal(q, [0, 1])


def test_locate_without_crossing_raises():
    with pytest.raises(NoCrossing):
        locate_event(lambda t: np.array([t + 1.0]), 0.0, 1.0)


def energy(x):
    return G * x[:, 2] + 0.5 * (x[:, 1] ** 2 + x[:, 3] ** 2)


def segments(tr):
    """Consecutive samples grouped between events."""
    x, minor = tr.values(), tr.minor
    out, cur = [], [0]
    for i in range(1, len(x)):
        if minor[i] > minor[i - 1]:
            out.append(cur)
            cur = [i]
        else:
            cur.append(i)
    out.append(cur)
    return [x[s] for s in out if len(s) > 1]


@pytest.mark.parametrize("s", [1, 2, 3, 4, 5])
def test_energy_conserved_between_events(s):
    from huda.bench import scenario

    tr = integrate(build_fpm(), scenario(s).x0, None, (0.0, 2.1))
    for seg in segments(tr):
        e = energy(seg)
        assert np.max(np.abs(e - e[0])) <= 1e-5 * max(abs(e[0]), 1.0)


@settings(max_examples=15, deadline=None)
@given(
    st.floats(-0.85, 0.85), st.floats(-8, 8), st.floats(-0.85, 0.85), st.floats(-8, 8)
)
def test_wall_containment_and_dissipation(sx, vx, sy, vy):
    x0 = np.array([sx, vx, sy, vy])
    tr = integrate(build_fpm(), x0, None, (0.0, 1.5))
    lim = 1 - BallConsts().r + 1e-6
    x = tr.values()
    assert np.all(np.abs(x[:, 0]) <= lim) and np.all(np.abs(x[:, 2]) <= lim)
    for ev in tr.events:
        for k, idx in ((0, 1), (1, 1), (2, 3), (3, 3)):
            if ev.q[k]:
                assert ev.x_post[idx] == pytest.approx(-0.9 * ev.x_pre[idx], rel=1e-12)
                assert abs(ev.x_post[idx - 1]) == 1 - BallConsts().r


def test_graze_hidden_behind_other_crossing_is_found():
    # apex 4 mm past the top wall, inside one large step that also hits the side wall
    tr = integrate(build_fpm(), np.array([-0.25, 3.0, 0.1875, 3.75]), None, (0.0, 1.5))
    lim = 1 - BallConsts().r + 1e-6
    assert np.abs(tr.values()[:, [0, 2]]).max() <= lim
    first = tr.events[0]
    assert first.q[3] and first.time.t == pytest.approx(0.35285, abs=1e-4)


def test_graze_does_not_mask_earlier_crossing():
    # top-wall graze and left-wall contact half a millisecond apart
    tr = integrate(build_fpm(), np.array([-0.25, -1.0, 0.0, -5.25]), None, (0.0, 1.5))
    lim = 1 - BallConsts().r + 1e-6
    assert np.abs(tr.values()[:, [0, 2]]).max() <= lim
    walls = [int(np.flatnonzero(e.q)[0]) for e in tr.events[:3]]
    assert walls == [2, 0, 3]


def test_isolated_graze_is_found():
    # peak at 0.9 + 1e-3 with no other wall nearby
    vy = np.sqrt(2 * G * (0.9 + 1e-3))
    tr = integrate(build_fpm(), np.array([0.0, 0.0, 0.0, vy]), None, (0.0, 0.5))
    assert len(tr.events) == 1 and tr.events[0].q[3]
    assert np.abs(tr.values()[:, 2]).max() <= 0.9 + 1e-9


def test_super_dense_samples_around_events():
    tr = integrate(build_fpm(), np.zeros(4), None, (0.0, 1.0))
    times = list(tr.times)
    assert times == sorted(times)
    for ev in tr.events:
        i = times.index(ev.time)
        assert times[i - 1].t == ev.time.t and times[i - 1].minor == ev.time.minor - 1


def test_tolerance_refinement_never_hurts():
    exact_y = -0.5 * G * 0.7**2
    errs = []
    for tol in (1e-4, 5e-5, 2.5e-5, 1.25e-5):
        m = FunctionModel(Dims(n_xc=2), f_c=lambda xc, xd, u, p, t: dual.stack([xc[1], -G + 0.0 * xc[1]]) if dual.is_dual(xc) else np.array([xc[1], -G]))
        tr = integrate(m, np.zeros(2), None, (0.0, 0.7), SolverOpts(rel_tol=tol, abs_tol=tol))
        errs.append(abs(tr.final[0] - exact_y))
    assert all(b <= a + 1e-15 for a, b in zip(errs, errs[1:]))


def test_dense_sampling_grid():
    grid = np.linspace(0, 1, 51)
    tr = integrate(build_fpm(), np.zeros(4), None, (0.0, 1.0), SolverOpts(dense_sampling=grid))
    gv = tr.grid_values()
    assert gv.shape == (51, 4)
    assert np.allclose(gv[:10, 2], -0.5 * G * grid[:10] ** 2, atol=1e-8)


def test_grid_sample_at_event_time_is_post_event():
    # indicator 0.3 - t fires exactly on a grid point; the affect adds 1
    m = FunctionModel(
        Dims(n_xc=0, n_xd=1, n_z=1),
        c=lambda xc, xd, u, p, t: dual.stack([0.3 - t + 10.0 * xd[0]]),
        a=lambda xc, xd, u, p, t, q: (xc, xd + 1.0),
    )
    grid = np.arange(6) / 10
    tr = integrate(m, np.zeros(1), None, (0.0, 0.5), SolverOpts(dense_sampling=grid))
    assert [float(x[0]) for x in tr.grid_states] == [0, 0, 0, 1, 1, 1]


def test_cascade_limit():
    # an affect that leaves the state on the wrong side every time
    m = FunctionModel(
        Dims(n_xc=1, n_z=1),
        f_c=lambda xc, xd, u, p, t: -np.ones(1) + 0.0 * xc,
        c=lambda xc, xd, u, p, t: xc,
        a=lambda xc, xd, u, p, t, q: (xc - 1.0, xd),
        x_c0=[0.5],
    )
    with pytest.raises(EventCascadeLimit):
        integrate(m, tspan=(0.0, 2.0), opts=SolverOpts(max_events_per_instant=3))


def test_options_validation():
    with pytest.raises(ValueError):
        SolverOpts(rel_tol=0)
    with pytest.raises(ValueError):
        SolverOpts(max_events_per_instant=0)


def test_csv_round_trip(tmp_path):
    tr = integrate(build_fpm(), np.array([0.3, 2.0, 0.0, 0.0]), None, (0.0, 1.0))
    path = tmp_path / "traj.csv"
    trajectory_to_csv(tr, path)
    t, minor, x = read_trajectory_csv(path)
    assert path.read_text().splitlines()[0] == "t,minor,x1,x2,x3,x4"
    assert np.array_equal(t, tr.t) and np.array_equal(minor, tr.minor) and np.array_equal(x, tr.values())
    events_to_csv(tr, tmp_path / "ev.csv")
    rows = (tmp_path / "ev.csv").read_text().splitlines()
    assert rows[0].startswith("t,minor,source,q,pre1") and len(rows) == len(tr.events) + 1


def drop_then_bounce(h):
    """Closed form of ``s_y + v_y`` at t = 0.6 for a drop from height ``h``."""
    t_hit = math.sqrt(2 * (h + 0.9) / G)
    v_up = 0.9 * G * t_hit
    tau = 0.6 - t_hit
    return -0.9 + v_up * tau - 0.5 * G * tau**2 + v_up - G * tau


def test_event_time_gradient_matches_closed_form():
    fpm = build_fpm()
    p = np.array([0.2])
    g = dual.gradient(lambda q: loss_ball(fpm, q), p)
    e = 1e-7
    exact = (drop_then_bounce(0.2 + e) - drop_then_bounce(0.2 - e)) / (2 * e)
    assert g[0] == pytest.approx(exact, rel=1e-6)
    fd = dual.finite_difference_gradient(lambda q: loss_ball(fpm, q), p, h=1e-6)
    assert g[0] == pytest.approx(fd[0], rel=1e-3)


def loss_ball(fpm, p):
    x0 = dual.stack([0.0 * p[0], 0.0 * p[0], p[0], 0.0 * p[0]]) if dual.is_dual(p) else np.array([0.0, 0.0, p[0], 0.0])
    tr = integrate(fpm, x0, p, (0.0, 0.6))
    x = tr.final
    return x[2] + x[3]
