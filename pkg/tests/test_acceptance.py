"""One test per acceptance criterion; each records a pass/fail line.

The heavy criteria (6, 7, 9) train models. Criterion 7 shares its runs with
``scripts/topology_sweep.py`` through ``out/sweep`` and reuses finished runs
with identical settings.
"""

import json
import math
import os
import statistics
import time
from pathlib import Path

import numpy as np
import pytest

from huda import bench, dual
from huda.bench import build_cm, build_fpm, scenario
from huda.cli import EXPERIMENT_TOPOLOGIES, RunConfig, run_experiment1, run_experiment2, topology_sweep
from huda.compose import combine, local_to_global_a, local_to_global_b
from huda.connect import ConnDims, Mask, TopologyTag, make_connections
from huda.model import Dims, FunctionModel
from huda.solve import SolverOpts, integrate
from huda.structure import algebraic_loops, blt_sort, loop_free, worst_case_incidence
from huda.train import LossSpec, TrainState, scenario_loss, simulate_on_data

ROOT = Path(__file__).resolve().parents[1]
OUT = Path(os.environ.get("HUDA_ACCEPTANCE_OUT", ROOT / "out"))
SWEEP = OUT / "sweep"
G = 9.81


def timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


# ---- 1 ---------------------------------------------------------------------------------


def test_criterion_01_structure(verdict):
    def run():
        order = lambda label: blt_sort(worst_case_incidence(TopologyTag.parse(label)))
        return order("PSDa"), order("PSDb"), order("generic")

    (a, b, g), secs = timed(run)
    ok_a = a.ok and a.equations == ("c_a", "s_a", "c_b", "s_b", "c_z")
    ok_b = b.ok and b.equations == ("c_b", "s_b", "c_a", "s_a", "c_z")
    ok_g = not g.ok and any({"s_a", "s_b"} <= set(c) for c in g.loops)
    verdict(1, "BLT orders and generic loop", ok_a and ok_b and ok_g and secs < 1.0, f"PSDa {ok_a}, PSDb {ok_b}, generic loop {ok_g}, {secs:.3f} s")


# ---- 2 ---------------------------------------------------------------------------------


def cyclic_by_closure(inc) -> bool:
    """Independent oracle: a dependency cycle exists iff the transitive
    closure of the equation graph has a nonzero diagonal."""
    rows = list(inc.rows)
    solver = {inc.assign[r]: r for r in rows}
    n = len(rows)
    adj = np.zeros((n, n), dtype=bool)
    for i, r in enumerate(rows):
        for unk in inc.cols:
            blk = inc.block(r, unk)
            if not blk.any():
                continue
            j = rows.index(solver[unk])
            if i == j:
                adj[i, i] = bool((blk & ~np.eye(*blk.shape, dtype=bool)).any())
            else:
                adj[i, j] = True
    reach = adj.copy()
    for k in range(n):
        reach |= np.outer(reach[:, k], reach[k, :])
    return bool(np.diag(reach).any())


def test_criterion_02_loop_equivalence(verdict):
    def run():
        mismatches = []
        for p in (False, True):
            for s in (False, True):
                for d in (False, True):
                    for case in "ab":
                        tag = TopologyTag(p, s, d, case)
                        inc = worst_case_incidence(tag)
                        scc = not algebraic_loops(inc)
                        if loop_free(tag) != scc or scc == cyclic_by_closure(inc):
                            mismatches.append(tag.label)
        return mismatches

    bad, secs = timed(run)
    verdict(2, "loop_free vs SCC, 8 rows x 2 cases", not bad and secs < 1.0, f"{16 - len(bad)}/16 agree, {secs:.3f} s")


# ---- 3 ---------------------------------------------------------------------------------


def ball_energy(x):
    # kinetic plus potential measured from below the floor (always positive)
    x = np.atleast_2d(x)
    return 0.5 * (x[:, 1] ** 2 + x[:, 3] ** 2) + G * (x[:, 2] + 1.0)


def frictionless_drift():
    worst = 0.0
    for s in range(1, 6):
        tr = integrate(build_fpm(), scenario(s).x0, None, (0.0, 2.1))
        x = tr.values()
        minor = np.array([t.minor for t in tr.times])
        cuts = [0] + [i for i in range(1, len(minor)) if minor[i] > minor[i - 1]] + [len(minor)]
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            e = ball_energy(x[lo:hi])
            worst = max(worst, float(np.max(np.abs(e - e[0]) / e[0])))
    return worst


def test_criterion_03_solver_physics(verdict):
    def run():
        drift = frictionless_drift()
        tf = 0.4
        x0 = np.array([0.1, 0.5, 0.2, 1.0])
        ff = integrate(build_fpm(), x0, None, (0.0, tf)).final
        closed = np.array([0.1 + 0.5 * tf, 0.5, 0.2 + 1.0 * tf - 0.5 * G * tf * tf, 1.0 - G * tf])
        ff_err = float(np.max(np.abs(ff - closed)))
        tr = integrate(build_fpm(), np.zeros(4), None, (0.0, 0.6))
        ev = tr.events[0]
        t_err = abs(ev.time.t - math.sqrt(2 * 0.9 / G))
        v_err = abs(ev.x_post[3] - (-0.9 * ev.x_pre[3])) / abs(ev.x_pre[3])
        return drift, ff_err, t_err, v_err

    (drift, ff_err, t_err, v_err), secs = timed(run)
    ok = drift <= 1e-5 and ff_err <= 1e-6 and t_err <= 1e-6 and v_err <= 1e-12 and secs < 5.0
    verdict(
        3,
        "solver physics",
        ok,
        f"energy drift {drift:.2e}, free fall {ff_err:.2e}, bounce time {t_err:.2e} s, restitution {v_err:.2e}, {secs:.2f} s",
    )


# ---- 4 ---------------------------------------------------------------------------------


def test_criterion_04_event_propagation(verdict):
    def run():
        rng = np.random.default_rng(11)
        W = np.eye(4) + 0.3 * rng.normal(size=(4, 4))
        target = rng.normal(size=4)
        conn = make_connections(ConnDims(4, 4, 4, 4, 4, 4), {"az": W})
        inv_err = float(np.max(np.abs(local_to_global_a(conn, target) - np.linalg.solve(W, target))))
        one = ConnDims(1, 1, 1, 1, 1, 1)
        chain = make_connections(one, {"az": [[1.0]], "ba": [[1.0]]})
        u = local_to_global_b(chain, lambda v: v**3, np.array([5.0]), np.ones(1))
        root_err = abs(u[0] - 5.0 ** (1 / 3))
        resid = abs(u[0] ** 3 - 5.0)
        wide = make_connections(ConnDims(2, 2, 2, 2, 3, 3), {"az": [[2.0, 0.0, 0.0], [0.0, 1.0, 0.0]]})
        guess = np.array([1.0, 1.0, np.pi])
        kept = local_to_global_a(wide, np.array([4.0, 3.0]), guess)[2] == guess[2]
        three = make_connections(ConnDims(1, 1, 1, 1, 2, 2), {"az": [[1.0, 0.0]], "ba": [[1.0]]})
        kept_b = local_to_global_b(three, lambda v: v**3, np.array([8.0]), np.array([1.5, np.e]))[1] == np.e
        return inv_err, root_err, resid, kept and kept_b

    (inv_err, root_err, resid, kept), secs = timed(run)
    ok = inv_err <= 1e-8 and resid <= 1e-10 and root_err <= 1e-8 and kept and secs < 1.0
    verdict(4, "local-to-global propagation", ok, f"inverse {inv_err:.1e}, cube root {root_err:.1e} (residual {resid:.1e}), insensitive kept {kept}, {secs:.3f} s")


# ---- 5 ---------------------------------------------------------------------------------


def gradient_error(cm, data, horizon, idx):
    opts = SolverOpts()
    f = lambda p: scenario_loss(cm, data, p, LossSpec(), horizon, opts)
    ad = dual.gradient(f, cm.p0)[idx]
    fd = dual.finite_difference_gradient(lambda p: float(f(p)), cm.p0, h=1e-4, indices=idx)[idx]
    return float(np.max(np.abs(ad - fd)) / np.max(np.abs(fd)))


def test_criterion_05_gradient_fidelity(verdict):
    cm = build_cm("P", seed=1)
    data = bench.generate_dataset(3)

    def run():
        idx = np.sort(np.random.default_rng(2024).choice(cm.dims.n_p, size=20, replace=False))
        n_short = len(simulate_on_data(cm, data, cm.p0, 0.2).events)
        n_long = len(simulate_on_data(cm, data, cm.p0, 0.6).events)
        return gradient_error(cm, data, 0.2, idx), gradient_error(cm, data, 0.6, idx), n_short, n_long

    (e_free, e_bounce, n_short, n_long), secs = timed(run)
    ok = n_short == 0 and n_long == 1 and e_free < 1e-3 and e_bounce < 1e-2 and secs < 120
    verdict(5, "AD vs finite differences, 20 parameters", ok, f"event-free {e_free:.2e} ({n_short} events), one bounce {e_bounce:.2e} ({n_long} events), {secs:.1f} s")


# ---- 6 ---------------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_06_training_protocol(verdict, tmp_path_factory):
    # an independent process-level rerun lives in the sweep directory
    topology_sweep(SWEEP, ("P",), (1,), log=lambda *_: None)
    out = OUT / "acceptance" / "P_seed1"
    summary, secs = timed(lambda: run_experiment1(RunConfig("experiment1", "P", 1, 3000, out), log=lambda *_: None))
    same = (out / "loss_history.csv").read_bytes() == (SWEEP / "P_seed1" / "loss_history.csv").read_bytes()
    ok = summary["horizon"] >= 2.1 - 1e-9 and summary["worst_train_mae"] < 0.05 and same and secs < 900
    verdict(
        6,
        "P topology, 3000 steps",
        ok,
        f"horizon {summary['horizon']:.3f} s, worst train MAE {summary['worst_train_mae']:.4f}, test MAE {summary['test_mae']:.4f}, "
        f"history bit-identical {same}, {secs:.0f} s",
    )


# ---- 7 ---------------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_07_topology_ordering(verdict):
    res = topology_sweep(SWEEP, EXPERIMENT_TOPOLOGIES, (1, 2, 3), log=lambda *_: None)
    med = lambda topos, key: statistics.median(r[key] for t in topos for r in res[t].values())
    test_good = med(("P", "PD"), "test_mae")
    test_rich = med(("PSD", "PS"), "test_mae")
    train_med = {t: med((t,), "worst_train_mae") for t in EXPERIMENT_TOPOLOGIES}
    worst_others = max(v for t, v in train_med.items() if t not in ("S", "SD"))
    ok_test = test_good <= test_rich
    ok_train = min(train_med["S"], train_med["SD"]) > worst_others
    runtime = sum(r.get("runtime_s", math.inf) for t in res for r in res[t].values())
    table = ", ".join(f"{t} {train_med[t]:.3f}" for t in EXPERIMENT_TOPOLOGIES)
    verdict(
        7,
        "topology ordering over 3 seeds",
        ok_test and ok_train and runtime < 7200,
        f"median test MAE P/PD {test_good:.4f} vs PSD/PS {test_rich:.4f} ({ok_test}); median worst train MAE {table} "
        f"(S, SD worst: {ok_train}); {runtime:.0f} s",
    )


# ---- 8 ---------------------------------------------------------------------------------


def identity_wired(model, n=4):
    zero = FunctionModel(Dims(n_xc=n), f_c=lambda xc, xd, u, p, t: xc * 0.0, name="zero")
    conn = make_connections(ConnDims(n, n, n, n, n, n), {"az": np.eye(n), "za": np.eye(n)})
    return combine(model, zero, conn)


def test_criterion_08_closure_and_neutrality(verdict):
    def run():
        tight = SolverOpts(rel_tol=1e-10, abs_tol=1e-12)
        worst = 0.0
        count_ok = True
        for s in range(1, 6):
            x0 = scenario(s).x0
            ref = integrate(build_fpm(), x0, None, (0.0, 2.1), tight)
            for model in (identity_wired(build_fpm()), identity_wired(identity_wired(build_fpm()))):
                tr = integrate(model, x0, None, (0.0, 2.1), tight)
                count_ok &= len(tr.events) == len(ref.events)
                for a, b in zip(tr.events, ref.events):
                    worst = max(worst, abs(a.time.t - b.time.t), float(np.max(np.abs(a.x_post - b.x_post))))
                worst = max(worst, float(np.max(np.abs(tr.final - ref.final))))
        nested = combine(identity_wired(build_fpm()), build_cm("P", seed=4), make_connections(ConnDims(4, 4, 4, 4, 4, 4), {"az": np.eye(4), "bz": np.eye(4), "za": 0.5 * np.eye(4), "zb": 0.5 * np.eye(4)}))
        nested_tr = integrate(nested, scenario(1).x0, None, (0.0, 2.1))
        return worst, count_ok, bool(np.all(np.isfinite(nested_tr.final))), len(nested_tr.events)

    (worst, count_ok, nested_ok, n_nested), secs = timed(run)
    ok = worst <= 1e-8 and count_ok and nested_ok and secs < 10
    verdict(8, "closure and identity neutrality", ok, f"max deviation {worst:.1e} incl. event times, event counts equal {count_ok}, nested combination ran ({n_nested} events), {secs:.1f} s")


# ---- 9 ---------------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_09_common_interface(verdict):
    out = OUT / "acceptance" / "variants"
    res, secs = timed(lambda: run_experiment2(RunConfig("experiment2", seed=1, steps=3000, out_dir=out), log=lambda *_: None))
    ratios = {k: r["initial_loss"] / r["final_loss"] for k, r in res.items()}
    rnn = bench.build_variant("discrete", seed=1)
    ticks = integrate(rnn, rnn.x0, TrainState.load(out / "checkpoint_discrete.json").params, (0.0, 2.1)).events
    tick_ok = len(ticks) == 21 and np.allclose([e.time.t for e in ticks], np.arange(1, 22) / 10, atol=1e-9)
    easy_ticks = res["discrete"]["events"]
    ok = all(v >= 10 for v in ratios.values()) and tick_ok and easy_ticks == 8 and secs < 600
    detail = ", ".join(f"{k} {v:.1f}x" for k, v in ratios.items())
    verdict(9, "four variants through one train()", ok, f"loss reduction {detail}; 10 Hz ticks: {len(ticks)} over [0, 2.1], {easy_ticks} over [0, 0.8]; {secs:.0f} s")


# ---- 10 --------------------------------------------------------------------------------


def test_criterion_10_mask_integrity(verdict):
    paths = sorted(OUT.glob("**/checkpoint.json"))
    bad = []
    for path in paths:
        summary = json.loads((path.parent / "summary.json").read_text())
        cm = build_cm(summary["topology"], seed=summary["seed"])
        conn = cm.connections(TrainState.load(path).params)
        for name, mask in cm.conn.mask.items():
            if mask == Mask.ZERO and np.any(conn.blocks[name]):
                bad.append(f"{path.parent.name}:{name}")
            if mask == Mask.FROZEN and not np.array_equal(conn.blocks[name], cm.conn.blocks[name]):
                bad.append(f"{path.parent.name}:{name}")
        for side, mask in cm.conn.bias_mask.items():
            if mask != Mask.TRAINABLE and not np.array_equal(conn.biases[side], cm.conn.biases[side]):
                bad.append(f"{path.parent.name}:b_{side}")
    verdict(10, "masks on every checkpoint", bool(paths) and not bad, f"{len(paths)} checkpoints, violations: {bad or 'none'}")
