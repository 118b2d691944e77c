"""Command-line entry point: ``huda experiment1|experiment2|analyze``."""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import bench
from .connect import BLOCKS, ConnDims, TopologyTag, init_connections, to_json
from .errors import HudaError
from .solve import SolverOpts, events_to_csv, integrate, trajectory_to_csv
from .structure import algebraic_loops, blt_sort, tarjan_scc, worst_case_incidence
from .train import TrainConfig, scenario_loss, simulate_on_data, train, worst_mae, write_history_csv

FULL_STEPS = 20_000
DESK_STEPS = 3_000
DATA_HZ = 50.0
# the six investigated topologies
EXPERIMENT_TOPOLOGIES = ("PSD", "PS", "PD", "P", "SD", "S")


@dataclass(frozen=True)
class RunConfig:
    command: str
    topology: str = "P"
    seed: int = 1
    steps: int = DESK_STEPS
    out_dir: Path = Path("out")
    rel_tol: float = 1e-6
    abs_tol: float = 1e-8
    sample_hz: float | None = None
    noise_scale: float = 0.05
    kind: str = "all"
    extend_repeatedly: bool = False


# ---- matrix bitmaps -------------------------------------------------------------------


def dump_matrix_grayscale(w, path) -> float:
    """Write ``|w|`` as an 8-bit PGM (white = 1 after contrast scaling).

    The scale ``1 / max|w|`` (or 1 for an all-zero block) is written to a
    ``.txt`` file next to the image and returned.
    """
    w = np.atleast_2d(np.asarray(w, dtype=float))
    if w.size == 0:
        raise ValueError("cannot render an empty block")
    peak = float(np.max(np.abs(w)))
    scale = 1.0 / peak if peak > 0 else 1.0
    pix = np.rint(255.0 * np.minimum(1.0, np.abs(w) * scale)).astype(np.uint8)
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w.shape[1]} {w.shape[0]}\n255\n".encode("ascii"))
        fh.write(pix.tobytes())
    path.with_suffix(".txt").write_text(f"scale {scale!r}\n")
    return scale


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    w, h = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)


def dump_connections(conn, out: Path, prefix="W"):
    for name in BLOCKS:
        w = conn.blocks[name]
        if w.size:
            dump_matrix_grayscale(w, out / f"{prefix}_{name}.pgm")


# ---- commands --------------------------------------------------------------------------


def _ensure_out(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _train_config(cfg: RunConfig) -> TrainConfig:
    return TrainConfig(steps=cfg.steps, seed=cfg.seed, rel_tol=cfg.rel_tol, abs_tol=cfg.abs_tol, extend_repeatedly=cfg.extend_repeatedly)


def _write_sim(model, data, params, tcfg, out: Path, stem: str):
    tr = simulate_on_data(model, data, params, None, tcfg.solver_opts())
    trajectory_to_csv(tr, out / f"{stem}.csv", grid=True)
    events_to_csv(tr, out / f"{stem}_events.csv")
    return tr


def _settings(cfg: RunConfig) -> dict:
    return {"sample_hz": cfg.sample_hz, "rel_tol": cfg.rel_tol, "abs_tol": cfg.abs_tol, "noise_scale": cfg.noise_scale, "extend_repeatedly": cfg.extend_repeatedly}


def run_experiment1(cfg: RunConfig, log=print) -> dict:
    tag = TopologyTag.parse(cfg.topology)
    if tag.generic or not (tag.parallel or tag.sequential):
        if tag.dft:
            raise ValueError("topology D only links the combined state to its derivative and cannot express the bouncing ball")
        raise ValueError(f"topology {cfg.topology!r} has no connection between the submodels")
    out = _ensure_out(cfg)
    started = time.perf_counter()
    cm = bench.build_cm(tag, seed=cfg.seed, noise_scale=cfg.noise_scale)
    hz = DATA_HZ if cfg.sample_hz is None else cfg.sample_hz
    train_data = [bench.generate_dataset(s, hz) for s in bench.TRAIN_SCENARIOS]
    test_data = bench.generate_dataset(bench.TEST_SCENARIO, hz)
    for d in train_data + [test_data]:
        d.to_csv(out / f"data_s{d.scenario}.csv")
    tcfg = _train_config(cfg)
    dump_connections(cm.conn, out, "W_init")
    state, history = train(cm, train_data, tcfg)
    write_history_csv(history, out / "loss_history.csv")
    state.save(out / "checkpoint.json")
    conn = cm.connections(state.params)
    (out / "connections.json").write_text(to_json(conn))
    dump_connections(conn, out, "W")
    losses = {}
    for d in train_data + [test_data]:
        _write_sim(cm, d, state.params, tcfg, out, f"traj_s{d.scenario}")
        losses[d.scenario] = float(scenario_loss(cm, d, state.params, tcfg.loss, None, tcfg.solver_opts()))
    summary = {
        "topology": tag.label,
        "seed": cfg.seed,
        "steps": cfg.steps,
        "horizon": state.horizon,
        "train_mae": {str(s): losses[s] for s in bench.TRAIN_SCENARIOS},
        "worst_train_mae": max(losses[s] for s in bench.TRAIN_SCENARIOS),
        "mean_train_mae": float(np.mean([losses[s] for s in bench.TRAIN_SCENARIOS])),
        "test_mae": losses[bench.TEST_SCENARIO],
        "settings": _settings(cfg),
        "runtime_s": time.perf_counter() - started,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=1))
    log(f"topology {tag.label}: horizon {state.horizon:.3f} s")
    log(f"train MAE (worst) {summary['worst_train_mae']:.6f}  test MAE {summary['test_mae']:.6f}")
    return summary


def run_experiment2(cfg: RunConfig, log=print) -> dict:
    kinds = bench.KINDS if cfg.kind == "all" else (cfg.kind,)
    out = _ensure_out(cfg)
    data = bench.easy_dataset(cfg.sample_hz)
    data.to_csv(out / "data_easy.csv")
    tcfg = _train_config(cfg)
    results = {}
    for kind in kinds:
        model = bench.build_variant(kind, seed=cfg.seed)
        opts = tcfg.solver_opts()
        before = float(scenario_loss(model, data, model.p0, tcfg.loss, None, opts))
        state, history = train(model, [data], tcfg)
        after = float(scenario_loss(model, data, state.params, tcfg.loss, None, opts))
        stem = kind.replace("+", "_")
        write_history_csv(history, out / f"loss_{stem}.csv")
        state.save(out / f"checkpoint_{stem}.json")
        tr = _write_sim(model, data, state.params, tcfg, out, f"traj_{stem}")
        results[kind] = {"initial_loss": before, "final_loss": after, "events": len(tr.events), "horizon": state.horizon}
        log(f"{kind}: loss {before:.6f} -> {after:.6f} ({len(tr.events)} events)")
    (out / "summary.json").write_text(json.dumps(results, indent=1))
    return results


def topology_sweep(out_dir, topologies=EXPERIMENT_TOPOLOGIES, seeds=(1, 2, 3), steps=DESK_STEPS, log=print, **overrides) -> dict:
    """Run experiment1 for every topology and seed; finished runs are reused.

    A run counts as finished when its ``summary.json`` records the same step
    budget. Returns ``{topology: {seed: summary}}``.
    """
    out_dir = Path(out_dir)
    settings = _settings(RunConfig("experiment1", **overrides))
    results: dict = {}
    for topo in topologies:
        for seed in seeds:
            run_dir = out_dir / f"{topo}_seed{seed}"
            done = run_dir / "summary.json"
            if done.exists():
                summary = json.loads(done.read_text())
                if summary.get("steps") == steps and summary.get("settings") == settings:
                    results.setdefault(topo, {})[seed] = summary
                    continue
            cfg = RunConfig("experiment1", topology=topo, seed=seed, steps=steps, out_dir=run_dir, **overrides)
            results.setdefault(topo, {})[seed] = run_experiment1(cfg, log=log)
    return results


def analyze_report(topology: str) -> tuple[str, object]:
    tag = TopologyTag.parse(topology)
    inc = worst_case_incidence(tag)
    lines = [f"topology {tag.label}", inc.ascii(), "components: " + "; ".join("{" + ", ".join(sorted(c)) + "}" for c in tarjan_scc(inc))]
    res = blt_sort(inc)
    if res.ok:
        lines.append("loop-free; order: " + ", ".join(res.equations))
    else:
        lines.append("algebraic loop: " + str(res))
    return "\n".join(lines), (inc, res)


def run_analyze(cfg: RunConfig, log=print):
    text, (inc, res) = analyze_report(cfg.topology)
    log(text)
    out = _ensure_out(cfg)
    label = TopologyTag.parse(cfg.topology).label
    dump_matrix_grayscale(inc.data.astype(float), out / f"incidence_{label}.pgm")
    (out / f"analyze_{label}.txt").write_text(text + "\n")
    return res


# ---- argument parsing --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="huda", description="Combine, simulate and train hybrid models.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, topology_default):
        sp.add_argument("--topology", default=topology_default)
        sp.add_argument("--seed", type=int, default=1)
        sp.add_argument("--steps", type=int, default=DESK_STEPS)
        sp.add_argument("--out", default=os.environ.get("HUDA_OUT", "out"))
        sp.add_argument("--sample-hz", type=float, default=None, help=f"data rate (default {DATA_HZ:g} Hz, {bench.EASY_SAMPLE_HZ:g} Hz for experiment2)")
        sp.add_argument("--rel-tol", type=float, default=1e-6)
        sp.add_argument("--abs-tol", type=float, default=1e-8)
        sp.add_argument("--noise-scale", type=float, default=0.05)
        sp.add_argument("--full-paper-budget", action="store_true", help=f"train for {FULL_STEPS} steps")
        sp.add_argument("--extend-repeatedly", action="store_true", help="grow the horizon repeatedly per check")

    common(sub.add_parser("experiment1", help="ball model plus network, trained under one topology"), "P")
    e2 = sub.add_parser("experiment2", help="four model kinds trained by the same loop")
    common(e2, "P")
    e2.add_argument("--kind", default="all", choices=("all",) + bench.KINDS)
    common(sub.add_parser("analyze", help="structural report for a topology"), "PSDa")
    return p


def config_from_args(ns) -> RunConfig:
    return RunConfig(
        command=ns.command,
        topology=ns.topology,
        seed=ns.seed,
        steps=FULL_STEPS if ns.full_paper_budget else ns.steps,
        out_dir=Path(ns.out),
        rel_tol=ns.rel_tol,
        abs_tol=ns.abs_tol,
        sample_hz=ns.sample_hz,
        noise_scale=ns.noise_scale,
        kind=getattr(ns, "kind", "all"),
        extend_repeatedly=ns.extend_repeatedly,
    )


COMMANDS = {"experiment1": run_experiment1, "experiment2": run_experiment2, "analyze": run_analyze}


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    cfg = config_from_args(ns)
    try:
        COMMANDS[cfg.command](cfg)
    except (HudaError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
