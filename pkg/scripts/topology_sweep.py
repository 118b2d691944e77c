"""Train every investigated topology for several seeds and tabulate the MAEs.

Usage: python3 scripts/topology_sweep.py [--out out/sweep] [--steps 3000] [--seeds 1 2 3]
"""

import argparse
import json
import statistics
from pathlib import Path

from huda.cli import DESK_STEPS, EXPERIMENT_TOPOLOGIES, topology_sweep


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="out/sweep")
    ap.add_argument("--steps", type=int, default=DESK_STEPS)
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--topologies", nargs="+", default=list(EXPERIMENT_TOPOLOGIES))
    args = ap.parse_args()
    res = topology_sweep(args.out, args.topologies, tuple(args.seeds), args.steps)
    table = {}
    print(f"{'topology':>8} {'median train':>13} {'median test':>12} {'horizon':>8}")
    for topo, runs in res.items():
        tr = statistics.median(r["worst_train_mae"] for r in runs.values())
        te = statistics.median(r["test_mae"] for r in runs.values())
        hz = min(r["horizon"] for r in runs.values())
        table[topo] = {"median_worst_train_mae": tr, "median_test_mae": te, "min_horizon": hz}
        print(f"{topo:>8} {tr:13.5f} {te:12.5f} {hz:8.3f}")
    Path(args.out, "sweep_table.json").write_text(json.dumps(table, indent=1))


if __name__ == "__main__":
    main()
