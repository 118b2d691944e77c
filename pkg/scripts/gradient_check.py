"""Forward-mode gradient against central differences for a P-topology model.

Usage: python3 scripts/gradient_check.py [--scenario 3] [--horizon 0.2 0.6] [--n 20] [--h 1e-4]
"""

import argparse

import numpy as np

from huda import bench, dual
from huda.train import LossSpec, scenario_loss, simulate_on_data


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--scenario", type=int, default=3)
    ap.add_argument("--horizon", type=float, nargs="+", default=[0.2, 0.6])
    ap.add_argument("--n", type=int, default=20)
    ap.add_argument("--h", type=float, default=1e-4)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    cm = bench.build_cm("P", seed=args.seed)
    data = bench.generate_dataset(args.scenario)
    idx = np.sort(np.random.default_rng(2024).choice(cm.dims.n_p, size=args.n, replace=False))
    for horizon in args.horizon:
        f = lambda p: scenario_loss(cm, data, p, LossSpec(), horizon, None)
        ad = dual.gradient(f, cm.p0)[idx]
        fd = dual.finite_difference_gradient(lambda p: float(f(p)), cm.p0, h=args.h, indices=idx)[idx]
        n_ev = len(simulate_on_data(cm, data, cm.p0, horizon).events)
        err = np.max(np.abs(ad - fd)) / np.max(np.abs(fd))
        print(f"horizon {horizon:.2f} s, {n_ev} events: max|AD-FD|/max|FD| = {err:.2e}")


if __name__ == "__main__":
    main()
