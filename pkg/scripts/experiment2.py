"""Train the four model kinds (neural ODE, RNN, each with and without wall
events) on the drop-and-bounce trajectory through the same training loop.

Usage: python3 scripts/experiment2.py [--kind all] [--steps 3000] [--out out/experiment2]
"""

import sys

from huda.cli import main

if __name__ == "__main__":
    args = sys.argv[1:]
    if "--out" not in args:
        args += ["--out", "out/experiment2"]
    sys.exit(main(["experiment2", *args]))
