"""Ball model plus network under one topology: train on scenarios 1-4, test on 5.

Usage: python3 scripts/experiment1.py [--topology P] [--seed 1] [--steps 3000] [--out out/experiment1]
Any other `huda experiment1` flag is passed through.
"""

import sys

from huda.cli import main

if __name__ == "__main__":
    args = sys.argv[1:]
    if "--out" not in args:
        args += ["--out", "out/experiment1"]
    sys.exit(main(["experiment1", *args]))
