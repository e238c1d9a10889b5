"""sigma^2 along a sweep of directions, including rational ones.

Exploratory: looks for a jump of sigma^2 at rational b.  Directions that
hit a codimension-2 face are jittered with a fixed seed.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys

import numpy as np

from rbwalk.raytrace import classify_direction
from rbwalk.stats import empirical_sigma
from rbwalk.walk import WalkConfig


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--type", default="A2")
    ap.add_argument("--p", type=float, default=0.3)
    ap.add_argument("--angles", type=int, default=25)
    ap.add_argument("--steps", type=int, default=5000)
    ap.add_argument("--runs", type=int, default=5000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    w = csv.writer(sys.stdout)
    w.writerow(["angle", "class", "sigma2", "se"])
    base = WalkConfig(args.type, args.p)
    for th in np.linspace(0.0, math.pi / 3, args.angles):
        b = (math.cos(th), math.sin(th))
        kind, _ = classify_direction(b, base.geom.spec)
        cfg = WalkConfig(args.type, args.p, b, seed=args.seed, jitter=1)
        est = empirical_sigma(cfg, args.steps, args.runs)
        w.writerow([f"{th:.6f}", kind, f"{est.sigma2:.5f}", f"{est.se:.5f}"])


if __name__ == "__main__":
    main()
