"""Exact and Monte-Carlo TV-to-uniform curves of pi(w_n) for several types."""

from __future__ import annotations

import argparse
import csv
import math
import sys

from rbwalk.mixing import mixing_curve
from rbwalk.walk import WalkConfig


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--types", nargs="+", default=["A2", "B2", "G2"])
    ap.add_argument("--p", type=float, default=0.3)
    ap.add_argument("--n-max", type=int, default=60)
    ap.add_argument("--runs", type=int, default=50_000)
    ap.add_argument("--n0", type=int, default=0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    w = csv.writer(sys.stdout)
    w.writerow(["type", "n", "tv", "tv_exact", "band", "c_hat", "c_envelope", "c_certified"])
    for t in args.types:
        cfg = WalkConfig(t, args.p, (1.0, math.sqrt(2.0)), seed=args.seed)
        cv = mixing_curve(cfg, args.n_max, args.runs, n0=args.n0)
        for n in range(args.n_max + 1):
            w.writerow([t, n, f"{cv.tv[n]:.6f}", f"{cv.tv_exact[n]:.6g}", f"{cv.band:.6f}",
                        f"{cv.c_hat:.4f}", f"{cv.c_envelope:.4f}", f"{cv.c_certified:.4f}"])


if __name__ == "__main__":
    main()
