"""Spread of the refraction walk next to the reflection walk.

Exploratory: estimates E|L_T - L_0|^2 / (d T) for both modes on the same
configuration and streams.
"""

from __future__ import annotations

import argparse
import math

from rbwalk.walk import WalkConfig, ensemble

def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--type", default="A2")
    ap.add_argument("--p", type=float, default=0.3)
    ap.add_argument("--T", type=float, default=500.0)
    ap.add_argument("--runs", type=int, default=400)
    ap.add_argument("--threads", type=int, default=4)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cfg = WalkConfig(args.type, args.p, (1.0, math.sqrt(2.0)), seed=args.seed)
    d = cfg.geom.rank
    for mode in ("continuous", "refraction"):
        disp = ensemble(cfg, args.runs, lambda tr: tr.points[-1] - tr.points[0], T=args.T, mode=mode,
                        threads=args.threads)
        sq = (disp ** 2).sum(1) / (d * args.T)
        print(f"{mode:11s} spread per unit time {sq.mean():.4f} +- {sq.std() / math.sqrt(sq.size):.4f}")

if __name__ == "__main__":
    main()
