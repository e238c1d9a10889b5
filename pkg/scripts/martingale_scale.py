"""Martingale approximation error against the gap-block prediction.

The error at block ``n`` is carried by the gap steps, so its median scales
like ``sqrt(sum b_i / s_n)``; it only starts to fall once ``a_n`` outgrows
``b_n``.  Prints the measured medians next to that ratio and reports the
crossover block index.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys

from rbwalk.stats import martingale_error, martingale_schedule, mixing_rate
from rbwalk.walk import WalkConfig

def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p", type=float, default=0.3)
    ap.add_argument("--runs", type=int, default=1000)
    ap.add_argument("--n", type=int, nargs="+", default=[8, 16, 32, 64, 128])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cfg = WalkConfig("A2", args.p, (1.0, math.sqrt(2.0)), seed=args.seed)
    c = mixing_rate(cfg.geom, cfg.cutting(6000).labels, cfg.p)
    w = csv.writer(sys.stdout)
    w.writerow(["n", "s_n", "median_error", "gap_fraction_sqrt"])
    for n in args.n:
        m = martingale_error(cfg, n, args.runs, c=c)
        sched = martingale_schedule(n, c)
        frac = math.sqrt(sched.b.sum() / sched.s[n])
        w.writerow([n, m.s_n, f"{m.median:.4f}", f"{frac:.4f}"])
    k = 1
    while math.ceil(k ** (1 / 3)) <= math.ceil(2 * math.log(k + 1) / math.log(1 / c)):
        k = int(k * 1.5) + 1
    s_cross = sum(math.ceil(i ** (1 / 3)) + math.ceil(2 * math.log(i + 1) / math.log(1 / c))
                  for i in range(1, k + 1))
    print(f"# c={c:.4f}; a_n first exceeds b_n near n={k} (s_n about {s_cross:.2e} crossings)",
          file=sys.stderr)

if __name__ == "__main__":
    main()
