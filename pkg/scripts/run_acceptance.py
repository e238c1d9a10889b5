"""Every acceptance criterion at full budget; writes a JSON summary."""

from __future__ import annotations

import argparse
import json
import sys

from rbwalk import verify


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--reduced", action="store_true", help="use the verify-all budgets")
    ap.add_argument("--out", default="acceptance.json")
    args = ap.parse_args()

    budget = verify.REDUCED if args.reduced else verify.FULL
    results = []
    for crit in verify.CRITERIA:
        for r in crit(budget):
            print(r.line(), flush=True)
            results.append(r.as_dict())
    with open(args.out, "w") as fh:
        json.dump(results, fh, indent=2)
    sys.exit(0 if all(r["ok"] or r["expected_fail"] for r in results) else 1)


if __name__ == "__main__":
    main()
