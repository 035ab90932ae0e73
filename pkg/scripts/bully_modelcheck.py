"""Exhaustive bully election check over small connected topologies."""

from __future__ import annotations

import argparse
import sys
import time

from geoloc.modelcheck import cases, run_case


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--max-nodes", type=int, default=4)
    ap.add_argument("--verbose", action="store_true")
    args = ap.parse_args()

    t0 = time.perf_counter()
    total = failed = 0
    for case in cases(args.max_nodes):
        total += 1
        out = run_case(case)
        if not out.ok:
            failed += 1
            if args.verbose or failed <= 5:
                print(f"FAIL {case}: {out.detail}")
    print(f"cases={total} failures={failed} seconds={time.perf_counter() - t0:.1f}")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
