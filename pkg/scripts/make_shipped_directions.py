"""Regenerate the optimized direction sets bundled in src/muchapro/data/.

    python scripts/make_shipped_directions.py [--restarts 100] [--seed 2024]
"""

import argparse
import time
from pathlib import Path

from muchapro.directions import SmoothedConditionParams, optimize_directions
from muchapro.io import write_directions

DATA = Path(__file__).resolve().parents[1] / "src" / "muchapro" / "data"
# two extra annealing stages polish the optimum a little further than the library default
SCHEDULE = (1.0, 0.3, 0.1, 0.03, 0.01, 0.003, 0.001)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--restarts", type=int, default=100)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--dims", type=int, nargs="+", default=[2, 3, 4])
    args = ap.parse_args()
    for D in args.dims:
        for mode in ("hermitian", "unconstrained"):
            t = time.time()
            params = SmoothedConditionParams(schedule=SCHEDULE, restarts=args.restarts, seed=args.seed)
            res = optimize_directions(D, D * D, mode, params)
            path = DATA / f"d{D}k{D * D}_{mode}.dirs"
            write_directions(path, res.dirs, mode=mode, seed=args.seed,
                             extra={"restarts": args.restarts, "schedule": list(SCHEDULE)})
            print(f"D={D} K={D * D} {mode:13s} cond={res.condition:.6f}  ({time.time() - t:.1f}s) -> {path.name}")


if __name__ == "__main__":
    main()
