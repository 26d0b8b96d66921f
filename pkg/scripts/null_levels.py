"""Empirical null levels and standardized-sample summaries.

    python scripts/null_levels.py --reps 10000 --jobs 4
"""

import argparse

from blockindep.core import Dims
from blockindep.rng import McConfig
from blockindep.simulate import NullScenario, run_null


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=100)
    ap.add_argument("--p", type=int, default=60)
    ap.add_argument("--p1", type=int, nargs="+", default=[10, 15, 30, 50])
    ap.add_argument("--stat", default="LR,W,LH,BNP")
    ap.add_argument("--reps", type=int, default=10000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    mc = McConfig(reps=args.reps, seed=args.seed, parallelism=args.jobs)
    print(f"{'p1':>4} {'stat':>5} {'level':>7} {'se':>7} {'mean z':>8} {'sd z':>7} {'KS':>7}")
    for p1 in args.p1:
        res = run_null(NullScenario(Dims(args.n, args.p, p1), seed=args.seed), args.stat, mc)
        for spec in res.stats:
            z = res.standardized[spec.label]
            print(f"{p1:>4} {spec.label:>5} {res.levels[spec.label]:7.4f} {res.se(spec.label):7.4f} "
                  f"{z.mean():8.4f} {z.std(ddof=1):7.4f} {res.ks(spec.label):7.4f}")


if __name__ == "__main__":
    main()
