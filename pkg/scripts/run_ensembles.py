"""Bagging and AdaBoost over TnT and CART at matched total split budgets.

    python scripts/run_ensembles.py --out reports/ensembles
"""

import argparse
from pathlib import Path

from tntgraph.cli import main as tnt

DATA = Path(__file__).resolve().parent.parent / "data"

# (method, total split budget)
RUNS = [("bagging", 570), ("adaboost", 200)]


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--dataset", default="pendigits")
    parser.add_argument("--estimators", type=int, default=5)
    parser.add_argument("--seeds", type=int, default=1)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--out", type=Path, default=Path("reports/ensembles"))
    args = parser.parse_args(argv)

    train, test = DATA / args.dataset, DATA / f"{args.dataset}.t"
    args.out.mkdir(parents=True, exist_ok=True)
    for method, budget in RUNS:
        for base in ("tnt", "cart"):
            for seed in range(args.seeds):
                report = args.out / f"{args.dataset}_{method}_{base}_s{seed}.json"
                tnt(["ensemble", "--method", method, "--base", base, "--estimators", str(args.estimators),
                     "--target-splits", str(budget), "--data", str(train), "--test", str(test),
                     "--seed", str(seed), "--jobs", str(args.jobs), "--report", str(report)])


if __name__ == "__main__":
    main()
