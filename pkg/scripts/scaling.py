"""Fit time against graph size over a C sweep, with the log-log slope.

    python scripts/scaling.py --dataset pendigits --out reports/scaling.csv
"""

import argparse
import csv
import time
from pathlib import Path

import numpy as np

from tntgraph.dataset import load_libsvm
from tntgraph.graph import split_count
from tntgraph.tnt import TnTConfig, fit_tnt

DATA = Path(__file__).resolve().parent.parent / "data"


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--dataset", default="pendigits")
    parser.add_argument("--c-min", type=float, default=1e-4)
    parser.add_argument("--c-max", type=float, default=3e-3)
    parser.add_argument("--grid", type=int, default=12)
    parser.add_argument("--out", type=Path, default=Path("reports/scaling.csv"))
    args = parser.parse_args(argv)

    ds = load_libsvm(DATA / args.dataset)
    rows = []
    for C in np.geomspace(args.c_max, args.c_min, args.grid):
        t0 = time.perf_counter()
        g = fit_tnt(ds, TnTConfig(C=float(C)))
        rows.append({"C": float(C), "splits": split_count(g), "nodes": g.n_nodes,
                     "time": time.perf_counter() - t0})
        print(f"C={C:.3g} splits={rows[-1]['splits']} time={rows[-1]['time']:.2f}s", flush=True)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    slope = np.polyfit(np.log([r["nodes"] for r in rows]), np.log([r["time"] for r in rows]), 1)[0]
    print(f"log-log slope of time vs nodes: {slope:.3f}")


if __name__ == "__main__":
    main()
