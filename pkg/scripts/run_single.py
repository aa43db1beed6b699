"""Single-model benchmark: TnT against best-first CART on the bundled datasets.

For each dataset the TnT coefficient is tuned once (seed 0) to the target
split count over the dataset's default C range; then every seed trains TnT
with that C and CART at its own split budget.  One report JSON per run
lands in ``--out``; summarise them with ``make_tables.py``.

    python scripts/run_single.py --out reports/single
"""

import argparse
from pathlib import Path

from tntgraph.cli import main as tnt
from tntgraph.dataset import load_libsvm
from tntgraph.ensemble import c_range_for, tune_c_for_budget
from tntgraph.tnt import TnTConfig

DATA = Path(__file__).resolve().parent.parent / "data"

# dataset -> (TnT split target, CART split budget)
TARGETS = {
    "pendigits": (125, 166),
    "optdigits": (174, 193),
    "mnist": (600, 1100),
    "connect4": (864, 931),
    "senseit": (198, 345),
}


def run(name: str, seeds: range, out: Path, grid: int):
    train = DATA / name
    test = DATA / f"{name}.t"
    if not (train.exists() and test.exists()):
        print(f"skip {name}: data files missing")
        return
    tnt_target, cart_budget = TARGETS[name]
    C, splits = tune_c_for_budget(load_libsvm(train), tnt_target, TnTConfig(), c_range_for(name), grid)
    print(f"{name}: C={C:.4g} gives {splits} splits (target {tnt_target})")
    out.mkdir(parents=True, exist_ok=True)
    common = ["--data", str(train), "--test", str(test), "--tie-break", "random"]
    for seed in seeds:
        tnt(["train", "--algo", "tnt", "--c", repr(C), "--seed", str(seed), *common,
             "--report", str(out / f"{name}_tnt_s{seed}.json")])
        tnt(["train", "--algo", "cart", "--max-splits", str(cart_budget), "--seed", str(seed), *common,
             "--report", str(out / f"{name}_cart_s{seed}.json")])


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--datasets", nargs="+", default=["pendigits", "optdigits"], choices=sorted(TARGETS))
    parser.add_argument("--seeds", type=int, default=5)
    parser.add_argument("--grid", type=int, default=30)
    parser.add_argument("--out", type=Path, default=Path("reports/single"))
    args = parser.parse_args(argv)
    for name in args.datasets:
        run(name, range(args.seeds), args.out, args.grid)


if __name__ == "__main__":
    main()
