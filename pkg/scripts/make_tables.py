"""Summarise report JSON files into markdown tables (accuracy mean+-sd, #S).

    python scripts/make_tables.py reports/single reports/ensembles
"""

import argparse
import json
from collections import defaultdict
from pathlib import Path

import numpy as np


def _key(rep: dict) -> tuple[str, str]:
    dataset = Path(rep["flags"]["data"]).name
    if rep["command"] == "ensemble":
        return dataset, f"{rep['base']}-{rep['method']}"
    return dataset, rep["model"]


def collect(dirs):
    groups = defaultdict(list)
    for d in dirs:
        for path in sorted(Path(d).glob("*.json")):
            rep = json.loads(path.read_text())
            if rep.get("test_accuracy") is None:
                continue
            groups[_key(rep)].append(rep)
    return groups


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("dirs", nargs="+")
    args = parser.parse_args(argv)

    groups = collect(args.dirs)
    print("| dataset | model | runs | test acc (%) | #S | path length |")
    print("|---|---|---|---|---|---|")
    for (dataset, model), reps in sorted(groups.items()):
        acc = 100 * np.array([r["test_accuracy"] for r in reps])
        splits = np.array([r["split_count"] for r in reps])
        paths = [r["path_length_mean"] for r in reps if "path_length_mean" in r]
        path = f"{np.mean(paths):.2f}" if paths else "-"
        print(f"| {dataset} | {model} | {len(reps)} | {acc.mean():.2f} +- {acc.std():.2f} "
              f"| {splits.mean():.0f} | {path} |")


if __name__ == "__main__":
    main()
