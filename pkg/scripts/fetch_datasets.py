"""Write the Pendigits and Optical-recognition benchmarks as LIBSVM files.

The UCI originals are not reachable from the build sandbox, so the copies
bundled in the ``keel-ds`` wheel are used instead (``pip install keel-ds``).
Those files keep the original row order: the first rows are the UCI
``.tra`` training file and the remainder the ``.tes`` test file.  For
optdigits this is checked against ``sklearn.datasets.load_digits``, which
ships the test half.

Usage::

    python scripts/fetch_datasets.py [--out data]
"""

import argparse
from pathlib import Path

import numpy as np

from tntgraph.dataset import Dataset, write_libsvm

# name -> (keel file, number of training rows in the UCI split)
SOURCES = {
    "pendigits": ("penbased.dat", 7494),
    "optdigits": ("optdigits.dat", 3823),
}


def _read_keel(path):
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("@"):
                continue
            rows.append([float(v) for v in line.split(",")])
    arr = np.asarray(rows)
    return arr[:, :-1], arr[:, -1].astype(np.int64)


def _check_optdigits(X, y, n_train):
    try:
        from sklearn.datasets import load_digits
    except ImportError:
        return
    digits = load_digits()
    if not (np.array_equal(X[n_train:], digits.data) and np.array_equal(y[n_train:], digits.target)):
        raise RuntimeError("optdigits test rows do not match sklearn's copy; row order changed")


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=Path, default=Path(__file__).resolve().parent.parent / "data")
    args = parser.parse_args(argv)

    import keel_ds

    raw = Path(keel_ds.__file__).parent / "data" / "balanced" / "raw"
    args.out.mkdir(parents=True, exist_ok=True)
    for name, (fname, n_train) in SOURCES.items():
        X, y = _read_keel(raw / fname)
        if name == "optdigits":
            _check_optdigits(X, y, n_train)
        # LIBSVM convention for these sets: original digit labels, 1-based features
        n_classes = int(y.max()) + 1
        for suffix, sl in (("", slice(0, n_train)), (".t", slice(n_train, None))):
            ds = Dataset(X[sl], y[sl], n_classes)
            path = args.out / f"{name}{suffix}"
            write_libsvm(ds, path)
            print(f"{path}: {ds.n_samples} x {ds.n_features}, {n_classes} classes")


if __name__ == "__main__":
    main()
