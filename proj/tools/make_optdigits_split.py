#!/usr/bin/env python3
"""Write a deterministic stratified train/test split of the scikit-learn copy
of the UCI optdigits test file (1797 rows, 64 features, 10 classes).

Output: data/optdigits-tes-split.train.csv and .test.csv, no header, label last.
"""
import argparse
import pathlib

import numpy as np
from sklearn.datasets import load_digits
from sklearn.model_selection import train_test_split


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "data"))
    ap.add_argument("--test-size", type=int, default=600)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    x, y = load_digits(return_X_y=True)
    xtr, xte, ytr, yte = train_test_split(
        x, y, test_size=args.test_size, stratify=y, random_state=args.seed)
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, xs, ys in (("train", xtr, ytr), ("test", xte, yte)):
        rows = np.column_stack([xs.astype(int), ys.astype(int)])
        np.savetxt(out / f"optdigits-tes-split.{name}.csv", rows, fmt="%d", delimiter=",")
        print(f"{name}: {len(ys)} rows")


if __name__ == "__main__":
    main()
