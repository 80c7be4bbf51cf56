"""Hourly bike-sharing benchmark: 100 train / 100 validation rows, the rest test.

Usage: python scripts/bike_sharing.py [path/to/hour.csv] [--splits 20] [--seed 0]
"""
from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np
import pandas as pd

from catfuse.bench import tune
from catfuse.metrics import r_squared
from catfuse.model import CategoricalSchema, Dataset, linear_predictor

CATEGORICAL = ("season", "yr", "mnth", "hr", "holiday", "weekday", "workingday", "weathersit")
CONTINUOUS = ("temp", "atemp", "hum", "windspeed")
RESPONSE = "cnt"
DEFAULT_PATH = Path(__file__).resolve().parents[1] / "data" / "hour.csv"


def load(path) -> Dataset:
    frame = pd.read_csv(path)
    predictors, codes = [], []
    for name in CATEGORICAL:
        levels = np.sort(frame[name].unique())
        predictors.append((name, tuple(str(v) for v in levels)))
        codes.append(np.searchsorted(levels, frame[name].to_numpy()))
    return Dataset(CategoricalSchema(tuple(predictors)), np.column_stack(codes),
                   frame[list(CONTINUOUS)].to_numpy(float), frame[RESPONSE].to_numpy(float),
                   cont_names=CONTINUOUS, response_name=RESPONSE)


def run(path=DEFAULT_PATH, splits: int = 20, seed: int = 0, n_train: int = 100, n_val: int = 100) -> list[float]:
    ds = load(path)
    scores = []
    for s in range(splits):
        perm = np.random.default_rng([seed, s]).permutation(ds.n)
        tr, va, te = perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:]
        res = tune(ds.subset(tr), ds.subset(va))
        test = ds.subset(te)
        scores.append(r_squared(test.y, linear_predictor(test, res.coef)))
    return scores


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("path", nargs="?", type=Path, default=DEFAULT_PATH)
    ap.add_argument("--splits", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if not args.path.exists():
        print(f"dataset not found: {args.path}", file=sys.stderr)
        return 3
    t0 = time.perf_counter()
    scores = np.array(run(args.path, args.splits, args.seed))
    se = scores.std(ddof=1) / np.sqrt(scores.size) if scores.size > 1 else 0.0
    print(f"test R2 {scores.mean():.4f} (se {se:.4f}) over {scores.size} splits, {time.perf_counter() - t0:.0f}s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
