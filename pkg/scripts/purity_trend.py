"""Purity and test R^2 against sample size for the 20-predictor, 3-active setting (sigma=2).

Usage: python scripts/purity_trend.py [--ns 100 500] [--reps 20] [--methods cl-l0 cl]
"""
import argparse

from catfuse.bench import benchmark
from catfuse.datagen import BetaStarSetting, SynthConfig


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ns", type=int, nargs="+", default=[100, 500])
    ap.add_argument("--reps", type=int, default=20)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--sigma", type=float, default=2.0)
    ap.add_argument("--methods", nargs="+", default=["cl-l0"])
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args(argv)
    setting = BetaStarSetting("eq10", q=20, q_s=3, r1=4, r2=12)
    print(f"{'n':>6} {'method':>7} {'purity':>16} {'test R2':>16} {'levels':>8}")
    for n in args.ns:
        cfg = SynthConfig(n, n, n, setting, sigma=args.sigma, seed=args.seed)
        res = benchmark(cfg, tuple(args.methods), args.reps, workers=args.workers)
        for m in args.methods:
            a = res.aggregates[m]
            print(f"{n:>6} {m:>7} {a['purity']['mean']:>8.4f} ({a['purity']['se']:.3f})"
                  f" {a['r2']['mean']:>8.4f} ({a['r2']['se']:.3f}) {a['total_levels']['mean']:>8.1f}")


if __name__ == "__main__":
    main()
