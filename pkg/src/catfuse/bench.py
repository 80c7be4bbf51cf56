"""Validation tuning over a penalty grid and replicated synthetic benchmarks."""
from __future__ import annotations

import dataclasses
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bcd import BcdConfig, FitResult, block_resolve_improvement, fit
from .datagen import SynthConfig, generate
from .metrics import EvalReport, accuracy, evaluate, r_squared
from .model import Coefficients, Dataset, Loss, PenaltyConfig, linear_predictor


def log_grid(lo: float = 1e-5, hi: float = 10.0, num: int = 10) -> tuple[float, ...]:
    return tuple(float(v) for v in np.logspace(np.log10(lo), np.log10(hi), num))


@dataclass(frozen=True)
class GridSpec:
    lambdas: tuple[float, ...] = field(default_factory=log_grid)
    lambda0s: tuple[float, ...] = field(default_factory=log_grid)
    metric: str = "auto"

    def __post_init__(self):
        if not self.lambdas or not self.lambda0s:
            raise ValueError("grids must be non-empty")
        if any(v < 0 or not math.isfinite(v) for v in (*self.lambdas, *self.lambda0s)):
            raise ValueError("grid values must be finite and non-negative")
        if self.metric not in ("auto", "r2", "accuracy"):
            raise ValueError("metric is 'auto', 'r2' or 'accuracy'")

    @classmethod
    def fusion_only(cls, num: int = 100, lo: float = 1e-5, hi: float = 10.0) -> "GridSpec":
        """One-dimensional grid with lambda0 = 0."""
        return cls(log_grid(lo, hi, num), (0.0,))

    def path(self) -> list[tuple[float, float]]:
        """Fit order: lambda descending, lambda0 ascending within each lambda."""
        return [(lam, l0) for lam in sorted(self.lambdas, reverse=True) for l0 in sorted(self.lambda0s)]


@dataclass
class TuneResult:
    coef: Coefficients
    lam: float
    lambda0: float
    score: float
    fit: FitResult
    path: list[dict]


def _score(ds: Dataset, coef: Coefficients, metric: str) -> float:
    eta = linear_predictor(ds, coef)
    if metric == "auto":
        metric = "accuracy" if ds.task == "binary" else "r2"
    return accuracy(ds.y, eta) if metric == "accuracy" else r_squared(ds.y, eta)


def tune(train: Dataset, val: Dataset, grid: GridSpec | None = None,
         cfg: BcdConfig | None = None, loss: Loss | None = None,
         cold_check: bool = True) -> TuneResult:
    """Fit every grid point on ``train`` and keep the best on ``val``.

    Each fit starts from the solution at the same lambda0 and the previous
    (larger) lambda. With ``cold_check`` a fit from the default start is also
    run and the lower training objective kept, so the path is never worse
    than independent fits. Ties prefer larger lambda, then larger lambda0.
    """
    grid = grid or GridSpec()
    cfg = cfg or BcdConfig()
    loss = loss or ("logistic" if train.task == "binary" else "squared")
    prev: dict[float, Coefficients] = {}
    best = None
    path = []
    for lam, l0 in grid.path():
        warm = prev.get(l0)
        pen = PenaltyConfig(l0, lam)
        res = fit(train, pen, _with_init(cfg, warm), loss)
        if warm is not None and cold_check:
            cold = fit(train, pen, _with_init(cfg, None), loss)
            if cold.objective < res.objective:
                res = cold
        prev[l0] = res.coef
        score = _score(val, res.coef, grid.metric)
        tr = np.asarray(res.objective_trace)
        rise = float(np.max(np.diff(tr), initial=0.0))
        path.append({"lambda": lam, "lambda0": l0, "score": score, "objective": res.objective,
                     "sweeps": res.sweeps, "max_rise": rise})
        key = (score, lam, l0)
        if best is None or key > best[0]:
            best = (key, res)
    (score, lam, l0), res = best
    return TuneResult(res.coef, lam, l0, score, res, path)


def _with_init(cfg: BcdConfig, init: Coefficients | None) -> BcdConfig:
    return dataclasses.replace(cfg, init=init)


METHODS = ("cl-l0", "cl")


def method_grid(method: str, base: GridSpec | None = None) -> GridSpec:
    if method == "cl-l0":
        return base or GridSpec()
    if method == "cl":
        return GridSpec.fusion_only() if base is None else GridSpec(base.lambdas, (0.0,), base.metric)
    raise ValueError(f"unknown method {method!r}")


@dataclass
class BenchResult:
    records: list[dict]
    aggregates: dict
    wall_time: float

    def reports(self, method: str) -> list[EvalReport]:
        keys = EvalReport.__dataclass_fields__
        return [EvalReport(**{k: r[k] for k in keys}) for r in self.records if r["method"] == method]


def _stats(values) -> dict:
    v = np.array([x for x in values if x is not None], dtype=float)
    if v.size == 0:
        return {"mean": None, "se": None, "n": 0}
    se = float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0
    return {"mean": float(v.mean()), "se": se, "n": int(v.size)}


def _one_replication(args) -> list[dict]:
    cfg, methods, rep, grids, bcd_cfg = args
    data = generate(cfg, rep)
    out = []
    for m in methods:
        t0 = time.perf_counter()
        tr = tune(data.train, data.val, grids[m], bcd_cfg)
        elapsed = time.perf_counter() - t0
        rpt = evaluate(tr.coef, data.test, data.beta_star, wall_time=elapsed)
        out.append({"method": m, "replication": rep, "lambda": tr.lam, "lambda0": tr.lambda0,
                    "snr": data.snr, "max_rise": max(r["max_rise"] for r in tr.path),
                    "fixed_point_gain": _fixed_point_gain(data.train, tr), **rpt.as_dict()})
    return out


def _fixed_point_gain(train: Dataset, tr: TuneResult) -> float | None:
    if train.task == "binary":
        return None
    return block_resolve_improvement(train, PenaltyConfig(tr.lambda0, tr.lam), tr.coef)


def benchmark(cfg: SynthConfig, methods=("cl-l0",), replications: int = 50,
              grid: GridSpec | None = None, bcd_cfg: BcdConfig | None = None,
              workers: int = 1) -> BenchResult:
    """Fresh data per replication from ``cfg.seed``, tuned on validation, scored on test."""
    t0 = time.perf_counter()
    grids = {m: method_grid(m, grid) for m in methods}
    jobs = [(cfg, tuple(methods), rep, grids, bcd_cfg or BcdConfig()) for rep in range(replications)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            chunks = list(ex.map(_one_replication, jobs))
    else:
        chunks = [_one_replication(j) for j in jobs]
    records = [r for c in chunks for r in c]
    agg = {}
    for m in methods:
        rows = [r for r in records if r["method"] == m]
        agg[m] = {k: _stats(r[k] for r in rows)
                  for k in ("r2", "accuracy", "purity", "impurity", "total_levels",
                            "nonzero_clusters", "wall_time", "snr")}
    return BenchResult(records, agg, time.perf_counter() - t0)


def write_results(result: BenchResult, path, meta: dict | None = None) -> None:
    """Line-delimited JSON: one record per replication and method, then an aggregate footer."""
    with open(path, "w", encoding="utf-8") as fh:
        for r in result.records:
            fh.write(json.dumps(_clean(r), sort_keys=True) + "\n")
        footer = {"aggregate": _clean(result.aggregates), "meta": meta or {}}
        fh.write(json.dumps(footer, sort_keys=True) + "\n")


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def read_results(path) -> tuple[list[dict], dict]:
    records, footer = [], {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            row = json.loads(line)
            if "aggregate" in row:
                footer = row
            else:
                records.append(row)
    return records, footer


__all__ = ["BenchResult", "GridSpec", "METHODS", "TuneResult", "benchmark", "log_grid",
           "method_grid", "read_results", "tune", "write_results"]
