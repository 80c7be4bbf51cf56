"""Command-line entry point: ``catfuse <command> [options]``.

Exit status: 0 success, 1 solver/backend failure, 2 usage error, 3 data error,
4 enumeration guard exceeded. Numbers on stdout carry 12 significant digits.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np
import pandas as pd

from .bcd import BcdConfig, fit
from .bench import GridSpec, benchmark, log_grid, tune, write_results
from .datagen import BetaStarSetting, SynthConfig, generate
from .dp import solve_unsorted
from .io import (
    coefficients_doc,
    read_coefficients,
    read_dataset,
    sha256_file,
    write_coefficients,
    write_dataset,
)
from .metrics import evaluate, snap_to_clusters
from .mip import (
    BackendError,
    EnumerativeBackend,
    FileBackend,
    GuardExceeded,
    build_mip,
    choose_bigM,
    export_model,
    row_generation,
)
from .model import DataError, PenaltyConfig

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_DATA, EXIT_GUARD = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


def _version() -> str:
    try:
        return version("catfuse")
    except PackageNotFoundError:
        return "0+unknown"


def _round(obj):
    if isinstance(obj, dict):
        return {k: _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return str(x)
        return float(f"{x:.12g}")
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def emit(doc: dict) -> None:
    sys.stdout.write(json.dumps(_round(doc), indent=2) + "\n")


def write_manifest(args, outputs: list[Path], wall: float, extra: dict | None = None,
                   path: Path | None = None) -> Path | None:
    outputs = [Path(p) for p in outputs if p is not None]
    if not outputs:
        return None
    if path is None:
        first = outputs[0]
        path = first.with_name(first.stem + ".manifest.json")
    argdoc = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config")}
    doc = {
        "command": args.command,
        "args": {k: (str(v) if isinstance(v, Path) else v) for k, v in argdoc.items()},
        "seeds": {k: argdoc[k] for k in ("seed",) if k in argdoc},
        "version": _version(),
        "wall_time_s": wall,
        "outputs": {str(p): sha256_file(p) for p in outputs},
    }
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(_round_inf(doc), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return Path(path)


def _round_inf(obj):
    if isinstance(obj, dict):
        return {k: _round_inf(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_inf(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def _need(args, *names):
    for n in names:
        if getattr(args, n, None) is None:
            raise UsageError(f"{args.command}: missing required option --{n.replace('_', '-')}")


def _penalties(args) -> PenaltyConfig:
    _need(args, "lam", "lambda0")
    return PenaltyConfig(args.lambda0, args.lam)


def _bcd_cfg(args) -> BcdConfig:
    return BcdConfig(max_sweeps=args.max_sweeps, rel_tol=args.tol,
                     use_active_sets=not args.no_active_sets, seed=args.seed)


# -- commands -------------------------------------------------------------------

def cmd_fit(args) -> list[Path]:
    _need(args, "data", "schema")
    ds = read_dataset(args.data, args.schema)
    res = fit(ds, _penalties(args), _bcd_cfg(args), args.loss)
    doc = {
        "objective": res.objective,
        "sweeps": res.sweeps,
        "converged": res.converged,
        "active_set_rounds": res.active_set_rounds,
        "level_counts": {name: n for name, n in zip(ds.schema.names, res.coef.distinct_counts())},
        "coefficients": coefficients_doc(res.coef, ds.schema, ds.cont_names),
        "wall_time_ms": res.wall_time * 1e3,
    }
    emit(doc)
    if args.out:
        write_coefficients(res.coef, ds, args.out)
        return [Path(args.out)]
    return []


def _grid(args) -> GridSpec:
    lams = tuple(args.lambdas) if args.lambdas else log_grid(args.grid_min, args.grid_max, args.n_lambda)
    if args.lambda0_zero:
        return GridSpec(lams if args.lambdas else log_grid(args.grid_min, args.grid_max, 100), (0.0,))
    l0s = tuple(args.lambda0s) if args.lambda0s else log_grid(args.grid_min, args.grid_max, args.n_lambda)
    return GridSpec(lams, l0s)


def cmd_tune(args) -> list[Path]:
    _need(args, "train", "val", "schema")
    train = read_dataset(args.train, args.schema)
    val = read_dataset(args.val, args.schema)
    tr = tune(train, val, _grid(args), _bcd_cfg(args))
    emit({"lambda": tr.lam, "lambda0": tr.lambda0, "validation_score": tr.score,
          "objective": tr.fit.objective,
          "level_counts": dict(zip(train.schema.names, tr.coef.distinct_counts())),
          "coefficients": coefficients_doc(tr.coef, train.schema, train.cont_names)})
    if args.out:
        write_coefficients(tr.coef, train, args.out)
        return [Path(args.out)]
    return []


def _setting(args) -> BetaStarSetting:
    kind = "eq10" if args.setting == "custom" else args.setting
    return BetaStarSetting(kind, q=args.q, q_s=args.qs, r1=args.r1, r2=args.r2)


def cmd_synth(args) -> list[Path]:
    _need(args, "out_dir")
    n_val = args.n if args.n_val is None else args.n_val
    n_test = args.n if args.n_test is None else args.n_test
    cfg = SynthConfig(args.n, n_val, n_test, _setting(args), rho=args.rho, sigma=args.sigma, seed=args.seed)
    data = generate(cfg, args.replication)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for name, ds in (("train", data.train), ("val", data.val), ("test", data.test)):
        if ds is None:
            continue
        write_dataset(ds, out / f"{name}.csv", out / "schema.json")
        files.append(out / f"{name}.csv")
    files.append(out / "schema.json")
    write_coefficients(data.beta_star, data.train, out / "beta_star.json")
    files.append(out / "beta_star.json")
    emit({"snr": data.snr, "files": [str(f) for f in files]})
    write_manifest(args, files, 0.0, {"snr": _round_inf(data.snr)}, out / "manifest.json")
    return []


def cmd_benchmark(args) -> list[Path]:
    n = args.n
    cfg = SynthConfig(n, n, n, _setting(args), rho=args.rho, sigma=args.sigma, seed=args.seed)
    grid = None
    if args.n_lambda != 10 or args.grid_min != 1e-5 or args.grid_max != 10.0:
        grid = GridSpec(log_grid(args.grid_min, args.grid_max, args.n_lambda),
                        log_grid(args.grid_min, args.grid_max, args.n_lambda))
    threads = args.threads or os.cpu_count() or 1
    res = benchmark(cfg, args.methods, args.reps, grid, _bcd_cfg(args), workers=threads)
    emit({"aggregate": res.aggregates})
    if args.out:
        write_results(res, args.out, {"seed": args.seed, "reps": args.reps})
        return [Path(args.out)]
    return []


def cmd_eval(args) -> list[Path]:
    _need(args, "coef", "data", "schema")
    ds = read_dataset(args.data, args.schema)
    coef = snap_to_clusters(read_coefficients(args.coef, ds), args.snap)
    star = None
    if args.beta_star:
        star = snap_to_clusters(read_coefficients(args.beta_star, ds), args.snap)
    emit(evaluate(coef, ds, star).as_dict())
    return []


def _read_segment_input(path) -> tuple[np.ndarray, np.ndarray]:
    try:
        frame = pd.read_csv(path, header=None)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"{path}: {exc}") from None
    if frame.shape[1] != 2:
        raise DataError(f"{path}: expected two columns (value, weight)")
    try:
        float(frame.iat[0, 0])
    except ValueError:
        frame = frame.iloc[1:]
    try:
        arr = frame.to_numpy(dtype=float)
    except ValueError:
        raise DataError(f"{path}: non-numeric entries") from None
    if arr.size == 0 or not np.isfinite(arr).all():
        raise DataError(f"{path}: empty or non-finite input")
    if (arr[:, 1] <= 0).any():
        raise DataError(f"{path}: weights must be positive")
    return arr[:, 0], arr[:, 1]


def cmd_segment(args) -> list[Path]:
    _need(args, "input", "lam", "lambda0")
    values, weights = _read_segment_input(args.input)
    sol = solve_unsorted(values, weights, args.lambda0, args.lam)
    emit({"objective": sol.objective, "jumps": sol.jump_count, "nonzero": sol.nonzero_count})
    if args.out:
        pd.DataFrame({"index": np.arange(values.size), "beta": sol.beta}).to_csv(
            args.out, index=False, float_format="%.17g", lineterminator="\n")
        return [Path(args.out)]
    return []


def cmd_solve_exact(args) -> list[Path]:
    _need(args, "data", "schema")
    ds = read_dataset(args.data, args.schema)
    pen = _penalties(args)
    warm = read_coefficients(args.warm, ds) if args.warm else fit(ds, pen, _bcd_cfg(args)).coef
    outputs = []
    if args.export:
        export_model(build_mip(ds, pen, args.bigM or choose_bigM(warm)), args.export)
        outputs.append(Path(args.export))
    if args.backend == "enum":
        backend = EnumerativeBackend()
    else:
        _need(args, "workdir")
        backend = FileBackend(Path(args.workdir), bigM=args.bigM)
    res = row_generation(ds, pen, warm, backend, budget=args.budget)
    cert = res.certificate
    emit({"objective": cert.upper_bound, "lower_bound": cert.lower_bound, "upper_bound": cert.upper_bound,
          "rel_gap": cert.rel_gap, "iterations": res.iterations, "terminated": res.terminated,
          "coefficients": coefficients_doc(res.coef, ds.schema, ds.cont_names)})
    if args.out:
        write_coefficients(res.coef, ds, args.out)
        outputs.insert(0, Path(args.out))
    return outputs


def cmd_export_mip(args) -> list[Path]:
    _need(args, "data", "schema", "out")
    ds = read_dataset(args.data, args.schema)
    pen = _penalties(args)
    if args.bigM is None:
        if not args.warm:
            raise UsageError("export-mip: give --bigM or --warm")
        bigM = choose_bigM(read_coefficients(args.warm, ds))
    else:
        bigM = args.bigM
    active = None
    if args.active is not None:
        names = ds.schema.names
        active = []
        for a in args.active:
            if a in names:
                active.append(names.index(a))
            elif a.isdigit() and int(a) < ds.q:
                active.append(int(a))
            else:
                raise UsageError(f"export-mip: unknown predictor {a!r}")
    model = build_mip(ds, pen, bigM, active)
    export_model(model, args.out)
    emit({"bigM": bigM, "binaries": len(model.binary_names()), "pairs": len(model.pairs),
          "rows": len(model.constraints())})
    return [Path(args.out)]


# -- parser ----------------------------------------------------------------------

def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="JSON file whose keys pre-populate options (flags win)")
    p.add_argument("--threads", type=int, default=None, help="worker processes (benchmark only)")


def _data_opts(p):
    p.add_argument("--data", type=Path)
    p.add_argument("--schema", type=Path)


def _pen_opts(p):
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--lambda0", type=float)


def _solver_opts(p):
    p.add_argument("--max-sweeps", type=int, default=500)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--no-active-sets", action="store_true")
    p.add_argument("--seed", type=int, default=0)


def _grid_opts(p):
    p.add_argument("--lambdas", type=float, nargs="+")
    p.add_argument("--lambda0s", type=float, nargs="+")
    p.add_argument("--n-lambda", type=int, default=10)
    p.add_argument("--grid-min", type=float, default=1e-5)
    p.add_argument("--grid-max", type=float, default=10.0)


def _setting_opts(p):
    p.add_argument("--setting", choices=("eq10", "f1", "f2", "custom"), default="eq10")
    p.add_argument("--r1", type=int, default=4)
    p.add_argument("--r2", type=int, default=12)
    p.add_argument("--q", type=int, default=20)
    p.add_argument("--qs", type=int, default=3)
    p.add_argument("--sigma", type=float, default=2.0)
    p.add_argument("--rho", type=float, default=0.2)
    p.add_argument("--n", type=int, default=100)


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(prog="catfuse", description="Sparse and fused regression for categorical predictors")
    parser.add_argument("--version", action="version", version=_version())
    sub = parser.add_subparsers(dest="command", metavar="command")
    subs = {}

    p = sub.add_parser("fit", help="fit one penalty pair by block coordinate descent")
    _data_opts(p), _pen_opts(p), _solver_opts(p)
    p.add_argument("--loss", choices=("squared", "logistic"), default="squared")
    p.add_argument("--out", type=Path, help="coefficients JSON")
    p.set_defaults(func=cmd_fit)
    subs["fit"] = p

    p = sub.add_parser("tune", help="grid search on a validation split")
    p.add_argument("--train", type=Path)
    p.add_argument("--val", type=Path)
    p.add_argument("--schema", type=Path)
    p.add_argument("--lambda0-zero", action="store_true", help="fusion-only variant (lambda0 = 0)")
    _grid_opts(p), _solver_opts(p)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_tune)
    subs["tune"] = p

    p = sub.add_parser("synth", help="generate a synthetic train/val/test draw")
    _setting_opts(p)
    p.add_argument("--n-val", type=int)
    p.add_argument("--n-test", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--replication", type=int, default=0)
    p.add_argument("--out-dir", type=Path)
    p.set_defaults(func=cmd_synth)
    subs["synth"] = p

    p = sub.add_parser("benchmark", help="replicated synthetic benchmark")
    _setting_opts(p)
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--methods", nargs="+", choices=("cl", "cl-l0"), default=["cl-l0"])
    p.add_argument("--n-lambda", type=int, default=10)
    p.add_argument("--grid-min", type=float, default=1e-5)
    p.add_argument("--grid-max", type=float, default=10.0)
    p.add_argument("--max-sweeps", type=int, default=500)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--no-active-sets", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, help="JSON-lines results file")
    p.set_defaults(func=cmd_benchmark)
    subs["benchmark"] = p

    p = sub.add_parser("eval", help="evaluate a coefficients file on data")
    p.add_argument("--coef", type=Path)
    _data_opts(p)
    p.add_argument("--beta-star", type=Path)
    p.add_argument("--snap", type=float, default=1e-9, help="cluster snapping tolerance")
    p.set_defaults(func=cmd_eval)
    subs["eval"] = p

    p = sub.add_parser("segment", help="univariate fused and sparse step fit")
    p.add_argument("--input", type=Path, help="CSV with columns value, weight")
    _pen_opts(p)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_segment)
    subs["segment"] = p

    p = sub.add_parser("solve-exact", help="row generation with an exact backend")
    _data_opts(p), _pen_opts(p), _solver_opts(p)
    p.add_argument("--backend", choices=("enum", "file"), default="enum")
    p.add_argument("--warm", type=Path)
    p.add_argument("--export", type=Path, help="also write the full model in LP format")
    p.add_argument("--workdir", type=Path, help="file backend exchange directory")
    p.add_argument("--bigM", type=float)
    p.add_argument("--budget", type=int, default=25)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_solve_exact)
    subs["solve-exact"] = p

    p = sub.add_parser("export-mip", help="write the Big-M model in LP format")
    _data_opts(p), _pen_opts(p)
    p.add_argument("--bigM", type=float)
    p.add_argument("--warm", type=Path)
    p.add_argument("--active", nargs="*", help="predictor names or indices with fusion rows")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_export_mip)
    subs["export-mip"] = p

    for p in subs.values():
        _common(p)
    return parser, subs


def _apply_config(argv, parser, subs):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("command", nargs="?")
    pre.add_argument("--config", type=Path)
    known, _ = pre.parse_known_args(argv)
    if known.config is None or known.command not in subs:
        return
    try:
        doc = json.loads(Path(known.config).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {known.config}: {exc}") from None
    if not isinstance(doc, dict):
        raise UsageError("config file must hold a JSON object")
    sp = subs[known.command]
    dests = {a.dest for a in sp._actions}
    aliases = {"lambda": "lam"}
    defaults = {}
    for k, v in doc.items():
        dest = aliases.get(k, k.replace("-", "_"))
        if dest not in dests:
            raise UsageError(f"config key {k!r} is not an option of {known.command}")
        defaults[dest] = v
    sp.set_defaults(**defaults)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subs = build_parser()
    try:
        _apply_config(argv, parser, subs)
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"catfuse: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    t0 = time.perf_counter()
    try:
        outputs = args.func(args)
        write_manifest(args, outputs, time.perf_counter() - t0)
    except UsageError as exc:
        subs[args.command].print_usage(sys.stderr)
        print(f"catfuse {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GuardExceeded as exc:
        print(f"catfuse {args.command}: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (DataError, FileNotFoundError, KeyError) as exc:
        print(f"catfuse {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except BackendError as exc:
        print(f"catfuse {args.command}: backend error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except ValueError as exc:
        print(f"catfuse {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
