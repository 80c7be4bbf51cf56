"""CSV datasets with a JSON schema sidecar, and coefficient files."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import pandas as pd

from .model import CategoricalSchema, Coefficients, DataError, Dataset

ROLES = ("categorical", "continuous", "response")


def read_schema(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid schema JSON ({exc})") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("columns"), list):
        raise DataError(f"{path}: schema needs a 'columns' list")
    task = doc.get("task", "regression")
    if task not in ("regression", "binary"):
        raise DataError(f"{path}: task must be 'regression' or 'binary'")
    responses = 0
    for col in doc["columns"]:
        if col.get("role") not in ROLES or "name" not in col:
            raise DataError(f"{path}: every column needs a name and a role in {ROLES}")
        responses += col["role"] == "response"
    if responses != 1:
        raise DataError(f"{path}: exactly one response column required")
    return doc


def schema_doc(ds: Dataset) -> dict:
    cols = [{"name": name, "role": "categorical", "levels": list(levels)}
            for name, levels in ds.schema.predictors]
    cols += [{"name": name, "role": "continuous"} for name in ds.cont_names]
    cols.append({"name": ds.response_name, "role": "response"})
    return {"task": ds.task, "columns": cols}


def read_dataset(data_path, schema_path) -> Dataset:
    """Load a CSV with header; categorical levels come from the schema or, if absent, from the data."""
    doc = read_schema(schema_path)
    cat_cols = [c for c in doc["columns"] if c["role"] == "categorical"]
    dtypes = {c["name"]: str for c in cat_cols}
    try:
        frame = pd.read_csv(data_path, dtype=dtypes, keep_default_na=True)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"{data_path}: {exc}") from None
    missing = [c["name"] for c in doc["columns"] if c["name"] not in frame.columns]
    if missing:
        raise DataError(f"{data_path}: missing column {missing[0]!r}")
    used = frame[[c["name"] for c in doc["columns"]]]
    if used.isna().any().any():
        raise DataError(f"{data_path}: missing values are not allowed")
    predictors, codes = [], []
    for c in cat_cols:
        col = frame[c["name"]].astype(str)
        # without declared levels, codes follow first appearance in the file
        levels = [str(v) for v in c["levels"]] if "levels" in c else list(pd.unique(col))
        lookup = {lv: k for k, lv in enumerate(levels)}
        unknown = set(col) - lookup.keys()
        if unknown:
            raise DataError(f"{data_path}: unknown level {sorted(unknown)[0]!r} in {c['name']!r}")
        predictors.append((c["name"], tuple(levels)))
        codes.append(col.map(lookup).to_numpy(dtype=np.int64))
    cont_names = [c["name"] for c in doc["columns"] if c["role"] == "continuous"]
    resp = next(c["name"] for c in doc["columns"] if c["role"] == "response")
    try:
        cont = frame[cont_names].to_numpy(dtype=float) if cont_names else np.zeros((len(frame), 0))
        y = frame[resp].to_numpy(dtype=float)
    except ValueError as exc:
        raise DataError(f"{data_path}: non-numeric value ({exc})") from None
    code_mat = np.column_stack(codes) if codes else np.zeros((len(frame), 0), dtype=np.int64)
    return Dataset(CategoricalSchema(tuple(predictors)), code_mat, cont, y, doc.get("task", "regression"),
                   tuple(cont_names), resp)


def write_dataset(ds: Dataset, data_path, schema_path) -> None:
    cols = {}
    for j, (name, levels) in enumerate(ds.schema.predictors):
        cols[name] = np.asarray(levels, dtype=object)[ds.codes[:, j]]
    for k, name in enumerate(ds.cont_names):
        cols[name] = ds.cont[:, k]
    cols[ds.response_name] = ds.y
    pd.DataFrame(cols).to_csv(data_path, index=False, float_format="%.17g", lineterminator="\n")
    Path(schema_path).write_text(json.dumps(schema_doc(ds), indent=2) + "\n", encoding="utf-8")


def coefficients_doc(coef: Coefficients, schema: CategoricalSchema, cont_names=()) -> dict:
    return {
        "alpha": coef.alpha,
        "categorical": {name: {lv: float(v) for lv, v in zip(levels, theta)}
                        for (name, levels), theta in zip(schema.predictors, coef.theta_cat)},
        "continuous": {name: float(v) for name, v in zip(cont_names, coef.theta_cont)},
    }


def coefficients_from_doc(doc: dict, schema: CategoricalSchema, cont_names=()) -> Coefficients:
    try:
        cats = []
        for name, levels in schema.predictors:
            block = doc["categorical"].get(name, {})
            cats.append(np.array([float(block.get(lv, 0.0)) for lv in levels]))
        cont_doc = doc.get("continuous", {})
        cont = np.array([float(cont_doc.get(n, 0.0)) for n in cont_names])
        return Coefficients(float(doc.get("alpha", 0.0)), tuple(cats), cont)
    except (KeyError, TypeError, AttributeError) as exc:
        raise DataError(f"malformed coefficients document ({exc})") from None


def write_coefficients(coef: Coefficients, ds_or_schema, path, cont_names=()) -> None:
    if isinstance(ds_or_schema, Dataset):
        schema, cont_names = ds_or_schema.schema, ds_or_schema.cont_names
    else:
        schema = ds_or_schema
    doc = coefficients_doc(coef, schema, cont_names)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def read_coefficients(path, ds: Dataset) -> Coefficients:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: {exc}") from None
    return coefficients_from_doc(doc, ds.schema, ds.cont_names)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
