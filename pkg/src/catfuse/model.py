"""Data model shared by every solver: schema, datasets, coefficients, objective.

Level codes are stored 0-based (``0 .. p_j - 1``) in first-appearance order.
Expanded coefficient vectors follow the layout
``(theta_1, ..., theta_q, theta_cont)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

Task = Literal["regression", "binary"]
Loss = Literal["squared", "logistic"]


class DataError(ValueError):
    """Input data violates a dataset invariant."""


@dataclass(frozen=True)
class CategoricalSchema:
    """Ordered categorical predictors and their level labels."""

    predictors: tuple[tuple[str, tuple[str, ...]], ...]

    def __post_init__(self):
        names = [name for name, _ in self.predictors]
        if len(set(names)) != len(names):
            raise DataError("duplicate predictor names")
        for name, levels in self.predictors:
            if len(levels) < 1:
                raise DataError(f"predictor {name!r} has no levels")
            if len(set(levels)) != len(levels):
                raise DataError(f"duplicate level labels in predictor {name!r}")

    @classmethod
    def from_levels(cls, levels: Sequence[int], names: Sequence[str] | None = None):
        """Schema with ``levels[j]`` anonymous levels labelled ``"1".."p_j"``."""
        if names is None:
            names = [f"C{j + 1}" for j in range(len(levels))]
        return cls(tuple(
            (name, tuple(str(k + 1) for k in range(p))) for name, p in zip(names, levels)
        ))

    @property
    def q(self) -> int:
        return len(self.predictors)

    @property
    def names(self) -> list[str]:
        return [name for name, _ in self.predictors]

    @property
    def sizes(self) -> np.ndarray:
        return np.array([len(levels) for _, levels in self.predictors], dtype=np.int64)

    @property
    def offsets(self) -> np.ndarray:
        sizes = self.sizes
        return np.concatenate(([0], np.cumsum(sizes)[:-1])).astype(np.int64)

    @property
    def width(self) -> int:
        return int(self.sizes.sum())

    def index_set(self, j: int) -> range:
        """Expanded column indices of predictor ``j``."""
        s = int(self.offsets[j])
        return range(s, s + len(self.predictors[j][1]))

    def level_index(self, j: int, label: str) -> int:
        try:
            return self.predictors[j][1].index(str(label))
        except ValueError:
            raise KeyError(f"unknown level {label!r} for predictor {self.predictors[j][0]!r}") from None


@dataclass(frozen=True, eq=False)
class Dataset:
    """Categorical codes, continuous columns and a response.

    ``codes`` is ``n x q`` with 0-based level indices; ``cont`` is ``n x N``.
    """

    schema: CategoricalSchema
    codes: np.ndarray
    cont: np.ndarray
    y: np.ndarray
    task: Task = "regression"
    cont_names: tuple[str, ...] = ()
    response_name: str = "y"

    def __post_init__(self):
        codes = np.asarray(self.codes, dtype=np.int64)
        y = np.asarray(self.y, dtype=float)
        n = y.shape[0]
        if codes.ndim == 1 and self.schema.q == 1:
            codes = codes.reshape(-1, 1)
        if codes.size == 0:
            codes = codes.reshape(n, 0)
        cont = np.asarray(self.cont, dtype=float)
        if cont.size == 0:
            cont = cont.reshape(n, 0)
        if n < 1:
            raise DataError("dataset needs at least one observation")
        if y.ndim != 1:
            raise DataError("response must be a vector")
        if codes.shape != (n, self.schema.q):
            raise DataError(f"codes shape {codes.shape} does not match (n={n}, q={self.schema.q})")
        if cont.ndim != 2 or cont.shape[0] != n:
            raise DataError("continuous block must be n x N")
        sizes = self.schema.sizes
        if codes.size and ((codes < 0).any() or (codes >= sizes[None, :]).any()):
            raise DataError("level code out of range")
        if not np.all(np.isfinite(y)) or not np.all(np.isfinite(cont)):
            raise DataError("non-finite values in data")
        if self.task == "binary" and not np.all(np.isin(y, (-1.0, 1.0))):
            raise DataError("binary task requires labels in {-1, +1}")
        if self.task not in ("regression", "binary"):
            raise DataError(f"unknown task {self.task!r}")
        names = tuple(self.cont_names) or tuple(f"W{j + 1}" for j in range(cont.shape[1]))
        if len(names) != cont.shape[1]:
            raise DataError("continuous names do not match columns")
        for arr in (codes, cont, y):
            arr.setflags(write=False)
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "cont", cont)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "cont_names", names)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def q(self) -> int:
        return self.schema.q

    @property
    def n_cont(self) -> int:
        return self.cont.shape[1]

    @property
    def p(self) -> int:
        return self.schema.width + self.n_cont

    def level_counts(self, j: int) -> np.ndarray:
        return np.bincount(self.codes[:, j], minlength=len(self.schema.predictors[j][1]))

    def observation_sets(self, j: int) -> list[np.ndarray]:
        """Row indices taking each level of predictor ``j``."""
        col = self.codes[:, j]
        return [np.flatnonzero(col == k) for k in range(len(self.schema.predictors[j][1]))]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.schema, self.codes[rows], self.cont[rows], self.y[rows],
                       self.task, self.cont_names, self.response_name)

    def with_response(self, y) -> "Dataset":
        return Dataset(self.schema, self.codes, self.cont, y, self.task,
                       self.cont_names, self.response_name)


@dataclass(frozen=True, eq=False)
class Coefficients:
    alpha: float
    theta_cat: tuple[np.ndarray, ...]
    theta_cont: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        cats = tuple(np.array(t, dtype=float) for t in self.theta_cat)
        cont = np.array(self.theta_cont, dtype=float).reshape(-1)
        for arr in (*cats, cont):
            arr.setflags(write=False)
        object.__setattr__(self, "theta_cat", cats)
        object.__setattr__(self, "theta_cont", cont)
        object.__setattr__(self, "alpha", float(self.alpha))

    @classmethod
    def zeros(cls, schema: CategoricalSchema, n_cont: int = 0, alpha: float = 0.0):
        return cls(alpha, tuple(np.zeros(p) for p in schema.sizes), np.zeros(n_cont))

    @classmethod
    def from_expanded(cls, beta, schema: CategoricalSchema, alpha: float = 0.0):
        beta = np.asarray(beta, dtype=float)
        cats = tuple(beta[list(schema.index_set(j))] for j in range(schema.q))
        return cls(alpha, cats, beta[schema.width:])

    def expanded(self) -> np.ndarray:
        return np.concatenate([*self.theta_cat, self.theta_cont]) if (self.theta_cat or self.theta_cont.size) else np.zeros(0)

    def replace(self, j: int | None = None, theta=None, alpha=None, theta_cont=None) -> "Coefficients":
        cats = list(self.theta_cat)
        if j is not None:
            cats[j] = theta
        return Coefficients(
            self.alpha if alpha is None else alpha,
            tuple(cats),
            self.theta_cont if theta_cont is None else theta_cont,
        )

    def nonzero_count(self) -> int:
        return int(np.count_nonzero(self.expanded()))

    def distinct_counts(self) -> list[int]:
        return [int(np.unique(t).size) for t in self.theta_cat]

    def support_predictors(self) -> frozenset[int]:
        return frozenset(j for j, t in enumerate(self.theta_cat) if np.any(t != 0))


@dataclass(frozen=True)
class PenaltyConfig:
    lambda0: float = 0.0
    lam: float = 0.0

    def __post_init__(self):
        for name in ("lambda0", "lam"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {v}")


@dataclass(frozen=True)
class Cluster:
    levels: tuple[int, ...]
    value: float | None = None

    @property
    def is_zero(self) -> bool | None:
        return None if self.value is None else self.value == 0.0


@dataclass(frozen=True)
class ClusteringPattern:
    """Per-predictor partition of level indices into clusters."""

    clusters: tuple[tuple[Cluster, ...], ...]

    def n_clusters(self) -> list[int]:
        return [len(c) for c in self.clusters]

    def labels(self, j: int, p_j: int) -> np.ndarray:
        """Cluster id per level of predictor ``j``."""
        out = np.full(p_j, -1, dtype=np.int64)
        for cid, cl in enumerate(self.clusters[j]):
            out[list(cl.levels)] = cid
        return out

    def zero_cluster(self, j: int) -> Cluster | None:
        for cl in self.clusters[j]:
            if cl.is_zero:
                return cl
        return None


def design_matrix(ds: Dataset, dense: bool = False):
    """Expanded design ``X`` (n x p).

    Categorical dummies are returned as a ``scipy.sparse.csr_matrix`` stacked with
    the continuous block unless ``dense`` is set.
    """
    from scipy import sparse

    n, offsets = ds.n, ds.schema.offsets
    rows = np.repeat(np.arange(n), ds.q)
    cols = (ds.codes + offsets[None, :]).reshape(-1)
    dummies = sparse.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n, ds.schema.width))
    X = sparse.hstack([dummies, sparse.csr_matrix(ds.cont)], format="csr")
    return X.toarray() if dense else X


expand_design = design_matrix


def linear_predictor(ds: Dataset, coef: Coefficients) -> np.ndarray:
    eta = np.full(ds.n, coef.alpha)
    for j, theta in enumerate(coef.theta_cat):
        eta += theta[ds.codes[:, j]]
    if ds.n_cont:
        eta += ds.cont @ coef.theta_cont
    return eta


def predict_codes(coef: Coefficients, codes: np.ndarray, cont: np.ndarray | None = None) -> np.ndarray:
    """Predictions where ``codes == -1`` marks a level unseen at fit time (coefficient 0)."""
    codes = np.asarray(codes, dtype=np.int64)
    eta = np.full(codes.shape[0], coef.alpha)
    for j, theta in enumerate(coef.theta_cat):
        col = codes[:, j]
        seen = col >= 0
        eta[seen] += theta[col[seen]]
    if cont is not None and np.size(cont):
        eta += np.asarray(cont, dtype=float) @ coef.theta_cont
    return eta


def _check_dims(ds: Dataset, coef: Coefficients):
    if len(coef.theta_cat) != ds.q or any(
        t.shape[0] != p for t, p in zip(coef.theta_cat, ds.schema.sizes)
    ) or coef.theta_cont.shape[0] != ds.n_cont:
        raise ValueError("coefficient dimensions do not match the dataset")


def logistic_loss_sum(y: np.ndarray, eta: np.ndarray) -> float:
    return float(np.logaddexp(0.0, -y * eta).sum())


def penalty_value(coef: Coefficients, pen: PenaltyConfig) -> float:
    return pen.lambda0 * coef.nonzero_count() + pen.lam * sum(coef.distinct_counts())


def objective(ds: Dataset, coef: Coefficients, pen: PenaltyConfig, loss: Loss = "squared") -> float:
    """Penalized empirical risk: mean loss + sparsity term + distinct-value term."""
    _check_dims(ds, coef)
    eta = linear_predictor(ds, coef)
    if loss == "squared":
        data = float(np.sum((ds.y - eta) ** 2)) / ds.n
    elif loss == "logistic":
        if ds.task != "binary":
            raise ValueError("logistic loss requires a binary task")
        data = logistic_loss_sum(ds.y, eta) / ds.n
    else:
        raise ValueError(f"unknown loss {loss!r}")
    return data + penalty_value(coef, pen)


def clustering_of(coef: Coefficients) -> ClusteringPattern:
    """Group equal coefficient values of each predictor (exact equality)."""
    out = []
    for theta in coef.theta_cat:
        groups: dict[float, list[int]] = {}
        for k, v in enumerate(theta.tolist()):
            groups.setdefault(0.0 if v == 0 else v, []).append(k)
        clusters = sorted((Cluster(tuple(ix), v) for v, ix in groups.items()),
                          key=lambda c: c.levels[0])
        out.append(tuple(clusters))
    return ClusteringPattern(tuple(out))


def canonicalize_baseline(coef: Coefficients, mode: str = "largest_cluster_zero",
                          baseline: Sequence[int | None] | None = None) -> Coefficients:
    """Shift each predictor's levels by a constant, absorbing it into the intercept.

    ``mode="largest_cluster_zero"`` zeroes the most populous cluster (ties go to the
    cluster holding the smallest level index). ``mode="user_baseline"`` zeroes the
    level ``baseline[j]`` of each predictor (``None`` leaves it untouched).
    """
    alpha = coef.alpha
    cats = []
    pattern = clustering_of(coef) if mode == "largest_cluster_zero" else None
    for j, theta in enumerate(coef.theta_cat):
        if mode == "largest_cluster_zero":
            best = max(pattern.clusters[j], key=lambda c: (len(c.levels), -c.levels[0]))
            shift = best.value
        elif mode == "user_baseline":
            if baseline is None or len(baseline) != len(coef.theta_cat):
                raise ValueError("user_baseline needs one baseline level per predictor")
            if baseline[j] is None:
                cats.append(theta)
                continue
            k = baseline[j]
            if not 0 <= k < theta.shape[0]:
                raise KeyError(f"unknown baseline level {k} for predictor {j}")
            shift = theta[k]
        else:
            raise ValueError(f"unknown mode {mode!r}")
        new = theta - shift
        # exact zero for members equal to the shift, independent of rounding
        new[theta == shift] = 0.0
        cats.append(new)
        alpha += shift
    return Coefficients(alpha, tuple(cats), coef.theta_cont)
