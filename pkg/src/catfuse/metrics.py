"""Evaluation: prediction quality, clustering purity/impurity and collapsed refits."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import scipy.linalg

from .model import (
    ClusteringPattern,
    Coefficients,
    Dataset,
    clustering_of,
    linear_predictor,
)

SNAP_TOL = 1e-9


def r_squared(y, yhat) -> float:
    y, yhat = np.asarray(y, float), np.asarray(yhat, float)
    if y.shape != yhat.shape or y.size < 2:
        raise ValueError("need equal-length vectors with at least 2 entries")
    ss = float(np.sum((y - y.mean()) ** 2))
    if ss == 0:
        raise ValueError("constant response: R^2 undefined")
    return 1.0 - float(np.sum((y - yhat) ** 2)) / ss


def accuracy(y, eta) -> float:
    """Share of labels in {-1, +1} matched by ``sign(eta)`` (0 maps to +1)."""
    y = np.asarray(y, float)
    pred = np.where(np.asarray(eta, float) >= 0, 1.0, -1.0)
    return float(np.mean(pred == y))


def snap_to_clusters(coef: Coefficients, tol: float = SNAP_TOL) -> Coefficients:
    """Merge values within ``tol`` of their sorted neighbour; values within ``tol`` of 0 become 0.

    Meant for coefficients read from text, where printed rounding may split a
    cluster that a solver produced exactly.
    """
    cats = []
    for theta in coef.theta_cat:
        t = np.where(np.abs(theta) <= tol, 0.0, theta)
        order = np.argsort(t, kind="stable")
        out = t.copy()
        start = 0
        for k in range(1, order.size + 1):
            if k == order.size or t[order[k]] - t[order[k - 1]] > tol:
                grp = order[start:k]
                vals = t[grp]
                out[grp] = 0.0 if np.any(vals == 0) else vals[0]
                start = k
        cats.append(out)
    cont = np.where(np.abs(coef.theta_cont) <= tol, 0.0, coef.theta_cont)
    return Coefficients(coef.alpha, tuple(cats), cont)


def total_levels(coef: Coefficients) -> int:
    return int(sum(np.unique(t).size for t in coef.theta_cat))


def nonzero_clusters(coef: Coefficients) -> int:
    """K(beta): distinct nonzero values summed over predictors."""
    return int(sum(np.unique(t[t != 0]).size for t in coef.theta_cat))


def _check_pair(beta_hat: Coefficients, beta_star: Coefficients):
    if [t.size for t in beta_hat.theta_cat] != [t.size for t in beta_star.theta_cat]:
        raise ValueError("coefficient dimensions differ")


def impurity(beta_hat: Coefficients, beta_star: Coefficients, predictors=None) -> int:
    """Members that must leave their estimated cluster for every cluster to be pure."""
    _check_pair(beta_hat, beta_star)
    js = range(len(beta_hat.theta_cat)) if predictors is None else predictors
    total = 0
    for j in js:
        est, true = beta_hat.theta_cat[j], beta_star.theta_cat[j]
        for a in np.unique(est):
            members = true[est == a]
            _, counts = np.unique(members, return_counts=True)
            total += int(members.size - counts.max())
    return total


def true_active(beta_star: Coefficients) -> list[int]:
    return [j for j, t in enumerate(beta_star.theta_cat) if np.any(t != 0)]


def purity(beta_hat: Coefficients, beta_star: Coefficients) -> float:
    _check_pair(beta_hat, beta_star)
    act = true_active(beta_star)
    if not act:
        raise ValueError("purity undefined: beta_star has no active predictor")
    nu = sum(beta_star.theta_cat[j].size for j in act)
    return 1.0 - impurity(beta_hat, beta_star, act) / nu


def delta_min(beta_star: Coefficients) -> float:
    gaps = [np.diff(np.unique(t)).min() for t in beta_star.theta_cat if np.unique(t).size >= 2]
    if not gaps:
        raise ValueError("minimum separation undefined: every predictor is constant")
    return float(min(gaps))


def collapsed_design(ds: Dataset, pattern: ClusteringPattern, cont_support=None) -> np.ndarray:
    """``[1, X_G, W_S]``: one summed dummy column per nonzero cluster plus selected continuous columns."""
    cols = [np.ones(ds.n)]
    for j, clusters in enumerate(pattern.clusters):
        for cl in clusters:
            if cl.is_zero:
                continue
            cols.append(np.isin(ds.codes[:, j], cl.levels).astype(float))
    if cont_support is not None:
        for k in np.flatnonzero(np.asarray(cont_support, bool)):
            cols.append(ds.cont[:, k])
    return np.column_stack(cols)


def collapsed_refit(ds: Dataset, pattern: ClusteringPattern, target=None,
                    cont_support=None) -> tuple[np.ndarray, float]:
    """Least-squares fit of ``target`` (default ``ds.y``) on the collapsed design.

    Returns the fitted vector and the mean squared residual. With the noiseless
    signal as target this is the approximation error of the pattern.
    """
    t = ds.y if target is None else np.asarray(target, float)
    A = collapsed_design(ds, pattern, cont_support)
    # QR with column pivoting; minimum norm under rank deficiency
    sol, *_ = scipy.linalg.lstsq(A, t, lapack_driver="gelsy")
    fit = A @ sol
    r = t - fit
    return fit, float(r @ r) / ds.n


@dataclass
class EvalReport:
    r2: float | None = None
    accuracy: float | None = None
    total_levels: int = 0
    nonzero_clusters: int = 0
    purity: float | None = None
    impurity: int | None = None
    delta_min: float | None = None
    wall_time: float | None = None

    def as_dict(self) -> dict:
        return asdict(self)


def evaluate(coef: Coefficients, test: Dataset, beta_star: Coefficients | None = None,
             wall_time: float | None = None) -> EvalReport:
    eta = linear_predictor(test, coef)
    rep = EvalReport(total_levels=total_levels(coef), nonzero_clusters=nonzero_clusters(coef),
                     wall_time=wall_time)
    if test.task == "binary":
        rep.accuracy = accuracy(test.y, eta)
    else:
        rep.r2 = r_squared(test.y, eta)
    if beta_star is not None:
        rep.impurity = impurity(coef, beta_star)
        if true_active(beta_star):
            rep.purity = purity(coef, beta_star)
        try:
            rep.delta_min = delta_min(beta_star)
        except ValueError:
            rep.delta_min = None
    return rep


__all__ = [
    "EvalReport", "accuracy", "clustering_of", "collapsed_design", "collapsed_refit",
    "delta_min", "evaluate", "impurity", "nonzero_clusters", "purity", "r_squared",
    "snap_to_clusters", "total_levels", "true_active",
]
