"""Block coordinate descent for the sparse-and-fused estimator.

Each categorical block is solved exactly by the univariate dynamic program on its
group means; continuous coordinates get an L0 hard-threshold update and the
intercept is refit last in every sweep. The logistic variant minimises the
quadratic majorizer of the logistic loss, re-anchored before every block.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from numba import njit

from .dp import WeightedSequence, _solve_block_kernel, solve_block
from .model import Coefficients, Dataset, Loss, PenaltyConfig, objective


@dataclass
class BcdConfig:
    max_sweeps: int = 500
    rel_tol: float = 1e-8
    use_active_sets: bool = True
    init: Coefficients | None = None
    fit_intercept: bool = True
    standardize: bool = True
    block_order: str = "cyclic"
    seed: int | None = None
    # absolute floor on the per-sweep decrease; keeps single-block re-solves below 1e-9
    fp_tol: float = 1e-10

    def __post_init__(self):
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be positive")
        if not self.rel_tol > 0 or not self.fp_tol > 0:
            raise ValueError("tolerances must be positive")
        if self.block_order not in ("cyclic", "random"):
            raise ValueError("block_order is 'cyclic' or 'random'")


@dataclass
class FitResult:
    coef: Coefficients
    objective: float
    sweeps: int
    objective_trace: list[float] = field(default_factory=list)
    wall_time: float = 0.0
    active_set_rounds: int = 0
    converged: bool = False
    loss: str = "squared"


@dataclass
class BlockReduction:
    """Group means of the partial residual for one categorical predictor.

    ``levels`` lists the levels with at least one observation; ``ybar`` and
    ``weights`` are aligned with it (unsorted).
    """

    levels: np.ndarray
    ybar: np.ndarray
    weights: np.ndarray
    partial_residual: np.ndarray

    def sorted(self) -> tuple[WeightedSequence, np.ndarray]:
        order = np.lexsort((np.arange(self.ybar.size), -self.ybar))
        return WeightedSequence(self.ybar[order], self.weights[order]), order


def reduce_block_to_univariate(ds: Dataset, coef: Coefficients, j0: int) -> BlockReduction:
    eta_other = np.full(ds.n, coef.alpha)
    for j, theta in enumerate(coef.theta_cat):
        if j != j0:
            eta_other += theta[ds.codes[:, j]]
    if ds.n_cont:
        eta_other += ds.cont @ coef.theta_cont
    resid = ds.y - eta_other
    counts = ds.level_counts(j0)
    sums = np.bincount(ds.codes[:, j0], weights=resid, minlength=counts.size)
    levels = np.flatnonzero(counts > 0)
    return BlockReduction(levels, sums[levels] / counts[levels], counts[levels].astype(float), resid)


def update_continuous_coordinate(r, x, lambda0: float, n: int) -> float:
    """L0 hard-threshold least squares step for one column.

    ``r`` is the residual with this coordinate's contribution added back.
    """
    sq = float(np.dot(x, x))
    if sq == 0:
        raise ValueError("zero column")
    b = float(np.dot(r, x)) / sq
    return b if sq * b * b > n * lambda0 else 0.0


@njit(cache=True)
def _block_score(theta, counts, sums, lam0t, lamt):
    """Block objective up to a theta-free constant, in the units of the univariate problem."""
    val = 0.0
    nnz = 0
    for i in range(theta.shape[0]):
        val += 0.5 * counts[i] * theta[i] * theta[i] - theta[i] * sums[i]
        if theta[i] != 0.0:
            nnz += 1
    srt = np.sort(theta)
    distinct = 1 if srt.shape[0] else 0
    for i in range(1, srt.shape[0]):
        if srt[i] != srt[i - 1]:
            distinct += 1
    return val + lam0t * nnz + lamt * distinct


@njit(cache=True)
def _penalty_counts(theta):
    """Nonzero count and distinct-value count of one block."""
    nnz = 0
    for i in range(theta.shape[0]):
        if theta[i] != 0.0:
            nnz += 1
    srt = np.sort(theta)
    distinct = 1 if srt.shape[0] else 0
    for i in range(1, srt.shape[0]):
        if srt[i] != srt[i - 1]:
            distinct += 1
    return nnz, distinct


@njit(cache=True)
def _block_step(base, codes, counts, old, free, lam0t, lamt):
    """Exact re-solve of one block given the residual ``base`` without it.

    Returns the new block, or ``old`` itself when the move is rejected.
    """
    p = old.shape[0]
    sums = np.zeros(p)
    for i in range(codes.shape[0]):
        sums[codes[i]] += base[i] + old[codes[i]]
    m = 0
    for k in range(p):
        if counts[k] > 0 and free[k]:
            m += 1
    new = np.zeros(p)
    if m > 0:
        vals = np.empty(m)
        wts = np.empty(m)
        idx = np.empty(m, dtype=np.int64)
        t = 0
        for k in range(p):
            if counts[k] > 0 and free[k]:
                vals[t] = sums[k] / counts[k]
                wts[t] = counts[k]
                idx[t] = k
                t += 1
        sol = _solve_block_kernel(vals, wts, lam0t, lamt, m < p)
        for t in range(m):
            new[idx[t]] = sol[t]
    same = True
    for k in range(p):
        if new[k] != old[k]:
            same = False
            break
    if same:
        return old
    # the sorted program can overcharge a non-contiguous zero set; keep the old block then
    if _block_score(new, counts, sums, lam0t, lamt) >= _block_score(old, counts, sums, lam0t, lamt):
        return old
    return new


class _Engine:
    """Mutable fit state for one loss; all block updates go through here."""

    def __init__(self, ds: Dataset, pen: PenaltyConfig, loss: Loss, cfg: BcdConfig):
        if loss == "logistic" and ds.task != "binary":
            raise ValueError("logistic loss requires labels in {-1, +1}")
        self.ds, self.pen, self.loss, self.cfg = ds, pen, loss, cfg
        n = ds.n
        self.n = n
        # squared loss: block problems are scaled by n/2; the majorizer adds a factor 8
        scale = 8.0 if loss == "logistic" else 1.0
        self.lam0t = scale * n * pen.lambda0 / 2
        self.lamt = scale * n * pen.lam / 2
        self.l0_cont = scale * pen.lambda0
        self.codes = [np.ascontiguousarray(ds.codes[:, j]) for j in range(ds.q)]
        self.counts = [ds.level_counts(j) for j in range(ds.q)]
        self.counts_f = [c.astype(float) for c in self.counts]
        self.all_free = [np.ones(c.size, dtype=bool) for c in self.counts]
        X = ds.cont
        if cfg.standardize and ds.n_cont:
            self.mu = X.mean(axis=0)
            sd = X.std(axis=0)
            self.sd = np.where(sd > 0, sd, 1.0)
            X = (X - self.mu) / self.sd
        else:
            self.mu = np.zeros(ds.n_cont)
            self.sd = np.ones(ds.n_cont)
        self.X = np.asfortranarray(X)
        self.col_ok = (X * X).sum(axis=0) > 0 if ds.n_cont else np.zeros(0, bool)
        init = cfg.init
        if init is None:
            self.theta = [np.zeros(p) for p in ds.schema.sizes]
            self.b = np.zeros(ds.n_cont)
            self.alpha = self._null_intercept() if cfg.fit_intercept else 0.0
        else:
            self.theta = [t.copy() for t in init.theta_cat]
            # warm starts arrive on the original scale
            self.b = init.theta_cont * self.sd
            self.alpha = init.alpha + float(np.dot(init.theta_cont, self.mu))
            for j, t in enumerate(self.theta):
                t[self.counts[j] == 0] = 0.0
        self.eta = self._eta_from_scratch()
        self.rng = np.random.default_rng(cfg.seed)

    def _null_intercept(self) -> float:
        """Intercept-only optimum: the starting point when no warm start is given."""
        y = self.ds.y
        if self.loss == "squared":
            return float(y.mean())
        frac = float(np.mean(y > 0))
        if frac in (0.0, 1.0):
            return 0.0
        return float(np.log(frac / (1.0 - frac)))

    # -- working response ---------------------------------------------------
    def _residual(self) -> np.ndarray:
        if self.loss == "squared":
            return self.ds.y - self.eta
        y = self.ds.y
        # Lemma-style majorizer at the current point: working response eta - 4 g
        g = -y / (1.0 + np.exp(np.clip(y * self.eta, -700, 700)))
        return -4.0 * g

    def objective(self) -> float:
        if self.loss == "squared":
            data = float(np.dot(self.ds.y - self.eta, self.ds.y - self.eta)) / self.n
        else:
            data = float(np.logaddexp(0.0, -self.ds.y * self.eta).sum()) / self.n
        nnz, distinct = int(np.count_nonzero(self.b)), 0
        for t in self.theta:
            a, d = _penalty_counts(t)
            nnz += a
            distinct += d
        return data + self.pen.lambda0 * nnz + self.pen.lam * distinct

    # -- block updates ------------------------------------------------------
    def update_block(self, j: int, free: np.ndarray | None = None) -> bool:
        codes, old = self.codes[j], self.theta[j]
        if free is None:
            free = self.all_free[j]
        new = _block_step(self._residual(), codes, self.counts_f[j], old, free, self.lam0t, self.lamt)
        if new is old:
            return False
        self.eta += (new - old)[codes]
        self.theta[j] = new
        return True

    def update_continuous(self, free: np.ndarray | None = None) -> None:
        for k in range(self.X.shape[1]):
            if not self.col_ok[k] or (free is not None and not free[k]):
                continue
            x = self.X[:, k]
            old = self.b[k]
            r = self._residual() + x * old
            new = update_continuous_coordinate(r, x, self.l0_cont, self.n)
            if new != old:
                self.eta += x * (new - old)
                self.b[k] = new

    def update_intercept(self) -> None:
        if not self.cfg.fit_intercept:
            return
        shift = float(np.mean(self._residual()))
        if shift != 0.0:
            self.alpha += shift
            self.eta += shift

    def rebaseline(self) -> None:
        """Move one cluster value of a block into the intercept when that lowers the penalty.

        Predictions are unchanged; only the L0 count can move, and the move is
        taken only on a strict decrease. Unobserved levels stay pinned at 0.
        """
        if not self.cfg.fit_intercept or self.pen.lambda0 == 0:
            return
        for j, theta in enumerate(self.theta):
            obs = self.counts[j] > 0
            cur = self.lam0t * np.count_nonzero(theta) + self.lamt * np.unique(theta).size
            best, best_c = cur, 0.0
            for c in np.unique(theta[obs]):
                if c == 0:
                    continue
                cand = np.where(obs, theta - c, 0.0)
                cand[theta == c] = 0.0
                val = self.lam0t * np.count_nonzero(cand) + self.lamt * np.unique(cand).size
                if val < best:
                    best, best_c = val, c
            if best_c != 0.0:
                new = np.where(obs, theta - best_c, 0.0)
                new[theta == best_c] = 0.0
                self.theta[j] = new
                self.alpha += best_c
                self.eta = self._eta_from_scratch()

    def _eta_from_scratch(self) -> np.ndarray:
        eta = np.full(self.n, self.alpha)
        for j, t in enumerate(self.theta):
            eta += t[self.codes[j]]
        if self.X.shape[1]:
            eta += self.X @ self.b
        return eta

    def sweep(self, mask=None) -> None:
        blocks = range(len(self.theta))
        if self.cfg.block_order == "random":
            blocks = self.rng.permutation(len(self.theta))
        for j in blocks:
            self.update_block(j, None if mask is None else mask[0][j])
        self.update_continuous(None if mask is None else mask[1])
        self.update_intercept()
        if mask is None:
            self.rebaseline()

    def step(self, prev: float, mask=None) -> tuple[float, bool]:
        """One sweep, undone if rounding left the objective above ``prev``."""
        saved = ([t.copy() for t in self.theta], self.b.copy(), self.alpha, self.eta.copy())
        self.sweep(mask)
        cur = self.objective()
        if cur > prev:
            self.theta, self.b, self.alpha, self.eta = saved
            return prev, False
        return cur, True

    def run(self, trace: list[float], mask=None, max_sweeps: int | None = None) -> tuple[int, bool]:
        """Sweep until the relative decrease falls below ``rel_tol``."""
        max_sweeps = max_sweeps or self.cfg.max_sweeps
        prev = trace[-1] if trace else self.objective()
        for s in range(1, max_sweeps + 1):
            cur, moved = self.step(prev, mask)
            trace.append(cur)
            if not moved:
                return s, True
            # the objective is non-negative, so reaching 0 is optimal
            drop = prev - cur
            if cur <= 0.0 or (drop < self.cfg.rel_tol * abs(prev) and drop < self.cfg.fp_tol):
                return s, True
            prev = cur
        return max_sweeps, False

    def support_mask(self):
        return ([t != 0 for t in self.theta], self.b != 0)

    def coefficients(self) -> Coefficients:
        b = self.b / self.sd
        alpha = self.alpha - float(np.dot(b, self.mu))
        return Coefficients(alpha, tuple(t.copy() for t in self.theta), b)


def _finish(engine: _Engine, trace, sweeps, converged, t0, rounds=0) -> FitResult:
    coef = engine.coefficients()
    return FitResult(
        coef=coef,
        objective=objective(engine.ds, coef, engine.pen, engine.loss),
        sweeps=sweeps,
        objective_trace=trace,
        wall_time=time.perf_counter() - t0,
        active_set_rounds=rounds,
        converged=converged,
        loss=engine.loss,
    )


def fit_bcd(ds: Dataset, pen: PenaltyConfig, cfg: BcdConfig | None = None,
            loss: Loss = "squared") -> FitResult:
    """Plain cyclic block coordinate descent from ``cfg.init`` (zero by default)."""
    cfg = cfg or BcdConfig()
    t0 = time.perf_counter()
    eng = _Engine(ds, pen, loss, cfg)
    trace = [eng.objective()]
    sweeps, converged = eng.run(trace)
    return _finish(eng, trace, sweeps, converged, t0)


def fit_bcd_active_set(ds: Dataset, pen: PenaltyConfig, cfg: BcdConfig | None = None,
                       loss: Loss = "squared", initial_active=None) -> FitResult:
    """Block coordinate descent restricted to a growing active set.

    The active set starts from the support after one unrestricted sweep (or from
    ``initial_active``: a pair of per-block boolean masks and a continuous mask).
    Restricted fits pin inactive coordinates at 0; after each one, a full sweep
    adds any newly nonzero coordinate. Once the set is stable a final
    unrestricted run brings the result to a fixed point of :func:`fit_bcd`.
    """
    cfg = cfg or BcdConfig()
    if pen.lambda0 == 0 or not cfg.use_active_sets:
        return fit_bcd(ds, pen, cfg, loss)
    t0 = time.perf_counter()
    eng = _Engine(ds, pen, loss, cfg)
    trace = [eng.objective()]
    sweeps = 0
    if initial_active is None:
        trace.append(eng.step(trace[-1])[0])
        sweeps += 1
        active = eng.support_mask()
    else:
        active = ([np.asarray(m, dtype=bool).copy() for m in initial_active[0]],
                  np.asarray(initial_active[1], dtype=bool).copy())
    rounds = 0
    while sweeps < cfg.max_sweeps:
        rounds += 1
        s, _ = eng.run(trace, mask=active, max_sweeps=cfg.max_sweeps - sweeps)
        sweeps += s
        if sweeps >= cfg.max_sweeps:
            break
        trace.append(eng.step(trace[-1])[0])
        sweeps += 1
        cats, cont = eng.support_mask()
        grown = ([a | c for a, c in zip(active[0], cats)], active[1] | cont)
        if all(np.array_equal(a, g) for a, g in zip(active[0], grown[0])) and np.array_equal(active[1], grown[1]):
            break
        active = grown
    converged = False
    if sweeps < cfg.max_sweeps:
        s, converged = eng.run(trace, max_sweeps=cfg.max_sweeps - sweeps)
        sweeps += s
    return _finish(eng, trace, sweeps, converged, t0, rounds)


def fit_logistic_bcd(ds: Dataset, pen: PenaltyConfig, cfg: BcdConfig | None = None,
                     use_active_sets: bool | None = None) -> FitResult:
    """Majorize-minimize block descent for the logistic objective."""
    if ds.task != "binary":
        raise ValueError("logistic fit requires labels in {-1, +1}")
    cfg = cfg or BcdConfig()
    active = cfg.use_active_sets if use_active_sets is None else use_active_sets
    if active:
        return fit_bcd_active_set(ds, pen, cfg, loss="logistic")
    return fit_bcd(ds, pen, cfg, loss="logistic")


def fit(ds: Dataset, pen: PenaltyConfig, cfg: BcdConfig | None = None,
        loss: Loss = "squared") -> FitResult:
    """Default entry point: active-set BCD for either loss."""
    cfg = cfg or BcdConfig()
    if loss == "logistic":
        return fit_logistic_bcd(ds, pen, cfg)
    return fit_bcd_active_set(ds, pen, cfg, loss)


def logistic_majorizer(ds: Dataset, coef0: Coefficients):
    """Return ``(g, ytilde)`` of the quadratic upper bound anchored at ``coef0``."""
    from .model import linear_predictor

    eta0 = linear_predictor(ds, coef0)
    y = ds.y
    g = -y * np.exp(-y * eta0) / (1.0 + np.exp(-y * eta0))
    return g, eta0 - 4.0 * g


def surrogate_gap(ds: Dataset, coef: Coefficients, coef0: Coefficients) -> float:
    """Bound minus actual change: ``(1/8)||ytilde - eta||^2 - 2||g||^2 - (L - L0)``.

    Non-negative whenever the majorization inequality holds.
    """
    from .model import linear_predictor, logistic_loss_sum

    g, ytilde = logistic_majorizer(ds, coef0)
    eta = linear_predictor(ds, coef)
    bound = float(np.sum((ytilde - eta) ** 2)) / 8.0 - 2.0 * float(np.dot(g, g))
    change = logistic_loss_sum(ds.y, eta) - logistic_loss_sum(ds.y, linear_predictor(ds, coef0))
    return bound - change


def block_resolve_improvement(ds: Dataset, pen: PenaltyConfig, coef: Coefficients) -> float:
    """Largest squared-loss objective decrease from re-solving one categorical block exactly.

    Non-positive (up to rounding) at a fixed point of :func:`fit_bcd`.
    """
    base = objective(ds, coef, pen)
    best = -np.inf
    n = ds.n
    for j in range(ds.q):
        red = reduce_block_to_univariate(ds, coef, j)
        theta = np.zeros(coef.theta_cat[j].size)
        if red.levels.size:
            theta[red.levels] = solve_block(red.ybar, red.weights, n * pen.lambda0 / 2, n * pen.lam / 2,
                                            zero_anchor=red.levels.size < theta.size)
        best = max(best, base - objective(ds, coef.replace(j, theta), pen))
    return float(best)
