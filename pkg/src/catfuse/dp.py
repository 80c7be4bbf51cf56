"""Exact solver for the weighted univariate sparse-and-fused problem.

Minimises, over ``beta`` in R^m with ``ybar`` sorted nonincreasing,

    1/2 * sum_i w_i (beta_i - ybar_i)^2 + lam0 * ||beta||_0 + lam * #{i : beta_i != beta_{i+1}}

by dynamic programming on value functions of the form "piecewise quadratic plus
a finite set of positive spikes". The data term of element ``i`` in maximisation
form is ``e_i(x) = -w_i (x - ybar_i)^2 / 2 + lam0 * 1(x = 0)``, so the sparsity
bonus only ever appears as a spike at ``x = 0``. Zeros are therefore decided
structurally by the backtrace landing on the spike, never by thresholding.

Pieces cover half-open intervals ``(x_{i-1}, x_i]`` with ``x_0 = -inf`` and
``x_{m+1} = +inf``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from numba import njit

DISC_EPS = 1e-14


class UnboundedError(ValueError):
    """Quadratic part of a value function is unbounded above."""


@dataclass(frozen=True)
class WeightedSequence:
    ybar: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        ybar = np.asarray(self.ybar, dtype=float).reshape(-1)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if ybar.shape != w.shape or ybar.size == 0:
            raise ValueError("ybar and weights must be non-empty and of equal length")
        if np.any(w <= 0) or not np.all(np.isfinite(w)) or not np.all(np.isfinite(ybar)):
            raise ValueError("weights must be positive and all values finite")
        if np.any(np.diff(ybar) > 0):
            raise ValueError("ybar must be sorted nonincreasing")
        object.__setattr__(self, "ybar", ybar)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return self.ybar.size


@dataclass(frozen=True)
class SegmentSolution:
    beta: np.ndarray
    objective: float
    jump_count: int
    nonzero_count: int


def segment_objective(beta, ybar, weights, lam0: float, lam: float) -> float:
    beta, ybar, weights = (np.asarray(a, dtype=float) for a in (beta, ybar, weights))
    fit = 0.5 * float(np.sum(weights * (beta - ybar) ** 2))
    return fit + lam0 * np.count_nonzero(beta) + lam * int(np.count_nonzero(beta[1:] != beta[:-1]))


def _solution(beta, seq: WeightedSequence, lam0, lam) -> SegmentSolution:
    return SegmentSolution(
        beta=beta,
        objective=segment_objective(beta, seq.ybar, seq.weights, lam0, lam),
        jump_count=int(np.count_nonzero(beta[1:] != beta[:-1])),
        nonzero_count=int(np.count_nonzero(beta)),
    )


# --------------------------------------------------------------------------
# quadratic-part kernels (shared by the reference object path and the fast DP)

@njit(cache=True)
def _better(x, v, best_x, best_v):
    # value first; exact ties prefer x == 0, then the smaller location
    if v > best_v:
        return True
    if v < best_v:
        return False
    if best_x == 0.0:
        return False
    if x == 0.0:
        return True
    return x < best_x


@njit(cache=True)
def _q_eval(knots, a, b, c, x):
    i = np.searchsorted(knots, x, side="left")
    return (a[i] * x + b[i]) * x + c[i]


@njit(cache=True)
def _q_argmax(knots, a, b, c):
    """Global maximiser of the quadratic part. status 1 means unbounded."""
    npieces = a.shape[0]
    best_x = 0.0
    best_v = -np.inf
    for i in range(npieces):
        lo = -np.inf if i == 0 else knots[i - 1]
        hi = np.inf if i == npieces - 1 else knots[i]
        ai, bi, ci = a[i], b[i], c[i]
        if ai < 0.0:
            x = -bi / (2.0 * ai)
            if x < lo:
                x = lo
            elif x > hi:
                x = hi
            v = (ai * x + bi) * x + ci
            if _better(x, v, best_x, best_v):
                best_x, best_v = x, v
        elif ai == 0.0 and bi == 0.0:
            x = 0.0
            if x < lo:
                x = lo
            elif x > hi:
                x = hi
            if _better(x, ci, best_x, best_v):
                best_x, best_v = x, ci
        else:
            # convex or linear: endpoints only, must be finite where it grows
            if ai > 0.0 and (lo == -np.inf or hi == np.inf):
                return 0.0, np.inf, 1
            if ai == 0.0 and ((bi > 0.0 and hi == np.inf) or (bi < 0.0 and lo == -np.inf)):
                return 0.0, np.inf, 1
            for x in (lo, hi):
                if np.isfinite(x):
                    v = (ai * x + bi) * x + ci
                    if _better(x, v, best_x, best_v):
                        best_x, best_v = x, v
    return best_x, best_v, 0


@njit(cache=True)
def _q_merge(knots, a, b, c):
    npieces = a.shape[0]
    keep = np.ones(npieces, dtype=np.bool_)
    for i in range(1, npieces):
        if a[i] == a[i - 1] and b[i] == b[i - 1] and c[i] == c[i - 1]:
            keep[i - 1] = False
    # piece i-1 dropped means knot i-1 (its right end) disappears
    kk = np.empty(npieces - 1)
    na = np.empty(npieces)
    nb = np.empty(npieces)
    nc = np.empty(npieces)
    m = 0
    for i in range(npieces):
        if keep[i]:
            na[m] = a[i]
            nb[m] = b[i]
            nc[m] = c[i]
            if i < npieces - 1:
                kk[m] = knots[i]
            m += 1
    return kk[: m - 1].copy(), na[:m].copy(), nb[:m].copy(), nc[:m].copy()


@njit(cache=True)
def _q_clip(knots, a, b, c, level):
    """Pointwise max of the quadratic part with the constant ``level``."""
    npieces = a.shape[0]
    cap = 3 * npieces
    ok = np.empty(cap)
    oa = np.empty(cap)
    ob = np.empty(cap)
    oc = np.empty(cap)
    m = 0
    pts = np.empty(4)
    for i in range(npieces):
        lo = -np.inf if i == 0 else knots[i - 1]
        hi = np.inf if i == npieces - 1 else knots[i]
        ai, bi, ci = a[i], b[i], c[i] - level
        npts = 0
        pts[npts] = lo
        npts += 1
        touch = False
        if ai == 0.0:
            if bi != 0.0:
                r = -ci / bi
                if lo < r < hi:
                    pts[npts] = r
                    npts += 1
        else:
            disc = bi * bi - 4.0 * ai * ci
            if disc > DISC_EPS:
                sq = np.sqrt(disc)
                qq = -0.5 * (bi + sq) if bi >= 0.0 else -0.5 * (bi - sq)
                r1 = qq / ai
                r2 = ci / qq if qq != 0.0 else r1
                if r1 > r2:
                    r1, r2 = r2, r1
                if lo < r1 < hi:
                    pts[npts] = r1
                    npts += 1
                if r2 != r1 and lo < r2 < hi:
                    pts[npts] = r2
                    npts += 1
            else:
                touch = True
        pts[npts] = hi
        npts += 1
        for s in range(npts - 1):
            l, h = pts[s], pts[s + 1]
            if l == -np.inf and h == np.inf:
                t = 0.0
            elif l == -np.inf:
                t = h - 1.0
            elif h == np.inf:
                t = l + 1.0
            else:
                t = 0.5 * (l + h)
            if touch:
                # no crossing anywhere: a concave piece at most touches the level
                above = ai > 0.0
            else:
                above = (ai * t + bi) * t + ci > 0.0
            if above:
                oa[m], ob[m], oc[m] = a[i], b[i], c[i]
            else:
                oa[m], ob[m], oc[m] = 0.0, 0.0, level
            ok[m] = h
            m += 1
    return _q_merge(ok[: m - 1].copy(), oa[:m].copy(), ob[:m].copy(), oc[:m].copy())


@njit(cache=True)
def _pick(x1, v1, x2, v2):
    if _better(x2, v2, x1, v1):
        return x2, v2
    return x1, v1


@njit(cache=True)
def _dp_kernel(ybar, w, forced, lam0, lam):
    """Forward recursion and backtrace.

    A forced element must take the value 0 and carries no data term; for it the
    stored state is the incoming clipped function and its value is read at 0.
    """
    m = ybar.shape[0]
    if forced[0]:
        knots_l = [np.empty(0)]
        a_l = [np.zeros(1)]
        b_l = [np.zeros(1)]
        c_l = [np.zeros(1)]
    else:
        knots_l = [np.empty(0)]
        a_l = [np.array([-0.5 * w[0]])]
        b_l = [np.array([w[0] * ybar[0]])]
        c_l = [np.array([-0.5 * w[0] * ybar[0] * ybar[0]])]
    spikes = np.zeros(m)
    argmx = np.zeros(m)
    maxv = np.zeros(m)
    if not forced[0]:
        spikes[0] = lam0
    for k in range(m):
        kn, a, b, c = knots_l[k], a_l[k], b_l[k], c_l[k]
        if forced[k]:
            x, v = 0.0, _q_eval(kn, a, b, c, 0.0) + spikes[k]
        else:
            xq, vq, status = _q_argmax(kn, a, b, c)
            if status != 0:
                raise ValueError("unbounded value function")
            x, v = xq, vq
            if spikes[k] > 0.0:
                x, v = _pick(xq, vq, 0.0, _q_eval(kn, a, b, c, 0.0) + spikes[k])
        argmx[k] = x
        maxv[k] = v
        if k == m - 1:
            break
        level = v - lam
        if forced[k]:
            nk = np.empty(0)
            na = np.zeros(1)
            nb = np.zeros(1)
            nc = np.array([level])
            s = lam
        else:
            nk, na, nb, nc = _q_clip(kn, a, b, c, level)
            s = 0.0
            if spikes[k] > 0.0:
                s = _q_eval(kn, a, b, c, 0.0) + spikes[k] - _q_eval(nk, na, nb, nc, 0.0)
                if s < 0.0:
                    s = 0.0
        if not forced[k + 1]:
            wk, yk = w[k + 1], ybar[k + 1]
            na = na - 0.5 * wk
            nb = nb + wk * yk
            nc = nc - 0.5 * wk * yk * yk
            s += lam0
        knots_l.append(nk)
        a_l.append(na)
        b_l.append(nb)
        c_l.append(nc)
        spikes[k + 1] = s
    beta = np.empty(m)
    beta[m - 1] = argmx[m - 1]
    for k in range(m - 2, -1, -1):
        if forced[k]:
            beta[k] = 0.0
            continue
        nxt = beta[k + 1]
        stay = _q_eval(knots_l[k], a_l[k], b_l[k], c_l[k], nxt)
        if nxt == 0.0:
            stay += spikes[k]
        x, v = _pick(nxt, stay, argmx[k], maxv[k] - lam)
        beta[k] = x
    return beta, maxv[m - 1]


# --------------------------------------------------------------------------
# value-function objects

@dataclass(frozen=True, eq=False)
class PiecewiseValueFn:
    """Piecewise quadratic ``a x^2 + b x + c`` plus positive spikes.

    ``knots`` holds the finite breakpoints; piece ``i`` covers
    ``(knots[i-1], knots[i]]``. ``spikes`` maps location to height.
    """

    knots: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    spikes: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("knots", "a", "b", "c"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(-1))
        object.__setattr__(self, "spikes", {float(k): float(v) for k, v in self.spikes.items()})

    @classmethod
    def quadratic(cls, a: float, b: float, c: float, spikes=None):
        return cls(np.empty(0), [a], [b], [c], spikes or {})

    @classmethod
    def constant(cls, value: float):
        return cls.quadratic(0.0, 0.0, value)

    def quad(self, x: float) -> float:
        return float(_q_eval(self.knots, self.a, self.b, self.c, float(x)))

    def __call__(self, x: float) -> float:
        return self.quad(x) + self.spikes.get(float(x), 0.0)

    def check(self):
        """Raise if the representation violates its invariants."""
        if self.a.shape != self.b.shape or self.a.shape != self.c.shape:
            raise AssertionError("coefficient arrays differ in length")
        if self.knots.shape[0] != self.a.shape[0] - 1:
            raise AssertionError("need one knot fewer than pieces")
        if np.any(np.diff(self.knots) <= 0) or not np.all(np.isfinite(self.knots)):
            raise AssertionError("breakpoints must be finite and strictly increasing")
        if any(h <= 0 for h in self.spikes.values()):
            raise AssertionError("spike heights must be strictly positive")


@dataclass(frozen=True)
class DataTerm:
    """``-weight (x - center)^2 / 2 + bonus * 1(x = 0)``."""

    weight: float
    center: float
    bonus: float = 0.0


def fmax_over_F(f: PiecewiseValueFn) -> tuple[float, float]:
    """Exact maximiser and maximum of ``f``.

    Compares the supremum of the quadratic part with the function value at each
    spike location. Exact ties prefer ``x = 0``, then the smaller location.
    """
    x, v, status = _q_argmax(f.knots, f.a, f.b, f.c)
    if status:
        raise UnboundedError("quadratic part is unbounded above")
    for loc in sorted(f.spikes):
        x, v = _pick(x, v, loc, f(loc))
    return float(x), float(v)


def clip_with_jump_penalty(delta: PiecewiseValueFn, lam: float) -> PiecewiseValueFn:
    """``max(delta(b), max(delta) - lam)`` kept in the quadratic-plus-spike form."""
    _, best = fmax_over_F(delta)
    level = best - lam
    knots, a, b, c = _q_clip(delta.knots, delta.a, delta.b, delta.c, level)
    out = PiecewiseValueFn(knots, a, b, c)
    spikes = {}
    for loc, h in delta.spikes.items():
        surplus = delta.quad(loc) + h - out.quad(loc)
        if surplus > 0:
            spikes[loc] = surplus
    return PiecewiseValueFn(knots, a, b, c, spikes)


def add_pointwise(f: PiecewiseValueFn, e: DataTerm) -> PiecewiseValueFn:
    w, y = e.weight, e.center
    spikes = dict(f.spikes)
    if e.bonus:
        h = spikes.get(0.0, 0.0) + e.bonus
        if h > 0:
            spikes[0.0] = h
        else:
            spikes.pop(0.0, None)
    return PiecewiseValueFn(f.knots, f.a - 0.5 * w, f.b + w * y, f.c - 0.5 * w * y * y, spikes)


def _data_fn(w, y, lam0) -> PiecewiseValueFn:
    return add_pointwise(PiecewiseValueFn.constant(0.0), DataTerm(w, y, lam0))


def _reference_dp(seq: WeightedSequence, lam0: float, lam: float, check_states: bool):
    ybar, w = seq.ybar, seq.weights
    deltas = [_data_fn(w[0], ybar[0], lam0)]
    peaks = []
    for k in range(len(seq)):
        delta = deltas[k]
        if check_states:
            delta.check()
        peaks.append(fmax_over_F(delta))
        if k == len(seq) - 1:
            break
        f = clip_with_jump_penalty(delta, lam)
        if check_states:
            f.check()
        deltas.append(add_pointwise(f, DataTerm(w[k + 1], ybar[k + 1], lam0)))
    beta = np.empty(len(seq))
    beta[-1] = peaks[-1][0]
    for k in range(len(seq) - 2, -1, -1):
        nxt = beta[k + 1]
        x, _ = _pick(nxt, deltas[k](nxt), peaks[k][0], peaks[k][1] - lam)
        beta[k] = x
    return beta


def _runs(beta):
    start = 0
    m = beta.size
    for i in range(1, m + 1):
        if i == m or beta[i] != beta[start]:
            yield start, i
            start = i


def _polish_levels(beta, seq: WeightedSequence, lam0: float, forced) -> np.ndarray:
    """Reset every constant run to the cheaper of 0 and its weighted mean.

    Run values come out of the backtrace as exact copies, so runs are found by
    equality. Runs holding a forced element stay at 0. The objective cannot
    increase.
    """
    out = beta.copy()
    for start, stop in _runs(beta):
        if forced[start:stop].any():
            out[start:stop] = 0.0
            continue
        w = seq.weights[start:stop]
        y = seq.ybar[start:stop]
        mean = float(np.dot(w, y) / w.sum())
        cost_mean = 0.5 * float(np.dot(w, (y - mean) ** 2)) + lam0 * (stop - start)
        cost_zero = 0.5 * float(np.dot(w, y * y))
        out[start:stop] = 0.0 if (mean == 0.0 or cost_zero <= cost_mean) else mean
    return out


def _forced_mask(seq, forced):
    if forced is None:
        return np.zeros(len(seq), dtype=bool)
    forced = np.asarray(forced, dtype=bool)
    if forced.shape != (len(seq),):
        raise ValueError("forced mask must match the sequence length")
    if np.any(seq.ybar[forced] != 0):
        raise ValueError("forced elements must sit at ybar = 0")
    return forced


def dp_seg_pen_l0(seq: WeightedSequence, lambda0t: float, lambdat: float,
                  engine: str = "fast", check_states: bool = False,
                  polish: bool = True, forced=None) -> SegmentSolution:
    """Globally optimal step function for a sorted weighted sequence.

    ``engine="reference"`` runs the recursion on :class:`PiecewiseValueFn`
    objects (validating each state when ``check_states`` is set);
    ``engine="fast"`` runs the same recursion in a compiled kernel.

    ``forced`` marks elements pinned to 0 (they must have ``ybar == 0``); they
    contribute no loss and no sparsity cost but still count jumps. Only the
    fast engine supports them.
    """
    if lambda0t < 0 or lambdat < 0:
        raise ValueError("penalties must be non-negative")
    mask = _forced_mask(seq, forced)
    if engine == "fast" and not check_states:
        beta, _ = _dp_kernel(seq.ybar, seq.weights, mask, float(lambda0t), float(lambdat))
    elif engine in ("fast", "reference"):
        if mask.any():
            raise ValueError("the reference engine does not support forced elements")
        beta = _reference_dp(seq, float(lambda0t), float(lambdat), check_states)
    else:
        raise ValueError(f"unknown engine {engine!r}")
    if polish:
        beta = _polish_levels(beta, seq, lambda0t, mask)
    return _solution(beta, seq, lambda0t, lambdat)


def solve_unsorted(values, weights, lambda0t: float, lambdat: float,
                   zero_anchor: bool = False, **kw) -> SegmentSolution:
    """Sort by value (descending, stable on index), solve, and undo the permutation.

    With ``zero_anchor`` a forced-zero element is inserted at value 0, which
    makes a zero coefficient free of jump cost when one already exists outside
    the sequence (pinned levels). The anchor is dropped from the result; the
    reported objective still includes its jumps.
    """
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    m = values.size
    if zero_anchor:
        values = np.append(values, 0.0)
        weights = np.append(weights, 1.0)
    # anchor sorts after the ties at 0 so it never splits equal values
    ties = np.arange(values.size)
    order = np.lexsort((ties, -values))
    forced = None
    if zero_anchor:
        forced = order == m
    sol = dp_seg_pen_l0(WeightedSequence(values[order], weights[order]), lambda0t, lambdat,
                        forced=forced, **kw)
    beta = np.empty_like(sol.beta)
    beta[order] = sol.beta
    return SegmentSolution(beta[:m], sol.objective, sol.jump_count, int(np.count_nonzero(beta[:m])))


@njit(cache=True)
def _polish_kernel(beta, ybar, w, forced, lam0):
    out = beta.copy()
    m = beta.shape[0]
    start = 0
    for i in range(1, m + 1):
        if i < m and beta[i] == beta[start]:
            continue
        pinned = False
        sw = 0.0
        swy = 0.0
        for t in range(start, i):
            pinned = pinned or forced[t]
            sw += w[t]
            swy += w[t] * ybar[t]
        if pinned:
            out[start:i] = 0.0
        else:
            mean = swy / sw
            c_mean = lam0 * (i - start)
            c_zero = 0.0
            for t in range(start, i):
                d = ybar[t] - mean
                c_mean += 0.5 * w[t] * d * d
                c_zero += 0.5 * w[t] * ybar[t] * ybar[t]
            out[start:i] = 0.0 if (mean == 0.0 or c_zero <= c_mean) else mean
        start = i
    return out


@njit(cache=True)
def _solve_block_kernel(values, weights, lam0, lam, anchor):
    m = values.shape[0]
    tot = m + 1 if anchor else m
    v = np.zeros(tot)
    w = np.ones(tot)
    v[:m] = values
    w[:m] = weights
    # stable descending sort; the anchor (last index) follows the ties at 0
    order = np.argsort(-v, kind="mergesort")
    ys = v[order]
    ws = w[order]
    forced = np.zeros(tot, dtype=np.bool_)
    if anchor:
        for t in range(tot):
            forced[t] = order[t] == m
    beta_s, _ = _dp_kernel(ys, ws, forced, lam0, lam)
    beta_s = _polish_kernel(beta_s, ys, ws, forced, lam0)
    beta = np.empty(tot)
    for t in range(tot):
        beta[order[t]] = beta_s[t]
    return beta[:m]


def solve_block(values, weights, lambda0t: float, lambdat: float, zero_anchor: bool = False) -> np.ndarray:
    """Coefficient vector of :func:`solve_unsorted` without the bookkeeping (hot path)."""
    return _solve_block_kernel(np.asarray(values, dtype=float), np.asarray(weights, dtype=float),
                               float(lambda0t), float(lambdat), bool(zero_anchor))


def brute_force_univariate(seq: WeightedSequence, lambda0t: float, lambdat: float,
                           max_len: int = 18, forced=None) -> SegmentSolution:
    """Enumerate every segmentation; each segment takes the better of 0 and its mean.

    Segments containing a forced element are pinned to 0.
    """
    m = len(seq)
    if m > max_len:
        raise ValueError(f"enumeration guard: m={m} exceeds {max_len}")
    mask = _forced_mask(seq, forced)
    w, y = seq.weights, seq.ybar
    # cost and level of every contiguous segment [s, e)
    seg = {}
    for s in range(m):
        for e in range(s + 1, m + 1):
            ws, ys = w[s:e], y[s:e]
            c_zero = 0.5 * float(np.dot(ws, ys * ys))
            if mask[s:e].any():
                seg[s, e] = (c_zero, 0.0)
                continue
            mean = float(np.dot(ws, ys) / ws.sum())
            c_mean = 0.5 * float(np.dot(ws, (ys - mean) ** 2)) + lambda0t * (e - s)
            seg[s, e] = (c_zero, 0.0) if c_zero <= c_mean else (c_mean, mean)
    best_cost, best_beta = np.inf, None
    for cuts in itertools.product((False, True), repeat=m - 1):
        bounds = [0] + [i + 1 for i, cut in enumerate(cuts) if cut] + [m]
        cost = lambdat * (len(bounds) - 2)
        for s, e in zip(bounds[:-1], bounds[1:]):
            cost += seg[s, e][0]
        if cost < best_cost:
            best_cost = cost
            best_beta = np.concatenate([np.full(e - s, seg[s, e][1]) for s, e in zip(bounds[:-1], bounds[1:])])
    return _solution(best_beta, seq, lambda0t, lambdat)
