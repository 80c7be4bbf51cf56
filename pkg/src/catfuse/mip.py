"""Exact machinery: the Big-M mixed-integer model, an enumerative backend,
row generation over predictor supports and an LP-format exporter.

Expanded coordinates are 0-based: categorical levels occupy ``0..W-1`` in
schema order and continuous columns follow.
"""
from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol

import numpy as np

from .model import (
    Coefficients,
    Dataset,
    PenaltyConfig,
    design_matrix,
    objective,
)


class GuardExceeded(RuntimeError):
    """Instance too large for the enumerative backend."""


class BackendError(RuntimeError):
    pass


@dataclass(frozen=True)
class PairVar:
    j: int
    i: int
    k: int

    @property
    def name(self) -> str:
        return f"zf_{self.j}_{self.i}_{self.k}"


@dataclass
class MipModel:
    """Problem data and variable layout of the Big-M formulation.

    ``hess``/``lin``/``const`` describe the loss ``v'Hv + lin'v + const`` over
    ``v = (beta_0..beta_{p-1}, alpha)``.
    """

    p: int
    cat_ranges: tuple[tuple[int, int], ...]
    active: tuple[int, ...]
    bigM: float
    lambda0: float
    lam: float
    hess: np.ndarray
    lin: np.ndarray
    const: float
    fit_intercept: bool = True
    pairs: tuple[PairVar, ...] = field(init=False)

    def __post_init__(self):
        self.pairs = tuple(
            PairVar(j, i, k)
            for j in self.active
            for i in range(self.cat_ranges[j][0], self.cat_ranges[j][0] + self.cat_ranges[j][1])
            for k in range(self.cat_ranges[j][0], i)
        )

    @property
    def n_cat(self) -> int:
        return sum(pj for _, pj in self.cat_ranges)

    def beta_names(self) -> list[str]:
        return [f"beta_{i}" for i in range(self.p)]

    def z_names(self) -> list[str]:
        return [f"z_{i}" for i in range(self.p)]

    def l_names(self) -> list[str]:
        return [f"l_{i}" for i in range(self.n_cat)]

    def binary_names(self) -> list[str]:
        return self.z_names() + self.l_names() + [v.name for v in self.pairs]

    def continuous_names(self) -> list[str]:
        return self.beta_names() + (["alpha"] if self.fit_intercept else [])

    def constraints(self) -> list[tuple[str, dict[str, float], str, float]]:
        """Linear rows ``(name, coefs, sense, rhs)`` in deterministic order."""
        rows = []
        M = self.bigM
        for i in range(self.p):
            rows.append((f"bigm_up_{i}", {f"beta_{i}": 1.0, f"z_{i}": -M}, "<=", 0.0))
            rows.append((f"bigm_lo_{i}", {f"beta_{i}": -1.0, f"z_{i}": -M}, "<=", 0.0))
        by_j: dict[int, list[PairVar]] = {}
        for v in self.pairs:
            by_j.setdefault(v.j, []).append(v)
        for v in self.pairs:
            rows.append((f"fuse_a_{v.j}_{v.i}_{v.k}",
                         {f"beta_{v.k}": 1.0, f"beta_{v.i}": -1.0, v.name: -2 * M}, "<=", 0.0))
            rows.append((f"fuse_b_{v.j}_{v.i}_{v.k}",
                         {f"beta_{v.i}": 1.0, f"beta_{v.k}": -1.0, v.name: -2 * M}, "<=", 0.0))
        for j, (s, pj) in enumerate(self.cat_ranges):
            for i in range(s, s + pj):
                coefs = {}
                if j in self.active:
                    coefs = {PairVar(j, i, k).name: 1.0 for k in range(s, i)}
                coefs[f"l_{i}"] = -1.0
                rows.append((f"link_{j}_{i}", coefs, "<=", float(i - s - 1)))
        return rows

    def loss(self, beta: np.ndarray, alpha: float) -> float:
        v = np.append(beta, alpha)
        return float(v @ self.hess @ v + self.lin @ v + self.const)


def build_mip(ds: Dataset, pen: PenaltyConfig, bigM: float, active: Iterable[int] | None = None,
              fit_intercept: bool = True) -> MipModel:
    if not bigM > 0:
        raise ValueError("bigM must be positive")
    act = tuple(range(ds.q)) if active is None else tuple(sorted(set(int(j) for j in active)))
    if any(j < 0 or j >= ds.q for j in act):
        raise ValueError("active predictor out of range")
    D = np.hstack([design_matrix(ds, dense=True), np.ones((ds.n, 1))])
    n = ds.n
    ranges = tuple((int(s), int(p)) for s, p in zip(ds.schema.offsets, ds.schema.sizes))
    return MipModel(
        p=ds.p, cat_ranges=ranges, active=act, bigM=float(bigM),
        lambda0=pen.lambda0, lam=pen.lam,
        hess=D.T @ D / n, lin=-2.0 * (D.T @ ds.y) / n, const=float(ds.y @ ds.y) / n,
        fit_intercept=fit_intercept,
    )


def choose_bigM(warm: Coefficients) -> float:
    m = float(np.max(np.abs(warm.expanded()), initial=0.0))
    return max(1.2 * m, 1.0)


@dataclass(frozen=True)
class GapCertificate:
    lower_bound: float
    upper_bound: float
    eps: float = 1e-12

    def __post_init__(self):
        if self.lower_bound > self.upper_bound + 1e-9:
            raise ValueError("lower bound exceeds upper bound")

    @property
    def rel_gap(self) -> float:
        return max(self.upper_bound - self.lower_bound, 0.0) / max(abs(self.upper_bound), self.eps)


# -- solution exchange --------------------------------------------------------

def assignment_from_coefficients(model: MipModel, coef: Coefficients) -> dict[str, float]:
    """The cheapest binary completion of ``coef`` in ``model``."""
    beta = coef.expanded()
    vals = {f"beta_{i}": float(b) for i, b in enumerate(beta)}
    if model.fit_intercept:
        vals["alpha"] = float(coef.alpha)
    for i, b in enumerate(beta):
        vals[f"z_{i}"] = float(b != 0)
    for v in model.pairs:
        vals[v.name] = float(beta[v.i] != beta[v.k])
    for j, (s, pj) in enumerate(model.cat_ranges):
        for i in range(s, s + pj):
            if j in model.active:
                vals[f"l_{i}"] = float(beta[i] not in beta[s:i])
            else:
                vals[f"l_{i}"] = float(i == s)
    return vals


def mip_objective(model: MipModel, vals: dict[str, float]) -> float:
    beta = np.array([vals[f"beta_{i}"] for i in range(model.p)])
    alpha = vals.get("alpha", 0.0)
    return (model.loss(beta, alpha)
            + model.lambda0 * sum(vals[n] for n in model.z_names())
            + model.lam * sum(vals[n] for n in model.l_names()))


def check_feasible(model: MipModel, vals: dict[str, float], tol: float = 1e-9) -> list[str]:
    """Names of violated rows or non-binary values (empty list when feasible)."""
    bad = [n for n in model.binary_names() if min(abs(vals[n]), abs(vals[n] - 1)) > tol]
    for name, coefs, _, rhs in model.constraints():
        lhs = sum(c * vals[v] for v, c in coefs.items())
        if lhs > rhs + tol * max(1.0, abs(rhs), model.bigM):
            bad.append(name)
    return bad


def coefficients_from_assignment(model: MipModel, ds: Dataset, vals: dict[str, float]) -> Coefficients:
    beta = np.array([vals.get(f"beta_{i}", 0.0) for i in range(model.p)])
    return Coefficients.from_expanded(beta, ds.schema, vals.get("alpha", 0.0))


def read_solution(path) -> dict[str, float]:
    """Parse ``<variable> <value>`` lines; blank lines and ``#`` comments skipped."""
    vals = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise BackendError(f"{path}:{lineno}: expected '<variable> <value>'")
        vals[parts[0]] = float(parts[1])
    return vals


# -- LP export ----------------------------------------------------------------

def _num(x: float) -> str:
    return format(float(x), ".17g")


def _terms(pairs: Iterable[tuple[float, str]]) -> list[str]:
    out = []
    for c, name in pairs:
        if c == 0:
            continue
        sign = "-" if c < 0 else "+"
        out.append(f"{sign} {_num(abs(c))} {name}")
    return out


def _wrap(head: str, terms: list[str], tail: str = "", per_line: int = 6) -> list[str]:
    if not terms:
        terms = ["+ 0"]
    lines = []
    for s in range(0, len(terms), per_line):
        prefix = head if s == 0 else "   "
        lines.append(prefix + " ".join(terms[s:s + per_line]))
    lines[-1] += tail
    return lines


def export_model(model: MipModel, path) -> None:
    """Write ``model`` in CPLEX LP format.

    The loss constant ``y'y/n`` is not representable in every LP reader; it is
    recorded in a header comment and must be added to a solver's objective.
    """
    names = model.continuous_names()
    v = len(names)
    H = model.hess[:v, :v]
    lin = model.lin[:v]
    lines = [
        "\\ catfuse Big-M model",
        f"\\ objective constant: {_num(model.const)}",
        f"\\ bigM: {_num(model.bigM)}",
        "Minimize",
    ]
    lin_terms = _terms(zip(lin, names))
    lin_terms += _terms((model.lambda0, n) for n in model.z_names())
    lin_terms += _terms((model.lam, n) for n in model.l_names())
    quad = []
    for a in range(v):
        if H[a, a] != 0:
            quad.append(f"+ {_num(2 * H[a, a])} {names[a]} ^ 2")
        for b in range(a + 1, v):
            if H[a, b] != 0:
                c = 4 * H[a, b]
                quad.append(f"{'-' if c < 0 else '+'} {_num(abs(c))} {names[a]} * {names[b]}")
    if quad:
        quad[0] = quad[0][2:] if quad[0].startswith("+ ") else quad[0]
        lin_terms = lin_terms + ["+ ["] + quad + ["] / 2"]
    lines += _wrap(" obj: ", lin_terms)
    lines.append("Subject To")
    for name, coefs, sense, rhs in model.constraints():
        lines += _wrap(f" {name}: ", _terms((c, n) for n, c in coefs.items()), f" {sense} {_num(rhs)}")
    lines.append("Bounds")
    for n in names:
        lines.append(f" {n} free")
    lines.append("Binaries")
    bins = model.binary_names()
    for s in range(0, len(bins), 8):
        lines.append(" " + " ".join(bins[s:s + 8]))
    lines.append("End")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


_SECTION = re.compile(r"^(minimize|subject to|bounds|binaries|generals|end)$", re.I)
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


def lp_variable_counts(path) -> dict[str, int]:
    """Parse back an exported file: number of binary and total distinct variables."""
    section = None
    seen: set[str] = set()
    binaries: set[str] = set()
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("\\"):
            continue
        if _SECTION.match(line):
            section = line.lower()
            continue
        body = line.split(":", 1)[1] if section in ("minimize", "subject to") and ":" in line else line
        idents = [t for t in _IDENT.findall(body) if t.lower() not in ("free", "inf", "infinity", "e")]
        seen.update(idents)
        if section == "binaries":
            binaries.update(idents)
    return {"binary": len(binaries), "total": len(seen), "continuous": len(seen - binaries)}


# -- enumerative backend -------------------------------------------------------

@dataclass(frozen=True)
class EnumGuard:
    max_q: int = 3
    max_levels: int = 5
    max_cont: int = 3
    max_patterns: int = 500_000

    def check(self, ds: Dataset, n_patterns: int) -> None:
        if ds.q > self.max_q:
            raise GuardExceeded(f"enumeration guard: q={ds.q} exceeds limit q<={self.max_q}")
        big = [int(p) for p in ds.schema.sizes if p > self.max_levels]
        if big:
            raise GuardExceeded(f"enumeration guard: predictor with {big[0]} levels exceeds limit p_j<={self.max_levels}")
        if ds.n_cont > self.max_cont:
            raise GuardExceeded(f"enumeration guard: N={ds.n_cont} continuous columns exceeds limit N<={self.max_cont}")
        if n_patterns > self.max_patterns:
            raise GuardExceeded(f"enumeration guard: {n_patterns} joint patterns exceeds limit {self.max_patterns}")


def set_partitions(m: int):
    """All set partitions of ``range(m)`` as restricted growth strings."""
    if m == 0:
        yield ()
        return
    a = [0] * m

    def rec(i, top):
        if i == m:
            yield tuple(a)
            return
        for v in range(top + 2):
            a[i] = v
            yield from rec(i + 1, max(top, v))

    yield from rec(1, 0)


@dataclass
class _BlockPattern:
    cols: np.ndarray        # n x c collapsed columns of the free clusters
    members: list[np.ndarray]   # level indices per free cluster
    nnz: int
    clusters: int


def _block_patterns(codes: np.ndarray, p: int, fused: bool) -> list[_BlockPattern]:
    n = codes.size
    dummies = np.zeros((n, p))
    dummies[np.arange(n), codes] = 1.0
    out = []
    if not fused:
        # relaxed semantics: levels move freely, one level-count unit charged
        for mask in itertools.product((False, True), repeat=p):
            members = [np.array([i]) for i in range(p) if mask[i]]
            cols = dummies[:, [m[0] for m in members]]
            out.append(_BlockPattern(cols, members, len(members), 1))
        return out
    for rgs in set_partitions(p):
        labels = np.array(rgs)
        c = int(labels.max()) + 1
        groups = [np.flatnonzero(labels == g) for g in range(c)]
        # a single zero cluster at most: two zero clusters are dominated by their union
        for zero in [None] + list(range(c)):
            members = [g for t, g in enumerate(groups) if t != zero]
            cols = np.stack([dummies[:, g].sum(axis=1) for g in members], axis=1) if members else np.zeros((n, 0))
            out.append(_BlockPattern(cols, members, sum(g.size for g in members), c))
    return out


@dataclass
class ExactSolution:
    coef: Coefficients
    objective: float
    patterns: int


def count_patterns(ds: Dataset, active: Iterable[int] | None = None) -> int:
    act = set(range(ds.q)) if active is None else set(active)
    total = 2 ** ds.n_cont
    for j, p in enumerate(ds.schema.sizes):
        p = int(p)
        if j in act:
            total *= sum(_stirling2(p, c) * (c + 1) for c in range(1, p + 1))
        else:
            total *= 2 ** p
    return total


def _stirling2(n: int, k: int) -> int:
    return sum((-1) ** i * math.comb(k, i) * (k - i) ** n for i in range(k + 1)) // math.factorial(k)


def solve_enumerative(ds: Dataset, pen: PenaltyConfig, active: Iterable[int] | None = None,
                      fit_intercept: bool = True, guard: EnumGuard | None = None) -> ExactSolution:
    """Global optimum of the full (``active=None``) or relaxed problem by enumeration.

    Every per-predictor clustering with at most one zero cluster is combined
    with every continuous support; each joint pattern is refit by least squares
    on its collapsed design. For predictors outside ``active`` levels are not
    fused and exactly one level-count unit is charged.
    """
    guard = guard or EnumGuard()
    act = set(range(ds.q)) if active is None else {int(j) for j in active}
    guard.check(ds, count_patterns(ds, act))
    n, y = ds.n, ds.y
    blocks = [_block_patterns(ds.codes[:, j], int(ds.schema.sizes[j]), j in act) for j in range(ds.q)]
    cont_sets = [np.array(s, dtype=int) for r in range(ds.n_cont + 1)
                 for s in itertools.combinations(range(ds.n_cont), r)]
    ones = np.ones((n, 1 if fit_intercept else 0))
    best = (math.inf, None)
    for combo in itertools.product(*blocks):
        cat_cols = [ones] + [b.cols for b in combo]
        nnz_cat = sum(b.nnz for b in combo)
        fusion = pen.lam * sum(b.clusters for b in combo)
        for cs in cont_sets:
            A = np.hstack(cat_cols + [ds.cont[:, cs]])
            if A.shape[1]:
                sol, *_ = np.linalg.lstsq(A, y, rcond=None)
                r = y - A @ sol
            else:
                sol, r = np.zeros(0), y
            val = float(r @ r) / n + pen.lambda0 * (nnz_cat + cs.size) + fusion
            if val < best[0]:
                best = (val, (combo, cs, sol))
    val, (combo, cs, sol) = best
    pos = 0
    alpha = 0.0
    if fit_intercept:
        alpha = float(sol[0])
        pos = 1
    thetas = []
    for j, b in enumerate(combo):
        theta = np.zeros(int(ds.schema.sizes[j]))
        for g in b.members:
            theta[g] = sol[pos]
            pos += 1
        thetas.append(theta)
    cont = np.zeros(ds.n_cont)
    cont[cs] = sol[pos:pos + cs.size]
    count = len(cont_sets) * math.prod(len(b) for b in blocks)
    return ExactSolution(Coefficients(alpha, tuple(thetas), cont), val, count)


def relaxed_objective(ds: Dataset, coef: Coefficients, pen: PenaltyConfig, active: Iterable[int]) -> float:
    """Objective of the relaxed problem at ``coef``: predictors outside ``active`` cost one unit."""
    act = set(active)
    full = objective(ds, coef, pen)
    fix = sum(np.unique(t).size - 1 for j, t in enumerate(coef.theta_cat) if j not in act)
    return full - pen.lam * fix


# -- row generation ------------------------------------------------------------

class ExactBackend(Protocol):
    def solve_relaxed(self, ds: Dataset, pen: PenaltyConfig, active: set[int],
                      warm: Coefficients) -> tuple[Coefficients, float]: ...


@dataclass
class EnumerativeBackend:
    guard: EnumGuard = field(default_factory=EnumGuard)
    fit_intercept: bool = True

    def solve_relaxed(self, ds, pen, active, warm):
        sol = solve_enumerative(ds, pen, active, self.fit_intercept, self.guard)
        return sol.coef, sol.objective


@dataclass
class FileBackend:
    """Exchange with an external solver through files.

    Each call writes ``model_<t>.lp`` into ``workdir`` and reads
    ``model_<t>.sol`` (``<variable> <value>`` lines), optionally produced by
    ``run`` (a callable taking the model path and the solution path).
    """

    workdir: Path
    run: object = None
    bigM: float | None = None
    calls: int = 0

    def solve_relaxed(self, ds, pen, active, warm):
        self.calls += 1
        wd = Path(self.workdir)
        wd.mkdir(parents=True, exist_ok=True)
        model = build_mip(ds, pen, self.bigM or choose_bigM(warm), active)
        lp, sol = wd / f"model_{self.calls}.lp", wd / f"model_{self.calls}.sol"
        export_model(model, lp)
        if self.run is not None:
            self.run(lp, sol)
        if not sol.exists():
            raise BackendError(f"no solution file at {sol}")
        vals = read_solution(sol)
        missing = [n for n in model.continuous_names() + model.binary_names() if n not in vals]
        if missing:
            raise BackendError(f"solution lacks {missing[0]}")
        bad = check_feasible(model, vals, tol=1e-6)
        if bad:
            raise BackendError(f"infeasible solution: {bad[0]}")
        return coefficients_from_assignment(model, ds, vals), mip_objective(model, vals)


@dataclass
class RowGenResult:
    coef: Coefficients
    certificate: GapCertificate
    iterations: int
    supports: list[frozenset[int]]
    relaxed_values: list[float]
    terminated: bool


def support_set(coef: Coefficients) -> frozenset[int]:
    return frozenset(j for j, t in enumerate(coef.theta_cat) if np.any(t != 0))


def row_generation(ds: Dataset, pen: PenaltyConfig, warm: Coefficients,
                   backend: ExactBackend | None = None, budget: int = 25) -> RowGenResult:
    """Solve relaxations over the union of seen supports until a support repeats."""
    backend = backend or EnumerativeBackend()
    supports = [support_set(warm)]
    active: set[int] = set(supports[0])
    best, best_val = warm, objective(ds, warm, pen)
    relaxed = []
    lb = -math.inf
    for it in range(1, budget + 1):
        coef, val = backend.solve_relaxed(ds, pen, set(active), warm)
        relaxed.append(val)
        lb = max(lb, val)
        full = objective(ds, coef, pen)
        if full < best_val:
            best, best_val = coef, full
        s = support_set(coef)
        if s in supports:
            # support repetition certifies optimality: both values agree up to rounding
            lb = full if abs(val - full) <= 1e-9 * max(1.0, abs(full)) else min(val, full)
            return RowGenResult(coef, GapCertificate(lb, full), it, supports + [s], relaxed, True)
        supports.append(s)
        active |= s
    return RowGenResult(best, GapCertificate(min(lb, best_val), best_val), budget, supports, relaxed, False)
