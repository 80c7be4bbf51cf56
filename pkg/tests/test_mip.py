import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from catfuse.bcd import fit_bcd_active_set
from catfuse.mip import (
    BackendError,
    EnumGuard,
    FileBackend,
    GapCertificate,
    GuardExceeded,
    assignment_from_coefficients,
    build_mip,
    check_feasible,
    choose_bigM,
    count_patterns,
    export_model,
    lp_variable_counts,
    mip_objective,
    relaxed_objective,
    row_generation,
    set_partitions,
    solve_enumerative,
)
from catfuse.model import CategoricalSchema, Coefficients, Dataset, PenaltyConfig, design_matrix, objective

from conftest import make_ds


def two_pred(seed, n=30, sizes=(3, 3), n_cont=0):
    rng = np.random.default_rng(seed)
    codes = np.column_stack([rng.integers(0, p, n) for p in sizes])
    th = [rng.choice([-1.0, 0.0, 1.0], p) for p in sizes]
    cont = rng.normal(size=(n, n_cont))
    y = sum(t[codes[:, j]] for j, t in enumerate(th)) + cont.sum(axis=1) + rng.normal(size=n)
    return Dataset(CategoricalSchema.from_levels(list(sizes)), codes, cont, y)


def test_model_counts():
    ds = make_ds([0, 1, 2], [1, 2, 3], [3])
    m = build_mip(ds, PenaltyConfig(0.1, 0.1), 1.0)
    assert len(m.z_names()) == 3 and len(m.l_names()) == 3 and len(m.pairs) == 3
    assert ("link_0_0", {"l_0": -1.0}, "<=", -1.0) in m.constraints()
    ds2 = make_ds([[0, 0], [1, 1]], [0, 1], [2, 2])
    m2 = build_mip(ds2, PenaltyConfig(), 1.0, active={1})
    assert [v.j for v in m2.pairs] == [1]
    m3 = build_mip(make_ds([0, 0], [1, 2], [1]), PenaltyConfig(), 1.0)
    assert m3.pairs == ()
    with pytest.raises(ValueError):
        build_mip(ds, PenaltyConfig(), 0.0)


def test_big_m_rule():
    assert choose_bigM(Coefficients(0, (np.array([5.0, -1.0]),))) == pytest.approx(6)
    assert choose_bigM(Coefficients(0, (np.zeros(2),))) == 1
    assert choose_bigM(Coefficients(0, (np.array([0.5]),))) == 1


def test_enumerative_examples(toy4):
    assert solve_enumerative(toy4, PenaltyConfig(0, 10)).objective == pytest.approx(11)
    ds = two_pred(0)
    sol = solve_enumerative(ds, PenaltyConfig(0, 0))
    D = np.hstack([np.ones((ds.n, 1)), design_matrix(ds, dense=True)])
    b, *_ = np.linalg.lstsq(D, ds.y, rcond=None)
    r = ds.y - D @ b
    # every predictor keeps at least one distinct value, so the unpenalized optimum is plain OLS
    assert sol.objective == pytest.approx(r @ r / ds.n, abs=1e-12)


def test_enumerative_objective_is_consistent():
    ds = two_pred(1, n_cont=1)
    pen = PenaltyConfig(0.03, 0.05)
    sol = solve_enumerative(ds, pen)
    assert objective(ds, sol.coef, pen) == pytest.approx(sol.objective, abs=1e-10)
    bcd = fit_bcd_active_set(ds, pen)
    assert sol.objective <= bcd.objective + 1e-12


def test_set_partitions_are_bell_numbers():
    assert [sum(1 for _ in set_partitions(m)) for m in range(1, 7)] == [1, 2, 5, 15, 52, 203]


def test_guard():
    with pytest.raises(GuardExceeded):
        solve_enumerative(make_ds(np.zeros((2, 4), int), [0, 1], [1, 1, 1, 1]), PenaltyConfig())
    with pytest.raises(GuardExceeded):
        solve_enumerative(make_ds([0, 1], [0, 1], [6]), PenaltyConfig())
    with pytest.raises(GuardExceeded):
        solve_enumerative(two_pred(0), PenaltyConfig(), guard=EnumGuard(max_patterns=10))
    assert count_patterns(two_pred(0)) > 10


def test_certificate():
    assert GapCertificate(1.0, 1.0).rel_gap == 0
    assert GapCertificate(0.9, 1.0).rel_gap == pytest.approx(0.1)
    with pytest.raises(ValueError):
        GapCertificate(2.0, 1.0)


def test_export_is_deterministic_and_parses_back(tmp_path):
    ds = make_ds([0, 1], [1.0, -1.0], [2])
    m = build_mip(ds, PenaltyConfig(0.1, 0.2), 2.0)
    a, b = tmp_path / "a.lp", tmp_path / "b.lp"
    export_model(m, a)
    export_model(m, b)
    assert a.read_bytes() == b.read_bytes()
    text = a.read_text()
    assert sum(line.strip().startswith("fuse_") for line in text.splitlines()) == 2
    counts = lp_variable_counts(a)
    assert counts["binary"] == len(m.binary_names())
    assert counts["total"] == len(m.binary_names()) + len(m.continuous_names())


@settings(max_examples=15)
@given(st.integers(0, 10_000), st.floats(0.001, 0.2), st.floats(0.001, 0.2))
def test_enumerative_optimum_is_mip_feasible(seed, l0, lam):
    ds = two_pred(seed, n=20)
    pen = PenaltyConfig(l0, lam)
    sol = solve_enumerative(ds, pen)
    m = build_mip(ds, pen, choose_bigM(sol.coef))
    vals = assignment_from_coefficients(m, sol.coef)
    assert check_feasible(m, vals) == []
    assert mip_objective(m, vals) == pytest.approx(sol.objective, abs=1e-9)


@settings(max_examples=15)
@given(st.integers(0, 10_000), st.floats(0.001, 0.2), st.floats(0.001, 0.2))
def test_relaxation_bounds_and_row_generation(seed, l0, lam):
    ds = two_pred(seed, n=20)
    pen = PenaltyConfig(l0, lam)
    full = solve_enumerative(ds, pen).objective
    for act in ({0}, {1}, set()):
        rel = solve_enumerative(ds, pen, active=act)
        assert rel.objective <= full + 1e-9
        assert relaxed_objective(ds, rel.coef, pen, act) == pytest.approx(rel.objective, abs=1e-10)
    res = row_generation(ds, pen, fit_bcd_active_set(ds, pen).coef)
    assert all(v <= full + 1e-9 for v in res.relaxed_values)
    if res.terminated:
        assert objective(ds, res.coef, pen) == pytest.approx(full, abs=1e-9)
        assert res.certificate.rel_gap == 0


def test_row_generation_from_zero_expands_support():
    rng = np.random.default_rng(0)
    codes = rng.integers(0, 3, (60, 2))
    y = np.array([-2.0, 0.0, 2.0])[codes[:, 0]] + np.array([1.0, 0.0, -1.0])[codes[:, 1]]
    ds = Dataset(CategoricalSchema.from_levels([3, 3]), codes, np.zeros((60, 0)), y + 0.1 * rng.normal(size=60))
    res = row_generation(ds, PenaltyConfig(0.01, 0.01), Coefficients.zeros(ds.schema))
    assert res.terminated and res.iterations >= 2
    assert res.supports[0] == frozenset() and frozenset({0, 1}) in res.supports


def test_file_backend_round_trip(tmp_path):
    ds = two_pred(3, n=20)
    pen = PenaltyConfig(0.02, 0.02)

    def solver(lp, sol_path):
        # stands in for an external solver: answer with the enumerative optimum
        act = {int(t.split("_")[1]) for t in lp.read_text().split() if t.startswith("zf_")}
        sol = solve_enumerative(ds, pen, active=act)
        m = build_mip(ds, pen, choose_bigM(sol.coef), act)
        vals = assignment_from_coefficients(m, sol.coef)
        sol_path.write_text("".join(f"{k} {v!r}\n" for k, v in vals.items()))

    res = row_generation(ds, pen, fit_bcd_active_set(ds, pen).coef,
                         backend=FileBackend(tmp_path, solver, bigM=50.0))
    assert objective(ds, res.coef, pen) == pytest.approx(solve_enumerative(ds, pen).objective, abs=1e-9)
    with pytest.raises(BackendError):
        row_generation(ds, pen, Coefficients.zeros(ds.schema), backend=FileBackend(tmp_path / "x"))
