import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from catfuse.bcd import (
    BcdConfig,
    block_resolve_improvement,
    fit,
    fit_bcd,
    fit_bcd_active_set,
    fit_logistic_bcd,
    logistic_majorizer,
    reduce_block_to_univariate,
    surrogate_gap,
    update_continuous_coordinate,
)
from catfuse.model import CategoricalSchema, Coefficients, Dataset, PenaltyConfig, objective

from conftest import make_ds


def random_ds(seed, n=40, sizes=(3, 4), n_cont=0, task="regression"):
    rng = np.random.default_rng(seed)
    codes = np.column_stack([rng.integers(0, p, n) for p in sizes])
    th = [rng.choice([-1.0, 0.0, 1.5], p) for p in sizes]
    cont = rng.normal(size=(n, n_cont))
    eta = sum(t[codes[:, j]] for j, t in enumerate(th)) + cont @ np.ones(n_cont)
    if task == "binary":
        y = np.where(eta + rng.logistic(size=n) >= 0, 1.0, -1.0)
    else:
        y = eta + rng.normal(size=n)
    return Dataset(CategoricalSchema.from_levels(list(sizes)), codes, cont, y, task)


def test_toy_recovers_two_levels(toy4):
    res = fit(toy4, PenaltyConfig(0.0, 0.0))
    assert res.coef.theta_cat[0].tolist() == [1, -1]
    assert res.coef.alpha == 0 and res.objective == 0
    assert res.sweeps == 1 and res.converged


def test_toy_with_sparsity_moves_a_level_into_intercept(toy4):
    res = fit(toy4, PenaltyConfig(0.01, 0.01))
    assert res.coef.theta_cat[0].tolist() == [2, 0] and res.coef.alpha == -1


def test_warm_start_at_fixed_point():
    ds = random_ds(4)
    pen = PenaltyConfig(0.02, 0.02)
    first = fit_bcd(ds, pen)
    again = fit_bcd(ds, pen, BcdConfig(init=first.coef))
    assert again.sweeps == 1
    assert again.objective <= first.objective
    assert again.objective == pytest.approx(first.objective, rel=1e-9)


def test_heavy_fusion_gives_null_model():
    ds = random_ds(0)
    res = fit_bcd(ds, PenaltyConfig(0.0, 1e6))
    assert all(np.unique(t).size == 1 for t in res.coef.theta_cat)
    assert res.objective == pytest.approx(np.var(ds.y) + 1e6 * ds.q, rel=1e-12)


@given(st.integers(0, 10_000), st.floats(0.001, 0.3), st.floats(0.001, 0.3))
def test_trace_nonincreasing_and_fixed_point(seed, l0, lam):
    ds = random_ds(seed)
    pen = PenaltyConfig(l0, lam)
    for res in (fit_bcd(ds, pen), fit_bcd_active_set(ds, pen)):
        tr = np.array(res.objective_trace)
        assert np.all(np.diff(tr) <= 1e-12 * np.abs(tr[:-1]).max())
        assert res.objective == pytest.approx(objective(ds, res.coef, pen), rel=1e-12)
        assert block_resolve_improvement(ds, pen, res.coef) < 1e-9


def test_active_set_with_full_start_matches_plain():
    ds = random_ds(5, n=60)
    pen = PenaltyConfig(0.02, 0.02)
    full = ([np.ones(p, bool) for p in ds.schema.sizes], np.ones(0, bool))
    a = fit_bcd_active_set(ds, pen, initial_active=full)
    b = fit_bcd(ds, pen)
    assert a.objective == pytest.approx(b.objective, rel=1e-9)


def test_zero_lambda0_falls_back():
    ds = random_ds(1)
    pen = PenaltyConfig(0.0, 0.05)
    assert fit_bcd_active_set(ds, pen).objective == fit_bcd(ds, pen).objective


def test_continuous_coordinate_examples():
    x = np.array([1.0, 1.0])
    assert update_continuous_coordinate(np.array([2.0, 2.0]), x, 0.0, 2) == 2
    assert update_continuous_coordinate(np.array([1.0, 1.0]), x, 1.0, 2) == 0   # 2*1 == 2*1 ties to 0
    assert update_continuous_coordinate(np.array([1.0, 1.0]), x, 0.99, 2) == 1
    with pytest.raises(ValueError):
        update_continuous_coordinate(np.ones(2), np.zeros(2), 0.0, 2)


def test_continuous_columns_are_fitted():
    ds = random_ds(2, n=80, n_cont=2)
    res = fit(ds, PenaltyConfig(0.001, 0.01))
    assert np.all(np.abs(res.coef.theta_cont - 1) < 0.5)


def test_reduction_means():
    ds = make_ds([[0, 1], [0, 0], [1, 1]], [3.0, 1.0, 2.0], [3, 2])
    coef = Coefficients(1.0, (np.zeros(3), np.array([0.0, 1.0])))
    red = reduce_block_to_univariate(ds, coef, 0)
    assert red.levels.tolist() == [0, 1]
    assert red.ybar.tolist() == [0.5, 0.0] and red.weights.tolist() == [2, 1]


def test_unobserved_level_stays_zero():
    ds = make_ds([0, 0, 1, 1], [3, 3, 1, 1], [3])
    res = fit(ds, PenaltyConfig(0.01, 0.01))
    assert res.coef.theta_cat[0][2] == 0


def test_random_block_order_is_seeded():
    ds = random_ds(3)
    cfg = BcdConfig(block_order="random", seed=7)
    a = fit_bcd(ds, PenaltyConfig(0.01, 0.01), cfg)
    b = fit_bcd(ds, PenaltyConfig(0.01, 0.01), cfg)
    assert a.objective == b.objective


def test_config_validation():
    with pytest.raises(ValueError):
        BcdConfig(max_sweeps=0)
    with pytest.raises(ValueError):
        BcdConfig(block_order="greedy")


def test_majorizer_at_zero():
    ds = make_ds([0, 1], [1, -1], [2], task="binary")
    g, yt = logistic_majorizer(ds, Coefficients.zeros(ds.schema))
    assert g.tolist() == [-0.5, 0.5]
    assert yt.tolist() == [2.0, -2.0]


@given(st.integers(0, 10_000))
def test_surrogate_bounds_loss(seed):
    ds = random_ds(seed, n=30, task="binary")
    rng = np.random.default_rng(seed)
    c0 = Coefficients(rng.normal(), tuple(rng.normal(size=p) for p in ds.schema.sizes))
    c1 = Coefficients(rng.normal(), tuple(rng.normal(scale=3, size=p) for p in ds.schema.sizes))
    assert surrogate_gap(ds, c0, c0) == pytest.approx(0, abs=1e-12)
    assert surrogate_gap(ds, c1, c0) >= -1e-9


def test_logistic_separable_toy():
    ds = make_ds([0, 0, 1, 1], [1, 1, -1, -1], [2], task="binary")
    res = fit_logistic_bcd(ds, PenaltyConfig(0.001, 0.001))
    eta = res.coef.alpha + res.coef.theta_cat[0][ds.codes[:, 0]]
    assert np.all(np.sign(eta) == ds.y)
    tr = np.array(res.objective_trace)
    assert np.all(np.diff(tr) <= 1e-12)


def test_logistic_requires_binary():
    with pytest.raises(ValueError):
        fit_logistic_bcd(random_ds(0), PenaltyConfig())
