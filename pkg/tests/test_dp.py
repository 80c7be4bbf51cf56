import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from catfuse.dp import (
    DataTerm,
    PiecewiseValueFn,
    UnboundedError,
    WeightedSequence,
    add_pointwise,
    brute_force_univariate,
    clip_with_jump_penalty,
    dp_seg_pen_l0,
    fmax_over_F,
    segment_objective,
    solve_block,
    solve_unsorted,
)


def seq(y, w=None):
    y = np.asarray(y, float)
    return WeightedSequence(y, np.ones_like(y) if w is None else np.asarray(w, float))


def test_documented_examples():
    sol = dp_seg_pen_l0(seq([3, 3, 0]), 0.5, 0.5)
    assert sol.beta.tolist() == [3, 3, 0]
    assert sol.objective == pytest.approx(1.5)
    y = [2.0, 1.0, -0.5]
    assert dp_seg_pen_l0(seq(y), 0, 0).beta.tolist() == y
    assert dp_seg_pen_l0(seq([2.0], [1.0]), 2.0, 0).beta.tolist() == [0]   # tie 2 == 2 goes to 0
    assert dp_seg_pen_l0(seq([2.0], [1.0]), 1.9, 0).beta.tolist() == [2]


def test_brute_force_examples():
    sol = brute_force_univariate(seq([1, 1]), 0, 100)
    assert sol.beta.tolist() == [1, 1]
    sol = brute_force_univariate(seq([5, -5]), 0, 1)
    assert sol.beta.tolist() == [5, -5] and sol.objective == pytest.approx(1)
    with pytest.raises(ValueError):
        brute_force_univariate(seq(np.zeros(19)), 0, 0)


def test_sequence_invariants():
    with pytest.raises(ValueError):
        seq([1, 2])
    with pytest.raises(ValueError):
        seq([1, 0], [1, 0])
    with pytest.raises(ValueError):
        dp_seg_pen_l0(seq([1]), -1, 0)


def test_fmax_examples():
    assert fmax_over_F(PiecewiseValueFn.quadratic(-1, 4, -4)) == pytest.approx((2, 0))
    assert fmax_over_F(PiecewiseValueFn.quadratic(-1, 0, 0, {0.0: 1.0})) == (0, 1)
    x, v = fmax_over_F(PiecewiseValueFn.quadratic(-1, 6, -9, {0.0: 1.0}))
    assert (x, v) == pytest.approx((3, 0))
    with pytest.raises(UnboundedError):
        fmax_over_F(PiecewiseValueFn.quadratic(1, 0, 0))


def test_clip_examples():
    f = clip_with_jump_penalty(PiecewiseValueFn.quadratic(-1, 0, 0), 1.0)
    assert f(3.0) == -1 and f(-5.0) == -1 and f(0.5) == pytest.approx(-0.25)
    g = clip_with_jump_penalty(PiecewiseValueFn.quadratic(-1, 2, 0), 0.0)
    assert g(-10.0) == pytest.approx(1) and g(4.0) == pytest.approx(1)
    h = clip_with_jump_penalty(PiecewiseValueFn.quadratic(-1, 0, 0, {0.0: 0.5}), 0.2)
    assert h(0.0) == pytest.approx(0.5) and h(10.0) == pytest.approx(0.3)
    assert h.spikes and all(s > 0 for s in h.spikes.values())


def test_add_pointwise_examples():
    f = add_pointwise(PiecewiseValueFn.constant(0.0), DataTerm(2, 1, 0))
    assert f(1.0) == 0 and f(0.0) == pytest.approx(-1)
    g = add_pointwise(PiecewiseValueFn.constant(0.0), DataTerm(2, 0, 0.7))
    assert g(0.0) == pytest.approx(0.7) and g(1.0) == pytest.approx(-1)
    h = add_pointwise(PiecewiseValueFn.quadratic(0, 0, 0.0, {0.0: 0.3}), DataTerm(2, 0, 0.7))
    assert h.spikes == pytest.approx({0.0: 1.0})


@st.composite
def instances(draw, max_len=9):
    m = draw(st.integers(1, max_len))
    y = sorted(draw(st.lists(st.floats(-4, 4, allow_nan=False), min_size=m, max_size=m)), reverse=True)
    w = draw(st.lists(st.integers(1, 5), min_size=m, max_size=m))
    return seq(y, w), draw(st.floats(0, 3)), draw(st.floats(0, 3))


@given(instances())
def test_matches_brute_force(inst):
    s, l0, lam = inst
    got = dp_seg_pen_l0(s, l0, lam)
    assert got.objective == pytest.approx(brute_force_univariate(s, l0, lam).objective, abs=1e-9)
    assert got.objective == pytest.approx(segment_objective(got.beta, s.ybar, s.weights, l0, lam), abs=1e-12)


@given(instances(max_len=6))
def test_reference_engine_agrees_and_states_stay_valid(inst):
    s, l0, lam = inst
    ref = dp_seg_pen_l0(s, l0, lam, engine="reference", check_states=True)
    assert ref.objective == pytest.approx(dp_seg_pen_l0(s, l0, lam).objective, abs=1e-9)


@given(instances())
def test_solution_shape(inst):
    s, l0, lam = inst
    b = dp_seg_pen_l0(s, l0, lam).beta
    for val in np.unique(b[b != 0]):
        seg = b == val
        assert val == pytest.approx(np.dot(s.weights[seg], s.ybar[seg]) / s.weights[seg].sum())


@given(instances(), st.floats(0.1, 10))
def test_joint_scaling(inst, c):
    s, l0, lam = inst
    a = dp_seg_pen_l0(s, l0, lam)
    b = dp_seg_pen_l0(WeightedSequence(s.ybar, s.weights * c), l0 * c, lam * c)
    assert b.objective == pytest.approx(c * a.objective, rel=1e-9, abs=1e-9)


def test_zero_input():
    assert dp_seg_pen_l0(seq(np.zeros(5)), 1, 1).beta.tolist() == [0] * 5


@given(st.lists(st.floats(-3, 3), min_size=1, max_size=10), st.floats(0, 3), st.floats(0, 3), st.booleans())
def test_unsorted_wrapper_and_fast_path(vals, l0, lam, anchor):
    v = np.array(vals)
    w = np.arange(1, v.size + 1, dtype=float)
    sol = solve_unsorted(v, w, l0, lam, zero_anchor=anchor)
    order = np.lexsort((np.arange(v.size), -v))
    if not anchor:
        direct = dp_seg_pen_l0(WeightedSequence(v[order], w[order]), l0, lam)
        assert sol.objective == pytest.approx(direct.objective, abs=1e-12)
    fast = solve_block(v, w, l0, lam, anchor)
    assert np.array_equal(fast != 0, sol.beta != 0)
    assert np.allclose(fast, sol.beta, atol=1e-12)


@given(instances(max_len=7), st.data())
def test_forced_anchor_matches_brute_force(inst, data):
    s, l0, lam = inst
    y = np.append(s.ybar, 0.0)
    w = np.append(s.weights, 1.0)
    order = np.lexsort((np.arange(y.size), -y))
    forced = order == y.size - 1
    ss = WeightedSequence(y[order], w[order])
    got = dp_seg_pen_l0(ss, l0, lam, forced=forced)
    assert got.objective == pytest.approx(brute_force_univariate(ss, l0, lam, forced=forced).objective, abs=1e-9)
    assert np.all(got.beta[forced] == 0)
