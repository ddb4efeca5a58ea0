import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from powercql.core import DEFAULT_GRID, DataError, Dataset, NodeState, Transition
from powercql.reward import RewardBounds, fit_bounds, normalize, normalize_dataset, raw_reward


def _ds(groups):
    s = NodeState.zeros()
    trs = [Transition(name, k, s, 0, 78.0, r, 0.0, s, False) for name, rs in groups.items() for k, r in enumerate(rs)]
    return Dataset(trs, DEFAULT_GRID)


def test_raw_reward_examples():
    assert raw_reward(0, 100) == 0
    assert raw_reward(2, 100) == pytest.approx(8 / 100.001)
    assert raw_reward(2, 100) == pytest.approx(0.0799992, abs=1e-7)
    assert raw_reward(200.03, 156) == pytest.approx(200.03**3 / 156.001)
    assert raw_reward(200.03, 156) == pytest.approx(5.130e4, rel=1e-3)


def test_raw_reward_zero_power_is_finite():
    assert raw_reward(1.0, 0.0) == pytest.approx(1000.0)
    with pytest.raises(ValueError):
        raw_reward(-1.0, 10.0)


@given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_raw_reward_monotone(p, w, d):
    assert raw_reward(p + d, w) > raw_reward(p, w)
    assert raw_reward(p, w + d) < raw_reward(p, w)


def test_fit_bounds_examples():
    assert fit_bounds(_ds({"A": [1, 2, 3]}))["A"] == RewardBounds(1, 3)
    assert fit_bounds(_ds({"A": [7]}))["A"] == RewardBounds(7, 7)
    b = fit_bounds(_ds({"A": [1, 2], "B": [1e4, 3e4]}))
    assert b["A"] == RewardBounds(1, 2) and b["B"] == RewardBounds(1e4, 3e4)
    with pytest.raises(DataError):
        fit_bounds(_ds({}))


def test_bounds_validation():
    with pytest.raises(ValueError):
        RewardBounds(2, 1)
    with pytest.raises(ValueError):
        RewardBounds(math.nan, 1)


def test_normalize_examples():
    b = RewardBounds(0, 10)
    assert normalize(0, b) == -5
    assert normalize(10, b) == 5
    assert normalize(5, b) == 0
    assert normalize(7, RewardBounds(7, 7)) == 0
    assert normalize(5, b, target=(0.0, 1.0)) == 0.5


@given(st.floats(-1e6, 1e6), st.floats(0, 1e6), st.floats(-1e7, 1e7), st.floats(0, 1e6))
def test_normalize_monotone_and_bounded(lo, span, r, d):
    b = RewardBounds(lo, lo + span)
    a, c = normalize(r, b), normalize(r + d, b)
    assert -5 <= a <= 5 and -5 <= c <= 5
    assert c >= a


@given(
    st.dictionaries(
        st.sampled_from(["A", "B", "C"]),
        st.lists(st.floats(0, 1e8), min_size=1, max_size=20),
        min_size=1,
    )
)
def test_normalized_dataset_hits_both_endpoints(groups):
    ds = normalize_dataset(_ds(groups))
    for name, rs in groups.items():
        got = [tr.reward_norm for tr in ds.transitions if tr.benchmark == name]
        assert all(-5 <= g <= 5 for g in got)
        if max(rs) > min(rs):
            assert min(got) == -5 and max(got) == 5
        else:
            assert set(got) == {0.0}
        assert ds.reward_bounds[name] == (min(rs), max(rs))


def test_normalize_dataset_refits_after_append():
    ds = normalize_dataset(_ds({"A": [1, 2]}))
    s = NodeState.zeros()
    ds.transitions.append(Transition("A", 9, s, 0, 78.0, 4.0, 0.0, s, False))
    again = normalize_dataset(ds)
    assert again.reward_bounds["A"] == (1, 4)
    assert [t.reward_norm for t in again.transitions] == pytest.approx([-5, -5 + 10 / 3, 5])
