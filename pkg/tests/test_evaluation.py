import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from steerid.errors import BalanceError
from steerid.evaluation import (accuracy_curve, check_disjoint, confusion_from_votes, cumulative_decision,
                                cumulative_decisions, make_split)
from steerid.ingest import UniformTrip


def fleet(minutes, n_trips=4):
    out = {}
    for d, m in minutes.items():
        n = int(m * 600 / n_trips)
        out[d] = [UniformTrip(f"{d}_t{k}", d, np.zeros(n), np.ones(n), 0) for k in range(n_trips)]
    return out


def test_cumulative_decision_ties_lowest():
    assert cumulative_decision([[0.5, 0.5], [0.5, 0.5]]) == 0
    assert cumulative_decision([[0.2, 0.8], [0.9, 0.1]]) == 0
    assert cumulative_decision([[0.2, 0.8], [0.6, 0.4]]) == 1


def test_cumulative_decisions_prefix_sums():
    votes = np.array([[[0.9, 0.1], [0.0, 1.0], [0.0, 1.0]]])
    np.testing.assert_array_equal(cumulative_decisions(votes), [[0, 1, 1]])


def test_accuracy_curve_and_confusion():
    votes = np.array([[[0.9, 0.1], [0.8, 0.2]], [[0.9, 0.1], [0.0, 1.0]], [[0.1, 0.9], [0.2, 0.8]]])
    labels = np.array([0, 1, 1])
    curve = accuracy_curve(votes, labels)
    np.testing.assert_allclose(curve.accuracy, [2 / 3, 1.0])
    cm = confusion_from_votes(votes, labels, ["a", "b"])
    np.testing.assert_array_equal(cm.counts, [[1, 0], [0, 2]])
    np.testing.assert_allclose(cm.normalized, np.eye(2))
    assert cm.accuracy == 1.0
    early = confusion_from_votes(votes[:, :1], labels, ["a", "b"])
    np.testing.assert_array_equal(early.counts, [[1, 0], [1, 1]])


def test_split_minimums_balance_and_disjointness():
    plan = make_split(fleet({"a": 280, "b": 330}), seed=0)
    for d in plan.drivers:
        assert plan.train_minutes(d) >= 240 and plan.test_minutes(d) >= 30
    assert len(plan.train["a"]) == len(plan.train["b"])
    assert check_disjoint(plan)


def test_split_test_is_latest():
    plan = make_split(fleet({"a": 300}), seed=0)
    assert max(s.index for s in plan.train["a"]) < min(s.index for s in plan.test["a"])


def test_split_rejects_short_driver():
    with pytest.raises(BalanceError):
        make_split(fleet({"a": 300, "b": 200}), seed=0)


def test_disjoint_detects_overlap():
    plan = make_split(fleet({"a": 300}), seed=0)
    plan.test["a"].append(plan.train["a"][0])
    assert not check_disjoint(plan)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 1000), st.lists(st.integers(270, 400), min_size=2, max_size=4))
def test_split_properties(seed, mins):
    plan = make_split(fleet({f"d{i}": m for i, m in enumerate(mins)}), seed=seed)
    sizes = {len(plan.train[d]) for d in plan.drivers}
    assert len(sizes) == 1 and check_disjoint(plan)
