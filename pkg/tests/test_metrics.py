import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from rackforge.errors import AlignmentError, UndefinedMetric
from rackforge.layout import FRONT, TOP, LayoutStack, ProbabilityStack
from rackforge.metrics import (BOX, RACK, MetricsTable, ap_from_scores, average_precision, metrics_table,
                               miou)

import oracles


def stack(a, view=TOP):
    a = np.asarray(a, np.uint8)
    return LayoutStack(view, a if a.ndim == 3 else a[None])


def probs_with(score_box, view=TOP):
    """Probability stack whose Occupied score is ``score_box`` and the rest sits on Background."""
    s = np.asarray(score_box, float)[None]
    p = np.stack([1 - s, np.zeros_like(s), s], -1)
    return ProbabilityStack(view, p)


def test_identical_layouts_score_100():
    t = stack(np.random.default_rng(0).integers(0, 3, (2, 8, 8)))
    assert miou([t], [t], RACK) == 100.0 and miou([t], [t], BOX) == 100.0
    assert average_precision([ProbabilityStack.one_hot(t)], [t], BOX) == 100.0


def test_complement_scores_zero():
    t = np.zeros((4, 4), np.uint8)
    t[:2] = 1
    pred = np.where(t == 0, 1, 0)
    assert miou([stack(pred)], [stack(t)], RACK) == 0.0


def test_hand_counted_iou():
    t = np.zeros((4, 4), np.uint8)
    p = np.zeros((4, 4), np.uint8)
    t[0, 0:4] = 2
    p[0, 2:4] = 2
    p[1, 0:2] = 2
    assert miou([stack(p)], [stack(t)], BOX) == pytest.approx(100 * 2 / 6)


def test_absent_class_is_undefined():
    z = stack(np.zeros((4, 4)))
    with pytest.raises(UndefinedMetric):
        miou([z], [z], BOX)
    with pytest.raises(UndefinedMetric):
        average_precision([ProbabilityStack.one_hot(z)], [z], RACK)


def test_misaligned_inputs():
    z = stack(np.ones((4, 4)))
    with pytest.raises(AlignmentError):
        miou([z, z], [z], RACK)


def test_uniform_half_scores_give_positive_fraction():
    t = np.zeros((10, 10), np.uint8)
    t[:3, :] = 2                       # q = 0.3
    ap = average_precision([probs_with(np.full((10, 10), 0.5))], [stack(t)], BOX)
    assert ap == pytest.approx(30.0)


def test_three_cell_toy_by_enumeration():
    scores, labels = [0.9, 0.8, 0.7], [True, False, True]
    want = 0.5 * (1 + 1) / 2 + 0.0 + 0.5 * (0.5 + 2 / 3) / 2
    assert ap_from_scores(scores, labels) == pytest.approx(want)
    assert oracles.enumerated_ap(scores, labels) == pytest.approx(want)


@settings(max_examples=60, deadline=None)
@given(scores=arrays(np.float64, 30, elements=st.sampled_from([0.0, 0.1, 0.25, 0.5, 0.7, 0.9, 1.0])),
       labels=arrays(np.bool_, 30))
def test_ap_matches_brute_force_enumeration(scores, labels):
    if not labels.any():
        return
    assert ap_from_scores(scores, labels) == pytest.approx(oracles.enumerated_ap(scores, labels), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(a=arrays(np.uint8, (2, 6, 6), elements=st.integers(0, 2)),
       b=arrays(np.uint8, (2, 6, 6), elements=st.integers(0, 2)))
def test_miou_symmetric_and_bounded(a, b):
    for cls in (RACK, BOX):
        try:
            v = miou([stack(a)], [stack(b)], cls)
        except UndefinedMetric:
            continue
        assert 0.0 <= v <= 100.0
        assert v == pytest.approx(miou([stack(b)], [stack(a)], cls))


def test_table_shape_and_roundtrip():
    t = {v: [stack(np.random.default_rng(1).integers(0, 3, (2, 6, 6)), v)] for v in (TOP, FRONT)}
    table = metrics_table(t, t)
    d = table.to_dict()
    assert set(d) == {TOP, FRONT} and set(d[TOP]) == {RACK, BOX}
    assert all(m == 100.0 for row in d.values() for c in row.values() for m in c.values())
    assert MetricsTable.from_dict(d).to_dict() == d
    assert "100.00" in table.format()
