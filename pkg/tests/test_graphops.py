import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from cdgm import graphops
from cdgm.errors import AllZeroGraph, MarginViolated, ShapeMismatch


def offdiag(p, gen):
    w = gen.normal(size=(p, p))
    np.fill_diagonal(w, 0.0)
    return w


def test_normalize_divides_by_peak():
    w = np.array([[0.0, 4.0], [-2.0, 0.0]])
    out = graphops.normalize(w)
    assert np.allclose(out, [[0.0, 1.0], [-0.5, 0.0]])


def test_normalize_identity_when_peak_is_one():
    w = np.array([[0.0, 1.0], [0.25, 0.0]])
    assert np.array_equal(graphops.normalize(w), w)


def test_normalize_preserves_ranking():
    gen = np.random.default_rng(0)
    w = offdiag(6, gen)
    order_before = np.argsort(np.abs(w).ravel())
    order_after = np.argsort(np.abs(graphops.normalize(w)).ravel())
    assert np.array_equal(order_before, order_after)


def test_normalize_all_zero_raises():
    with pytest.raises(AllZeroGraph):
        graphops.normalize(np.zeros((3, 3)))


def test_symmetric_scores_min_and_mean():
    w = np.array([[0.0, 0.8], [-0.2, 0.0]])
    assert np.allclose(graphops.symmetric_scores(w), [[0.0, 0.2], [0.2, 0.0]])
    assert np.allclose(graphops.symmetric_scores(w, method="mean"),
                       [[0.0, 0.5], [0.5, 0.0]])
    with pytest.raises(ShapeMismatch):
        graphops.symmetric_scores(w, method="max")


def test_symmetric_scores_symmetric_input_is_abs():
    w = np.array([[0.0, -0.4], [-0.4, 0.0]])
    assert np.allclose(graphops.symmetric_scores(w), np.abs(w))


def test_threshold_and_requires_both_directions():
    w = np.zeros((2, 2))
    w[0, 1], w[1, 0] = 0.2, 0.03
    assert not graphops.threshold_and(w, 0.1).any()
    w[1, 0] = 0.2
    skel = graphops.threshold_and(w, 0.1)
    assert skel[0, 1] and skel[1, 0]


def test_threshold_zero_keeps_pairs_with_both_nonzero():
    w = np.zeros((3, 3))
    w[0, 1] = w[1, 0] = 0.01
    w[0, 2] = 0.5  # one-directional only
    skel = graphops.threshold_and(w, 0.0)
    assert skel[0, 1] and not skel[0, 2]


@given(hnp.arrays(np.float64, (5, 5), elements=st.floats(-2, 2)),
       st.floats(0.01, 1), st.floats(0.01, 1))
@settings(max_examples=60, deadline=None)
def test_threshold_monotone_and_equals_scores(w, t1, t2):
    np.fill_diagonal(w, 0.0)
    lo, hi = min(t1, t2), max(t1, t2)
    skel_hi = graphops.threshold_and(w, hi)
    skel_lo = graphops.threshold_and(w, lo)
    assert np.all(skel_hi <= skel_lo)
    assert np.array_equal(skel_lo, graphops.symmetric_scores(w) >= lo)


def test_threshold_invariant_to_positive_rescaling_after_normalize():
    gen = np.random.default_rng(1)
    w = offdiag(7, gen)
    a = graphops.threshold_and(graphops.normalize(w), 0.3)
    b = graphops.threshold_and(graphops.normalize(17.0 * w), 0.3)
    assert np.array_equal(a, b)


def test_margin_threshold_values():
    assert graphops.margin_threshold(0.1, 0.5, 0.5) == pytest.approx(0.3)
    assert graphops.margin_threshold(0.2, 0.6, 0.25) == pytest.approx(0.5)
    # eta near 0 pushes the threshold to the strong-edge floor
    assert graphops.margin_threshold(0.1, 0.5, 1e-9) == pytest.approx(0.5, abs=1e-8)


def test_margin_threshold_validation():
    with pytest.raises(MarginViolated):
        graphops.margin_threshold(0.5, 0.4, 0.5)
    with pytest.raises(ShapeMismatch):
        graphops.margin_threshold(0.1, 0.5, 1.5)


def test_magnitude_histogram_counts_offdiagonal_entries():
    w = np.zeros((3, 3))
    w[0, 1], w[1, 0] = 1.0, 0.5
    counts, edges = graphops.magnitude_histogram(w, bins=4, normalized=True)
    assert counts.sum() == 6  # all off-diagonal cells pooled
    assert edges[0] == 0.0 and edges[-1] == 1.0
    assert counts[-1] == 1  # the unit entry


def test_skeleton_edge_list_and_csv(tmp_path):
    skel = np.zeros((4, 4), dtype=bool)
    skel[0, 2] = skel[2, 0] = True
    skel[1, 3] = skel[3, 1] = True
    assert graphops.skeleton_edge_list(skel) == [(0, 2), (1, 3)]
    out = tmp_path / "edges.csv"
    graphops.write_edge_list(skel, out)
    assert out.read_text() == "j,k\n0,2\n1,3\n"
    with pytest.raises(ShapeMismatch):
        asym = np.zeros((3, 3), dtype=bool)
        asym[0, 1] = True
        graphops.skeleton_edge_list(asym)
