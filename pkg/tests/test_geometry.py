import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from anchorcov.geometry import (
    Box,
    aligned_scale_iou,
    boxes_to_array,
    concentric_iou,
    iou,
    iou_matrix,
    min_detectable_size,
    next_anchor_scale,
    worst_case_displaced_iou,
)
from oracles import brute_worst_case, raster_iou

# coordinates on a 0.1px lattice keep the raster oracle exact
tenths = st.integers(0, 400).map(lambda v: v / 10)
sizes = st.integers(1, 300).map(lambda v: v / 10)
lattice_boxes = st.builds(Box, tenths, tenths, sizes, sizes)
real_boxes = st.builds(
    Box,
    st.floats(-500, 500),
    st.floats(-500, 500),
    st.floats(0.01, 500),
    st.floats(0.01, 500),
)


def test_box_rejects_degenerate():
    with pytest.raises(ValueError):
        Box(0, 0, 0, 10)
    with pytest.raises(ValueError):
        Box(0, 0, 10, -1)
    with pytest.raises(ValueError):
        Box(float("nan"), 0, 1, 1)
    with pytest.raises(ValueError):
        Box("1", 0, 1, 1)


def test_box_side_and_aspect():
    b = Box(3, 4, 50, 32)
    assert b.side() == 40.0
    assert b.aspect() == 50 / 32


def test_iou_examples():
    b = Box(1.5, 2.5, 33.3, 17.1)
    assert iou(b, b) == 1.0
    assert iou(Box(0, 0, 40, 40), Box(20, 0, 40, 40)) == pytest.approx(800 / 2400, abs=1e-15)
    assert iou(Box(0, 0, 10, 10), Box(10, 0, 10, 10)) == 0.0


def test_iou_example_matches_raster():
    assert raster_iou(Box(0, 0, 40, 40), Box(20, 0, 40, 40)) == pytest.approx(1 / 3, abs=1e-12)


def test_iou_matches_raster_on_seeded_pairs():
    rng = np.random.default_rng(1234)
    for _ in range(1000):
        x = rng.integers(0, 300, size=2) / 10
        y = rng.integers(0, 300, size=2) / 10
        w = rng.integers(1, 200, size=2) / 10
        h = rng.integers(1, 200, size=2) / 10
        a, b = Box(x[0], y[0], w[0], h[0]), Box(x[1], y[1], w[1], h[1])
        assert abs(iou(a, b) - raster_iou(a, b)) < 1e-3


@given(lattice_boxes, lattice_boxes)
def test_iou_symmetric_bounded(a, b):
    v = iou(a, b)
    assert v == iou(b, a)
    assert 0.0 <= v <= 1.0


@given(real_boxes)
def test_iou_identity_is_exact(a):
    assert iou(a, a) == 1.0


@given(st.lists(real_boxes, min_size=1, max_size=6), st.lists(real_boxes, min_size=1, max_size=6))
def test_iou_matrix_bit_identical_to_scalar(xs, ys):
    m = iou_matrix(boxes_to_array(xs), boxes_to_array(ys))
    for i, a in enumerate(xs):
        for j, b in enumerate(ys):
            assert m[i, j] == iou(a, b)


@pytest.mark.parametrize("alpha,expected", [(1.0, 1.0), (math.sqrt(2), 0.5), (2.0, 0.25)])
def test_aligned_scale_iou(alpha, expected):
    assert aligned_scale_iou(alpha) == pytest.approx(expected, rel=1e-15)


def test_aligned_scale_iou_rejects_shrinking():
    with pytest.raises(ValueError):
        aligned_scale_iou(0.9)


@given(st.floats(1, 1e6))
def test_aligned_scale_iou_inverse_square(alpha):
    assert aligned_scale_iou(alpha) * alpha**2 == pytest.approx(1.0, rel=1e-15)


def test_aligned_scale_iou_is_nested_box_iou():
    # a box anywhere inside a larger one of the same aspect
    assert iou(Box(5, 7, 20, 20), Box(0, 0, 40, 40)) == aligned_scale_iou(2.0)


def test_worst_case_examples():
    assert worst_case_displaced_iou(8, 16) == 0.0
    assert worst_case_displaced_iou(3, 16) == 0.0
    assert worst_case_displaced_iou(44, 16) == pytest.approx(1296 / 2576, rel=1e-14)
    assert worst_case_displaced_iou(44, 16) == pytest.approx(0.50311, abs=5e-6)
    assert worst_case_displaced_iou(1000, 16) == pytest.approx(984064 / 1015936, rel=1e-14)
    assert worst_case_displaced_iou(1000, 16) == pytest.approx(0.96863, abs=5e-6)


def test_worst_case_is_displaced_box_iou():
    s, d = 44.0, 16.0
    assert worst_case_displaced_iou(s, d) == pytest.approx(iou(Box(0, 0, s, s), Box(d / 2, d / 2, s, s)), rel=1e-14)


@pytest.mark.parametrize("d", [4, 8, 16, 32])
@pytest.mark.parametrize("s", [24, 37, 61, 200])
def test_worst_case_matches_brute_force(s, d):
    assert abs(worst_case_displaced_iou(s, d) - brute_worst_case(s, d)) < 1e-3


@given(st.floats(0.5, 64), st.floats(0.01, 1000), st.floats(0.01, 1000))
def test_worst_case_monotone_in_size(d, s1, s2):
    lo, hi = sorted((s1, s2))
    assert worst_case_displaced_iou(lo, d) <= worst_case_displaced_iou(hi, d) + 1e-15


def test_min_detectable_size_values():
    assert min_detectable_size(16, 0.5) == pytest.approx(43.596, abs=5e-4)
    assert min_detectable_size(8, 0.5) == pytest.approx(21.798, abs=5e-4)
    assert round(min_detectable_size(16, 0.5)) == 44
    assert round(min_detectable_size(8, 0.5)) == 22


@pytest.mark.parametrize("t", [0.3, 0.5, 0.7])
@pytest.mark.parametrize("d", [4, 8, 16])
def test_min_detectable_size_inverts_worst_case(d, t):
    assert abs(worst_case_displaced_iou(min_detectable_size(d, t), d) - t) < 1e-9


@given(st.floats(0.5, 64), st.floats(0.01, 0.99))
def test_min_detectable_size_inverse_property(d, t):
    assert worst_case_displaced_iou(min_detectable_size(d, t), d) == pytest.approx(t, abs=1e-9)


@pytest.mark.parametrize("bad", [0.0, 1.0, -0.2, 1.5])
def test_threshold_must_be_open_unit_interval(bad):
    with pytest.raises(ValueError):
        min_detectable_size(16, bad)
    with pytest.raises(ValueError):
        next_anchor_scale(100, bad)


def test_next_anchor_scale():
    assert next_anchor_scale(32, 0.5) == pytest.approx(45.2548, abs=5e-5)
    assert next_anchor_scale(128, 0.5) == pytest.approx(181.019, abs=5e-4)
    assert next_anchor_scale(100, 0.25) == 200.0


@given(st.floats(1, 1000), st.floats(0.05, 0.95), st.integers(0, 12))
def test_next_anchor_scale_composes(s, t, k):
    v = s
    for _ in range(k):
        v = next_anchor_scale(v, t)
    assert v == pytest.approx(s * t ** (-k / 2), rel=1e-9)


def test_concentric_iou_examples():
    assert concentric_iou((40, 40), (40, 40)) == 1.0
    assert concentric_iou((40, 40), (40 * math.sqrt(2), 40 * math.sqrt(2))) == pytest.approx(0.5, rel=1e-12)
    assert concentric_iou((40, 40), (56.57, 56.57)) == pytest.approx(0.5, abs=1e-4)
    assert concentric_iou((20, 80), (40, 40)) == pytest.approx(800 / 2400, rel=1e-15)


def test_concentric_iou_matches_raster():
    # (20, 80) and (40, 40) both centered at (20, 20)
    a, b = Box(10, -20, 20, 80), Box(0, 0, 40, 40)
    assert raster_iou(a, b) == pytest.approx(concentric_iou((20, 80), (40, 40)), abs=1e-12)


@given(lattice_boxes, st.floats(0.1, 60), st.floats(0.1, 60), st.floats(-80, 80), st.floats(-80, 80))
def test_concentric_placement_is_optimal(a, w, h, dx, dy):
    cx, cy = a.center
    shifted = Box.from_center(cx + dx, cy + dy, w, h)
    assert iou(a, shifted) <= concentric_iou((a.w, a.h), (w, h)) + 1e-12
