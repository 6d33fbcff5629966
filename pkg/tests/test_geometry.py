import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_boxes
from objdistill.geometry import (BoundingBox, DegenerateBoxError, ProposalSet, apply_offsets,
                                 decode_offsets, encode_boxes, encode_offsets, iou, iou_matrix,
                                 nms, to_pixel_rects)
from oracles import iou_py, nms_oracle


def test_iou_identical():
    b = BoundingBox(0, 0, 10, 10)
    assert iou(b, b) == 1.0


def test_iou_disjoint():
    assert iou(BoundingBox(0, 0, 10, 10), BoundingBox(20, 20, 30, 30)) == 0.0


def test_iou_half_overlap():
    assert iou(BoundingBox(0, 0, 10, 10), BoundingBox(0, 5, 10, 15)) == pytest.approx(1 / 3)


def test_degenerate_box_rejected():
    with pytest.raises(DegenerateBoxError):
        BoundingBox(5, 0, 5, 10)
    with pytest.raises(DegenerateBoxError):
        BoundingBox(0, 0, float("nan"), 1)


coords = st.floats(-50, 50, allow_nan=False)
sides = st.floats(0.5, 40, allow_nan=False)


@st.composite
def boxes(draw):
    x, y, w, h = draw(coords), draw(coords), draw(sides), draw(sides)
    return BoundingBox(x, y, x + w, y + h)


@given(boxes(), boxes())
def test_iou_symmetric_and_bounded(a, b):
    v = iou(a, b)
    assert v == iou(b, a)
    assert 0.0 <= v <= 1.0


@given(boxes(), boxes())
def test_iou_one_only_for_identical(a, b):
    if iou(a, b) == 1.0:
        assert np.allclose(a.as_array(), b.as_array())


def test_iou_matrix_matches_scalar(rng):
    a = random_boxes(rng, 15, 50, 50)
    b = random_boxes(rng, 9, 50, 50)
    m = iou_matrix(a, b)
    for i in range(15):
        for j in range(9):
            assert m[i, j] == pytest.approx(iou_py(a[i], b[j]), abs=1e-12)


def test_nms_identical_boxes():
    b = np.array([[0, 0, 10, 10], [0, 0, 10, 10]], dtype=float)
    assert nms(b, [0.9, 0.8], 0.3) == [0]
    assert nms(b, [0.8, 0.9], 0.3) == [1]


def test_nms_disjoint_boxes():
    b = np.array([[0, 0, 10, 10], [20, 20, 30, 30]], dtype=float)
    assert nms(b, [0.2, 0.7], 0.3) == [1, 0]


def test_nms_tie_goes_to_lower_index():
    b = np.array([[0, 0, 10, 10], [1, 0, 11, 10]], dtype=float)
    assert nms(b, [0.5, 0.5], 0.3) == [0]


def test_nms_length_mismatch():
    with pytest.raises(ValueError):
        nms(np.array([[0, 0, 1, 1]], dtype=float), [0.1, 0.2], 0.3)


def test_nms_matches_oracle_50_boxes(rng):
    b = random_boxes(rng, 50, 100, 100)
    s = rng.random(50)
    assert nms(b, s, 0.3) == nms_oracle(b, s, 0.3)


def test_nms_accepts_proposal_set():
    ps = ProposalSet("x", np.array([[0, 0, 4, 4], [0, 0, 4, 4.5]], dtype=float))
    assert nms(ps, [0.1, 0.3], 0.5) == [1]


def test_apply_zero_offsets_is_identity():
    r = BoundingBox(3, 4, 13, 9)
    assert apply_offsets(r, (0, 0, 0, 0)).as_tuple() == pytest.approx(r.as_tuple())


def test_apply_log2_doubles_size():
    out = apply_offsets(BoundingBox(0, 0, 10, 10), (0, 0, math.log(2), math.log(2)))
    assert out.as_tuple() == pytest.approx((-5, -5, 15, 15))


def test_apply_offsets_clips_to_bounds():
    out = apply_offsets(BoundingBox(0, 0, 10, 10), (0, 0, math.log(2), math.log(2)),
                        bounds=(12, 12))
    assert out.as_tuple() == pytest.approx((0, 0, 12, 12))


def test_apply_offsets_degenerate_after_clip():
    with pytest.raises(DegenerateBoxError):
        apply_offsets(BoundingBox(0, 0, 10, 10), (5.0, 0, 0, 0), bounds=(20, 20))


def test_encode_known_offsets():
    t = encode_offsets(BoundingBox(0, 0, 10, 10), BoundingBox(5, 5, 15, 15))
    assert t == pytest.approx((0.5, 0.5, 0.0, 0.0))
    r = BoundingBox(1, 2, 3, 7)
    assert encode_offsets(r, r) == (0.0, 0.0, 0.0, 0.0)


@settings(max_examples=300)
@given(boxes(), boxes())
def test_encode_apply_round_trip(r, target):
    back = apply_offsets(r, encode_offsets(r, target))
    assert np.max(np.abs(back.as_array() - target.as_array())) < 1e-9


def test_vectorized_round_trip(rng):
    a = random_boxes(rng, 500, 80, 80)
    b = random_boxes(rng, 500, 80, 80)
    assert np.max(np.abs(decode_offsets(a, encode_boxes(a, b)) - b)) < 1e-9


def test_pixel_rects_round_half_up_and_clip():
    r = to_pixel_rects(np.array([[-3.0, 0.5, 4.49, 20.0]]), 10, 10)
    assert r.tolist() == [[0, 1, 4, 10]]
