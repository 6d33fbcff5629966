import numpy as np
import pytest

from instances import mining_instance, mining_invariant_errors, mining_matches_oracle
from objdistill.geometry import iou_matrix
from objdistill.mining import (Claim, MiningThresholds, label_conflict_resolution, mine,
                               positive_classes, regression_references,
                               select_regression_reference, with_background)
from oracles import conflict_oracle, mine_oracle, regression_reference_oracle


def test_single_proposal_fallback_seed():
    res = mine(np.array([[0.5, 0.1, 0.4]]), np.array([[0, 0, 5, 5]], dtype=float), [0, 1])
    assert res.seeds == {2: (0,)}
    assert res.threshold_seeds == {2: ()}
    assert res.labels.tolist() == [2]
    assert res.positives == (0,)


def test_two_disjoint_confident_seeds():
    boxes = np.array([[0, 0, 10, 10], [20, 20, 30, 30]], dtype=float)
    probs = np.array([[0.1, 0.9], [0.2, 0.8]])
    res = mine(probs, boxes, [1])
    assert res.keep == (0, 1)
    assert res.seeds == {1: (0, 1)}
    assert res.labels.tolist() == [1, 1]


def test_neighbours_take_seed_class_and_rest_is_background():
    boxes = np.array([[0, 0, 10, 10], [1, 0, 11, 10], [40, 40, 50, 50]], dtype=float)
    probs = np.array([[0.05, 0.95], [0.5, 0.5], [0.6, 0.4]])
    res = mine(probs, boxes, [1])
    assert res.seek == (0,)
    assert res.neighbors == (1,)
    assert res.labels.tolist() == [1, 1, 0]
    assert res.seed_of.tolist() == [0, 0, -1]


def test_empty_and_negative_inputs_rejected():
    with pytest.raises(ValueError):
        mine(np.zeros((0, 3)), np.zeros((0, 4)), [1, 0])
    with pytest.raises(ValueError):
        mine(np.full((1, 3), 1 / 3), np.array([[0, 0, 1, 1]], dtype=float), [0, 0])


def test_thresholds_validated():
    with pytest.raises(ValueError):
        MiningThresholds(t_conf=1.2)


def test_with_background_prepends_zero_column():
    s = np.arange(6, dtype=float).reshape(2, 3)
    out = with_background(s)
    assert out.shape == (3, 3)
    assert out[:, 0].tolist() == [0, 0, 0]
    np.testing.assert_array_equal(out[:, 1:], s.T)


def test_positive_classes_are_one_based():
    assert positive_classes([0, 1, 0, 1]) == [2, 4]


def test_thirty_proposals_match_oracle():
    rng = np.random.default_rng(30)
    boxes, _, _ = mining_instance(rng, max_boxes=30)
    while boxes.shape[0] != 30:
        boxes, _, _ = mining_instance(rng, max_boxes=30)
    probs = rng.dirichlet(np.full(4, 0.3), 30)
    labels = np.array([1.0, 0.0, 1.0])
    res = mine(probs, boxes, labels)
    assert mining_matches_oracle(res, mine_oracle(probs.tolist(), boxes.tolist(),
                                                  labels.tolist(), 0.3, 0.7, 0.5))


@pytest.mark.parametrize("use_nms", [True, False])
def test_random_instances_match_oracle(use_nms):
    rng = np.random.default_rng(7 + use_nms)
    for _ in range(100):
        boxes, probs, labels = mining_instance(rng)
        t_conf = float(rng.choice([0.3, 0.5, 0.7]))
        res = mine(probs, boxes, labels, MiningThresholds(0.3, t_conf, 0.5), use_nms=use_nms)
        ref = mine_oracle(probs.tolist(), boxes.tolist(), labels.tolist(), 0.3, t_conf, 0.5,
                          use_nms=use_nms)
        assert mining_matches_oracle(res, ref)


def test_invariants_on_random_instances():
    rng = np.random.default_rng(11)
    for _ in range(300):
        boxes, probs, labels = mining_instance(rng)
        res = mine(probs, boxes, labels)
        assert mining_invariant_errors(res, boxes, labels, iou_matrix(boxes, boxes), 0.5) == []


def test_raising_t_conf_never_adds_threshold_seeds():
    rng = np.random.default_rng(12)
    for _ in range(200):
        boxes, probs, labels = mining_instance(rng)
        lo, hi = sorted(rng.random(2))
        a = mine(probs, boxes, labels, MiningThresholds(t_conf=lo))
        b = mine(probs, boxes, labels, MiningThresholds(t_conf=hi))
        for c in a.seeds:
            assert len(b.threshold_seeds[c]) <= len(a.threshold_seeds[c])


def test_conflict_single_claim():
    labels, seed_of = label_conflict_resolution([Claim(2, 0, 3, 0.4)], 4)
    assert labels.tolist() == [0, 0, 3, 0]
    assert seed_of.tolist() == [-1, -1, 0, -1]


def test_conflict_higher_score_wins():
    claims = [Claim(0, 5, 2, 0.80), Claim(0, 4, 1, 0.95)]
    assert label_conflict_resolution(claims, 1)[0].tolist() == [1]


def test_conflict_matches_rule_oracle(rng):
    for _ in range(200):
        n = int(rng.integers(1, 15))
        claims = [Claim(int(rng.integers(n)), int(rng.integers(n)), int(rng.integers(1, 4)),
                        float(rng.choice([0.2, 0.5, 0.9]))) for _ in range(rng.integers(0, 25))]
        labels, seed_of = label_conflict_resolution(claims, n)
        ref = conflict_oracle([(c.box, c.seed, c.label, c.score) for c in claims], n)
        assert (labels.tolist(), seed_of.tolist()) == ref


def test_reference_to_itself_when_alone():
    boxes = np.array([[0, 0, 10, 10], [30, 30, 40, 40]], dtype=float)
    res = mine(np.array([[0.1, 0.9], [0.9, 0.1]]), boxes, [1])
    assert select_regression_reference(0, res, [0.2, 0.9], boxes) == 0


def test_reference_picks_heavier_overlapping_positive():
    boxes = np.array([[0, 0, 10, 10], [1, 0, 11, 10], [0, 1, 10, 11]], dtype=float)
    res = mine(np.array([[0.0, 1.0], [0.1, 0.9], [0.2, 0.8]]), boxes, [1], use_nms=False)
    assert set(res.positives) == {0, 1, 2}
    assert select_regression_reference(0, res, [0.1, 0.3, 0.9], boxes) == 2


def test_reference_none_for_isolated_box():
    boxes = np.array([[0, 0, 10, 10], [50, 50, 60, 60]], dtype=float)
    res = mine(np.array([[0.1, 0.9], [0.9, 0.1]]), boxes, [1])
    assert select_regression_reference(1, res, [0.5, 0.5], boxes) is None


def test_reference_matches_exhaustive_scan():
    rng = np.random.default_rng(21)
    for _ in range(200):
        boxes, probs, labels = mining_instance(rng)
        res = mine(probs, boxes, labels)
        weights = np.round(rng.random(boxes.shape[0]), 1)
        refs = regression_references(res, weights, boxes)
        for r in range(boxes.shape[0]):
            want = regression_reference_oracle(r, res.positives, weights.tolist(),
                                               boxes.tolist(), 0.5)
            assert select_regression_reference(r, res, weights, boxes) == want
            if r in res.positives:
                assert refs.get(r) == want
