import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linear_sum_assignment

from svol.errors import CapacityError, NumericError, ShapeError
from svol.losses import LossWeights
from svol.matching import (NO_OBJECT, assignment_cost, cost_matrix, hungarian, match_cost,
                           padded_cost_matrix, per_frame_match, whole_video_match)

W = LossWeights()


def brute_min(cost):
    n, m = cost.shape
    return min(sum(cost[i, p[i]] for i in range(n)) for p in itertools.permutations(range(m), n))


def slot_cost(pred, scores, gts, frame_of, index_of):
    """Total pairing cost of an assignment, summed one matched slot at a time."""
    total = 0.0
    for (i, j) in zip(*np.nonzero(index_of >= 0)):
        total += match_cost(gts[frame_of[i, j]][index_of[i, j]], pred[i, j], scores[i, j], W)
    return total


def random_frame(rng, m, k):
    pred = np.concatenate([rng.uniform(0.2, 0.8, (m, 2)), rng.uniform(0.05, 0.4, (m, 2))], -1)
    gt = np.concatenate([rng.uniform(0.2, 0.8, (k, 2)), rng.uniform(0.05, 0.4, (k, 2))], -1)
    return pred, rng.uniform(size=m), gt


def test_hungarian_examples():
    eye_cost = 1.0 - np.eye(4)
    col = hungarian(eye_cost)
    assert col.tolist() == [0, 1, 2, 3] and assignment_cost(eye_cost, col) == 0.0
    c = np.array([[1, 2, 3], [2, 4, 6], [3, 6, 9]], float)
    col = hungarian(c)
    assert col.tolist() == [2, 1, 0] and assignment_cost(c, col) == 10.0
    assert hungarian([[7.5]]).tolist() == [0]


def test_hungarian_ties_resolve_in_scan_order():
    assert hungarian(np.zeros((3, 3))).tolist() == [0, 1, 2]
    assert hungarian(np.ones((2, 3))).tolist() == [0, 1]
    assert hungarian(np.ones((3, 2))).tolist() == [0, 1, -1]


def test_hungarian_brute_force_and_scipy():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(1, 6))
        m = int(rng.integers(n, 7))
        cost = rng.integers(0, 5, size=(n, m)).astype(float) if rng.uniform() < 0.5 else rng.normal(size=(n, m))
        col = hungarian(cost)
        assert len(set(col.tolist())) == n
        assert assignment_cost(cost, col) == brute_min(cost)
        r, c = linear_sum_assignment(cost)
        assert assignment_cost(cost, col) == pytest.approx(cost[r, c].sum(), abs=1e-12)


def test_hungarian_rejects_bad_input():
    with pytest.raises(ShapeError):
        hungarian(np.zeros(3))
    with pytest.raises(NumericError):
        hungarian([[0.0, np.nan]])
    assert hungarian(np.zeros((0, 3))).tolist() == []


def test_match_cost_examples():
    b = [0.5, 0.5, 0.2, 0.2]
    assert match_cost(b, b, 1.0, W) == pytest.approx(-1.0, abs=1e-15)
    assert match_cost(None, [0.1, 0.9, 0.3, 0.3], 0.7, W) == 0.0
    assert match_cost(b, [0.5, 0.5, 0.4, 0.4], 0.5, W) == pytest.approx(2.25, abs=1e-12)


def test_per_frame_examples():
    empty = per_frame_match(np.full((1, 3, 4), 0.5), np.full((1, 3), 0.5), [np.zeros((0, 4))], W)
    assert np.all(empty.gt_index == NO_OBJECT)
    gt = np.array([[0.3, 0.3, 0.2, 0.2]])
    pred = np.array([[[0.3, 0.3, 0.2, 0.2], [0.8, 0.8, 0.1, 0.1]]])
    asg = per_frame_match(pred, np.array([[0.9, 0.1]]), [gt], W)
    assert asg.gt_index.tolist() == [[0, NO_OBJECT]]


def test_per_frame_matches_exhaustive_injections():
    rng = np.random.default_rng(1)
    for _ in range(100):
        m = int(rng.integers(1, 6))
        k = int(rng.integers(0, m + 1))
        pred, scores, gt = random_frame(rng, m, k)
        asg = per_frame_match(pred[None], scores[None], [gt], W)
        asg.check([gt])
        assert np.sum(asg.gt_index == NO_OBJECT) == m - k
        best = min((sum(match_cost(gt[g], pred[s], scores[s], W) for g, s in enumerate(slots))
                    for slots in itertools.permutations(range(m), k)), default=0.0)
        got = slot_cost(pred[None], scores[None], [gt], asg.gt_frame, asg.gt_index)
        assert got == pytest.approx(best, abs=1e-12)


def test_padded_square_problem_has_the_same_optimum():
    rng = np.random.default_rng(2)
    for _ in range(50):
        m = int(rng.integers(1, 6))
        k = int(rng.integers(0, m + 1))
        pred, scores, gt = random_frame(rng, m, k)
        square = padded_cost_matrix(pred, scores, gt, W)
        assert square.shape == (m, m) and np.all(square[:, k:] == 0)
        asg = per_frame_match(pred[None], scores[None], [gt], W)
        got = slot_cost(pred[None], scores[None], [gt], asg.gt_frame, asg.gt_index)
        assert got == pytest.approx(brute_min(square), abs=1e-12)


def test_shifting_one_frame_costs_keeps_the_assignment():
    rng = np.random.default_rng(3)
    pred, scores, gt = random_frame(rng, 5, 3)
    cost = cost_matrix(pred, scores, gt, W).T
    assert hungarian(cost).tolist() == hungarian(cost + 4.2).tolist()


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_slot_permutation_permutes_the_assignment(seed):
    rng = np.random.default_rng(seed)
    pred, scores, gt = random_frame(rng, 5, int(rng.integers(0, 6)))
    perm = rng.permutation(5)
    a = per_frame_match(pred[None], scores[None], [gt], W).gt_index[0]
    b = per_frame_match(pred[None, perm], scores[None, perm], [gt], W).gt_index[0]
    assert b.tolist() == a[perm].tolist()


def test_capacity_and_shape_errors():
    with pytest.raises(CapacityError):
        per_frame_match(np.full((1, 2, 4), 0.5), np.full((1, 2), 0.5), [np.full((3, 4), 0.3)], W)
    with pytest.raises(CapacityError):
        whole_video_match(np.full((1, 2, 4), 0.5), np.full((1, 2), 0.5), [np.full((3, 4), 0.3)], W)
    with pytest.raises(ShapeError):
        per_frame_match(np.full((2, 2, 4), 0.5), np.full((2, 2), 0.5), [np.zeros((0, 4))], W)
    with pytest.raises(CapacityError):
        padded_cost_matrix(np.full((2, 4), 0.5), np.full(2, 0.5), np.full((3, 4), 0.3), W)


def test_whole_video_single_frame_equals_per_frame():
    rng = np.random.default_rng(4)
    for _ in range(30):
        pred, scores, gt = random_frame(rng, 4, int(rng.integers(0, 5)))
        a = per_frame_match(pred[None], scores[None], [gt], W)
        b = whole_video_match(pred[None], scores[None], [gt], W)
        assert a.gt_index.tolist() == b.gt_index.tolist()


def test_whole_video_crosses_frames():
    g0, g1 = np.array([[0.25, 0.25, 0.2, 0.2]]), np.array([[0.75, 0.75, 0.2, 0.2]])
    # frame 0's slot sits on frame 1's object and the other way round
    pred = np.array([[[0.75, 0.75, 0.2, 0.2], [0.5, 0.5, 0.9, 0.9]],
                     [[0.25, 0.25, 0.2, 0.2], [0.5, 0.5, 0.9, 0.9]]])
    scores = np.array([[0.9, 0.1], [0.9, 0.1]])
    whole = whole_video_match(pred, scores, [g0, g1], W)
    assert whole.gt_frame[0, 0] == 1 and whole.gt_frame[1, 0] == 0
    per = per_frame_match(pred, scores, [g0, g1], W)
    assert all(per.gt_frame[i, j] in (i, NO_OBJECT) for i in range(2) for j in range(2))


def test_whole_video_matches_exhaustive_injections():
    rng = np.random.default_rng(5)
    for _ in range(40):
        frames, m = 2, int(rng.integers(1, 4))
        pred = np.stack([random_frame(rng, m, 0)[0] for _ in range(frames)])
        scores = rng.uniform(size=(frames, m))
        gts = [random_frame(rng, 0, int(rng.integers(0, m + 1)))[2] for _ in range(frames)]
        asg = whole_video_match(pred, scores, gts, W)
        asg.check(gts)
        flat = [(i, k) for i, g in enumerate(gts) for k in range(len(g))]
        slots = [(i, j) for i in range(frames) for j in range(m)]
        best = min((sum(match_cost(gts[fi][k], pred[s], scores[s], W) for (fi, k), s in zip(flat, pick))
                    for pick in itertools.permutations(slots, len(flat))), default=0.0)
        assert slot_cost(pred, scores, gts, asg.gt_frame, asg.gt_index) == pytest.approx(best, abs=1e-12)
