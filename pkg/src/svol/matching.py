"""Linear assignment and set matching between prediction slots and ground truth.

``hungarian`` is the shortest-augmenting-path form of the Hungarian method
with row/column potentials: rows are inserted one at a time in index order,
and ties between equally cheap columns go to the lowest column index, so the
result is deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import boxes as bx
from .errors import CapacityError, NumericError, ShapeError
from .losses import LossWeights

NO_OBJECT = -1


def hungarian(cost) -> np.ndarray:
    """Minimum-cost assignment for an ``n x m`` matrix.

    Returns ``col`` with ``col[i]`` the column given to row ``i``. When
    ``n > m`` only ``m`` rows can be served; the rest get ``-1``.
    """
    a = np.asarray(cost, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"cost matrix must be 2-d, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise NumericError("cost matrix contains NaN or Inf")
    n, m = a.shape
    if n == 0:
        return np.zeros(0, dtype=int)
    if m == 0:
        return np.full(n, -1)
    if n > m:
        row_of_col = hungarian(a.T)
        col = np.full(n, -1)
        col[row_of_col] = np.arange(m)
        return col

    inf = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=int)    # p[j]: 1-based row holding column j, 0 = free
    way = np.zeros(m + 1, dtype=int)
    # 1-based padded copy so column 0 is the virtual source
    c = np.zeros((n + 1, m + 1))
    c[1:, 1:] = a
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used
            free[0] = False
            cur = c[i0] - u[i0] - v
            better = free & (cur < minv)
            minv[better] = cur[better]
            way[better] = j0
            cand = np.where(free, minv, inf)
            j1 = int(np.argmin(cand))
            delta = cand[j1]
            u[p[used]] += delta
            v[used] -= delta
            minv[free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col = np.full(n, -1)
    for j in range(1, m + 1):
        if p[j]:
            col[p[j] - 1] = j - 1
    return col


def assignment_cost(cost, col) -> float:
    cost = np.asarray(cost, dtype=np.float64)
    rows = np.nonzero(np.asarray(col) >= 0)[0]
    return float(cost[rows, np.asarray(col)[rows]].sum())


# ------------------------------------------------------------ costs

def match_cost(gt_box, pred_box, score, weights: LossWeights) -> float:
    """Pairing cost of one real ground-truth box with one prediction slot.

    ``gt_box=None`` stands for a no-object pad, which costs nothing.
    """
    if gt_box is None:
        return 0.0
    return float(-score + bx.box_loss(gt_box, pred_box, weights.l1, weights.iou))


def cost_matrix(pred_boxes, scores, gt_boxes, weights: LossWeights) -> np.ndarray:
    """``(..., M, K)`` costs of slot ``j`` taking real ground truth ``k``."""
    pred_boxes = np.asarray(pred_boxes, dtype=np.float64)
    gt_boxes = np.asarray(gt_boxes, dtype=np.float64)
    pb = pred_boxes[..., :, None, :]
    gb = gt_boxes[..., None, :, :]
    return -np.asarray(scores)[..., :, None] + bx.box_loss(gb, pb, weights.l1, weights.iou)


def padded_cost_matrix(pred_boxes, scores, gt_boxes, weights: LossWeights) -> np.ndarray:
    """The square ``M x M`` frame problem: real ground truths first, then zero pads."""
    m = len(scores)
    k = len(gt_boxes)
    if k > m:
        raise CapacityError(f"{k} ground-truth boxes exceed {m} prediction slots")
    out = np.zeros((m, m))
    if k:
        out[:, :k] = cost_matrix(pred_boxes, scores, gt_boxes, weights)
    return out


# ------------------------------------------------------------ assignments

@dataclass
class MatchAssignment:
    """Slot-to-ground-truth map for one sample.

    ``gt_frame[i, j]`` / ``gt_index[i, j]`` locate the ground-truth box given
    to slot ``j`` of frame ``i``; both are ``NO_OBJECT`` for unmatched slots.
    Per-frame matching always has ``gt_frame[i, j] == i`` when matched.
    """

    gt_frame: np.ndarray
    gt_index: np.ndarray

    @property
    def matched(self) -> np.ndarray:
        return self.gt_index >= 0

    def frame(self, i: int) -> np.ndarray:
        return self.gt_index[i].copy()

    def target_boxes(self, gts: Sequence[np.ndarray]) -> np.ndarray:
        """``(L, M, 4)`` matched ground-truth boxes; unmatched slots hold a dummy box."""
        out = np.tile(np.array([0.5, 0.5, 1.0, 1.0]), self.gt_index.shape + (1,))
        for i, j in zip(*np.nonzero(self.matched)):
            out[i, j] = gts[self.gt_frame[i, j]][self.gt_index[i, j]]
        return out

    def check(self, gts: Sequence[np.ndarray]) -> None:
        """Raise if some ground truth is unmatched or matched twice."""
        seen = set()
        for i, j in zip(*np.nonzero(self.matched)):
            key = (int(self.gt_frame[i, j]), int(self.gt_index[i, j]))
            if key in seen:
                raise AssertionError(f"ground truth {key} matched twice")
            seen.add(key)
        total = sum(len(g) for g in gts)
        if len(seen) != total:
            raise AssertionError(f"{total - len(seen)} ground truths left unmatched")


def _as_gt_list(gts) -> list[np.ndarray]:
    return [np.asarray(g, dtype=np.float64).reshape(-1, 4) for g in gts]


def per_frame_match(pred_boxes, scores, gts, weights: LossWeights) -> MatchAssignment:
    """Independent optimal matching of each frame's ``M`` slots to its ground truths.

    Each frame's square problem pads the ``K_i`` real columns with ``M - K_i``
    zero-cost no-object columns. Pads cost the same whichever slot takes them,
    so the solver runs on the real columns and leaves remaining slots unmatched.
    """
    pred_boxes = np.asarray(pred_boxes, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    L, M = scores.shape
    gts = _as_gt_list(gts)
    if len(gts) != L:
        raise ShapeError(f"{len(gts)} ground-truth frames for {L} predicted frames")
    gt_frame = np.full((L, M), NO_OBJECT)
    gt_index = np.full((L, M), NO_OBJECT)
    counts = [len(g) for g in gts]
    if max(counts, default=0) > M:
        raise CapacityError(f"a frame holds {max(counts)} boxes but only {M} slots exist")
    kmax = max(counts, default=0)
    if kmax == 0:
        return MatchAssignment(gt_frame, gt_index)
    padded = np.zeros((L, kmax, 4))
    padded[..., 2:] = 1.0
    for i, g in enumerate(gts):
        padded[i, :len(g)] = g
    costs = cost_matrix(pred_boxes, scores, padded, weights)  # (L, M, kmax)
    for i, k in enumerate(counts):
        if not k:
            continue
        slot_of_gt = hungarian(costs[i, :, :k].T)
        gt_frame[i, slot_of_gt] = i
        gt_index[i, slot_of_gt] = np.arange(k)
    return MatchAssignment(gt_frame, gt_index)


def whole_video_match(pred_boxes, scores, gts, weights: LossWeights) -> MatchAssignment:
    """One assignment over all ``N = L*M`` slots and every ground truth of the clip.

    Frame identity plays no part in who may take what; each ground truth keeps
    its own frame so the loss compares against the right box.
    """
    pred_boxes = np.asarray(pred_boxes, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    L, M = scores.shape
    gts = _as_gt_list(gts)
    if len(gts) != L:
        raise ShapeError(f"{len(gts)} ground-truth frames for {L} predicted frames")
    owners = [(i, k) for i, g in enumerate(gts) for k in range(len(g))]
    gt_frame = np.full((L, M), NO_OBJECT)
    gt_index = np.full((L, M), NO_OBJECT)
    if not owners:
        return MatchAssignment(gt_frame, gt_index)
    if len(owners) > L * M:
        raise CapacityError(f"{len(owners)} ground-truth boxes exceed {L * M} slots")
    flat_gt = np.concatenate([g for g in gts if len(g)], axis=0)
    costs = cost_matrix(pred_boxes.reshape(L * M, 4), scores.reshape(L * M), flat_gt, weights)
    slot_of_gt = hungarian(costs.T)
    for (fi, k), slot in zip(owners, slot_of_gt):
        gt_frame[slot // M, slot % M] = fi
        gt_index[slot // M, slot % M] = k
    return MatchAssignment(gt_frame, gt_index)


MATCHERS = {"per-frame": per_frame_match, "whole-video": whole_video_match}
