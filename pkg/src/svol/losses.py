"""Differentiable set-prediction losses.

The per-sample loss sums, over every slot of every frame, an objectness term
(``-w_obj * log o`` for matched slots, ``-w_obj * s * log(1 - o)`` for slots
left on a no-object pad, ``s = 0.1``) plus the box loss of matched slots, and
divides by the number of real boxes in the sample (at least 1).
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from . import tensor as T
from .boxes import EPS
from .errors import ConfigError, ShapeError
from .tensor import Tensor

if TYPE_CHECKING:
    from .matching import MatchAssignment

SCORE_CLAMP = 1e-7


@dataclass
class LossWeights:
    l1: float = 5.0
    iou: float = 1.0
    obj: float = 2.0
    no_object_scale: float = 0.1

    def validate(self) -> "LossWeights":
        if min(self.l1, self.iou, self.obj) < 0:
            raise ConfigError("loss weights must be nonnegative")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


def to_corners(b: Tensor) -> Tensor:
    """cxcywh -> clamped corners, keeping the graph."""
    b = T.as_tensor(b)
    cxcy = b[..., 0:2]
    half = T.scale(b[..., 2:4], 0.5)
    return T.clip(T.concat([cxcy - half, cxcy + half], axis=-1), 0.0, 1.0)


def giou_loss(b, b_hat) -> Tensor:
    """``1 - gIoU`` of two cxcywh boxes (any leading shape), in ``[0, 2)``."""
    a = to_corners(b)
    c = to_corners(b_hat)
    ax0, ay0, ax1, ay1 = (a[..., i] for i in range(4))
    cx0, cy0, cx1, cy1 = (c[..., i] for i in range(4))
    area_a = (ax1 - ax0) * (ay1 - ay0)
    area_c = (cx1 - cx0) * (cy1 - cy0)
    iw = T.relu(T.minimum(ax1, cx1) - T.maximum(ax0, cx0))
    ih = T.relu(T.minimum(ay1, cy1) - T.maximum(ay0, cy0))
    inter = iw * ih
    union = area_a + area_c - inter
    hull = (T.maximum(ax1, cx1) - T.minimum(ax0, cx0)) * (T.maximum(ay1, cy1) - T.minimum(ay0, cy0))
    iou = inter / T.maximum(union, EPS)
    return 1.0 - (iou - (hull - union) / T.maximum(hull, EPS))


def l1_loss(b, b_hat) -> Tensor:
    return T.tsum(T.tabs(T.as_tensor(b) - T.as_tensor(b_hat)), axis=-1)


def box_loss(b, b_hat, weights: LossWeights) -> Tensor:
    return T.scale(l1_loss(b, b_hat), weights.l1) + T.scale(giou_loss(b, b_hat), weights.iou)


def objectness_loss(score, matched, weights: LossWeights) -> Tensor:
    """Elementwise objectness term; ``matched`` is a boolean array/flag."""
    o = T.clip(T.as_tensor(score), SCORE_CLAMP, 1.0 - SCORE_CLAMP)
    m = np.asarray(matched, dtype=np.float64)
    pos = T.log(o) * m
    neg = T.log(1.0 - o) * ((1.0 - m) * weights.no_object_scale)
    return T.scale(pos + neg, -weights.obj)


def set_loss(boxes: Tensor, scores: Tensor, gts: Sequence[np.ndarray] | Sequence[Sequence[np.ndarray]],
             assignment: "MatchAssignment | Sequence[MatchAssignment]", weights: LossWeights) -> Tensor:
    """Matched set loss for one sample (``boxes`` ``(L, M, 4)``) or a batch.

    For a batch (``boxes`` ``(B, L, M, 4)``) ``gts`` and ``assignment`` are
    per-sample sequences and the result is the mean of per-sample losses.
    """
    boxes, scores = T.as_tensor(boxes), T.as_tensor(scores)
    batched = boxes.ndim == 4
    if not batched:
        gts, assignment = [gts], [assignment]
    if scores.shape != boxes.shape[:-1]:
        raise ShapeError(f"scores {scores.shape} do not match boxes {boxes.shape}")
    lead = boxes.shape[:-1]
    n = lead[0] if batched else 1
    if len(assignment) != n or len(gts) != n:
        raise ShapeError("one assignment and one ground-truth list per sample required")
    targets = np.empty(lead + (4,)) if batched else np.empty((1,) + lead + (4,))
    mask = np.zeros(targets.shape[:-1])
    norm = np.empty(n)
    for b, (asg, g) in enumerate(zip(assignment, gts)):
        if asg.gt_index.shape != targets.shape[1:3]:
            raise ShapeError(f"assignment shape {asg.gt_index.shape} vs predictions {targets.shape[1:3]}")
        targets[b] = asg.target_boxes(g)
        mask[b] = asg.matched
        norm[b] = max(sum(len(x) for x in g), 1)
    if not batched:
        targets, mask = targets[0], mask[0]
    obj = objectness_loss(scores, mask, weights)
    per_slot = obj + box_loss(targets, boxes, weights) * mask
    if batched:
        per_sample = T.tsum(per_slot, axis=(1, 2)) / norm
        return T.mean(per_sample)
    return T.tsum(per_slot) / norm[0]
