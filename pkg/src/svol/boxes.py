"""Plain-numpy box geometry (no gradients): conversions, IoU, gIoU, l1.

Boxes are ``(cx, cy, w, h)`` unless a function says ``corners`` /
``(x0, y0, x1, y1)``. All functions broadcast over leading axes.
"""
from __future__ import annotations

import numpy as np

EPS = 1e-9


def cxcywh_to_corners(b: np.ndarray, clamp: bool = True) -> np.ndarray:
    b = np.asarray(b, dtype=np.float64)
    cx, cy, w, h = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    out = np.stack([cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h], axis=-1)
    return np.clip(out, 0.0, 1.0) if clamp else out


def corners_to_cxcywh(c: np.ndarray) -> np.ndarray:
    c = np.asarray(c, dtype=np.float64)
    x0, y0, x1, y1 = c[..., 0], c[..., 1], c[..., 2], c[..., 3]
    return np.stack([(x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0], axis=-1)


def _areas(a: np.ndarray, b: np.ndarray):
    """Intersection, union and hull areas of corner boxes ``a`` and ``b``."""
    area_a = (a[..., 2] - a[..., 0]) * (a[..., 3] - a[..., 1])
    area_b = (b[..., 2] - b[..., 0]) * (b[..., 3] - b[..., 1])
    iw = np.clip(np.minimum(a[..., 2], b[..., 2]) - np.maximum(a[..., 0], b[..., 0]), 0, None)
    ih = np.clip(np.minimum(a[..., 3], b[..., 3]) - np.maximum(a[..., 1], b[..., 1]), 0, None)
    inter = iw * ih
    union = area_a + area_b - inter
    hull = ((np.maximum(a[..., 2], b[..., 2]) - np.minimum(a[..., 0], b[..., 0]))
            * (np.maximum(a[..., 3], b[..., 3]) - np.minimum(a[..., 1], b[..., 1])))
    return inter, union, hull


def iou_corners(a, b) -> np.ndarray:
    inter, union, _ = _areas(np.asarray(a, float), np.asarray(b, float))
    return inter / np.maximum(union, EPS)


def iou(a, b) -> np.ndarray:
    return iou_corners(cxcywh_to_corners(a), cxcywh_to_corners(b))


def giou_loss_corners(a, b) -> np.ndarray:
    inter, union, hull = _areas(np.asarray(a, float), np.asarray(b, float))
    iou_ = inter / np.maximum(union, EPS)
    return 1.0 - (iou_ - (hull - union) / np.maximum(hull, EPS))


def giou_loss(a, b) -> np.ndarray:
    return giou_loss_corners(cxcywh_to_corners(a), cxcywh_to_corners(b))


def l1(a, b) -> np.ndarray:
    return np.abs(np.asarray(a, float) - np.asarray(b, float)).sum(axis=-1)


def box_loss(a, b, l1_weight: float, iou_weight: float) -> np.ndarray:
    return l1_weight * l1(a, b) + iou_weight * giou_loss(a, b)
