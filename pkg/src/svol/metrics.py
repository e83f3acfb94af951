"""Recall@k at IoU thresholds and mean IoU over video-level candidates.

Candidate ``r`` of a sample is the set of rank-``r`` boxes (by objectness,
ties to the lower slot) across frames; its IoU is the mean, over frames that
contain at least one ground-truth box, of the best IoU between the rank-``r``
box and that frame's boxes.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import boxes as bx
from .errors import ShapeError, UndefinedSampleError

KS = (1, 5)
THRESHOLDS = (0.5, 0.7)


def candidate_iou(pred_boxes, scores, gts: Sequence[np.ndarray]) -> np.ndarray:
    """Rank-ordered video-level IoU of each of the ``M`` candidates."""
    pred_boxes = np.asarray(pred_boxes, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    L, M = scores.shape
    if len(gts) != L:
        raise ShapeError(f"{len(gts)} ground-truth frames for {L} predicted frames")
    per_frame = []
    for i in range(L):
        g = np.asarray(gts[i], dtype=np.float64).reshape(-1, 4)
        if not len(g):
            continue
        order = np.argsort(-scores[i], kind="stable")
        ranked = pred_boxes[i, order]
        ious = bx.iou(ranked[:, None, :], g[None, :, :])  # (M, K)
        per_frame.append(ious.max(axis=1))
    if not per_frame:
        raise UndefinedSampleError("sample has no frame with a ground-truth box")
    return np.mean(per_frame, axis=0)


@dataclass
class EvalRecord:
    sample_id: str
    ious: np.ndarray  # rank-ordered candidate IoUs
    correct: dict[str, bool] = field(default_factory=dict)

    def __post_init__(self):
        self.ious = np.asarray(self.ious, dtype=np.float64)
        if not self.correct:
            self.correct = {f"r{k}_{int(mu * 100)}": hit(self.ious, k, mu)
                            for k in KS for mu in THRESHOLDS}


def hit(ious: np.ndarray, k: int, mu: float) -> bool:
    return bool(np.max(ious[:k]) > mu)


def _nonempty(records) -> list[EvalRecord]:
    records = list(records)
    if not records:
        raise UndefinedSampleError("no evaluation records")
    return records


def recall_at(records: Iterable[EvalRecord], k: int, mu: float) -> float:
    records = _nonempty(records)
    return sum(hit(r.ious, k, mu) for r in records) / len(records)


def mean_iou(records: Iterable[EvalRecord]) -> float:
    records = _nonempty(records)
    return float(np.mean([r.ious[0] for r in records]))


def report(records: Iterable[EvalRecord]) -> dict:
    records = _nonempty(records)
    out = {f"r{k}_{int(mu * 100)}": recall_at(records, k, mu) for k in KS for mu in THRESHOLDS}
    out = {key: out[key] for key in ("r1_50", "r1_70", "r5_50", "r5_70")}
    out["miou"] = mean_iou(records)
    out["num_samples"] = len(records)
    return out


def write_report(path: str | Path, rep: dict) -> None:
    Path(path).write_text(json.dumps(rep, indent=2, sort_keys=True) + "\n")


def write_sample_csv(path: str | Path, records: Iterable[EvalRecord]) -> None:
    cols = ["r1_50", "r1_70", "r5_50", "r5_70"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "c1_iou", *cols])
        for r in records:
            w.writerow([r.sample_id, f"{r.ious[0]:.6f}", *(int(r.correct[c]) for c in cols)])
