"""Self-verification suites: assignment oracle, gIoU oracle, gradient battery, metric checks.

Every suite is seeded and returns pass/fail counts; ``run_all`` backs the
``verify`` command.
"""
from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import boxes as bx
from . import tensor as T
from .attention import AttentionWeights, multi_head_attention
from .gradcheck import grad_check, numeric_grad, relative_error
from .losses import LossWeights, giou_loss, set_loss
from .matching import assignment_cost, hungarian, match_cost, per_frame_match
from .metrics import EvalRecord, candidate_iou, mean_iou, recall_at, report
from .model import Model, ModelConfig
from .tensor import Tape, Tensor

GRAD_TOL = 1e-4
# step for checks through the whole model: the loss is O(10), so at h = 1e-6 a
# one-ulp wobble in it already costs ~1e-9 absolute, too much for gradients ~1e-5
MODEL_STEP = 1e-5


@dataclass
class SuiteResult:
    name: str
    passed: int = 0
    failed: int = 0
    seconds: float = 0.0
    failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.failed == 0 and self.passed > 0

    def check(self, cond: bool, what: str) -> None:
        if cond:
            self.passed += 1
        else:
            self.failed += 1
            if len(self.failures) < 10:
                self.failures.append(what)

    def line(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        return f"{status} {self.name}: {self.passed} passed, {self.failed} failed ({self.seconds:.1f}s)"


# ------------------------------------------------------------------ assignment


def brute_force_assignment(cost: np.ndarray) -> float:
    """Cheapest total over every injection of rows into columns (rows <= columns)."""
    n, m = cost.shape
    return min(assignment_cost(cost, np.array(p)) for p in itertools.permutations(range(m), n))


def brute_force_frame(pred_boxes, scores, gt_boxes, weights: LossWeights) -> float:
    """Exhaustive injection of ground truths into slots, costed one pair at a time."""
    m, k = len(scores), len(gt_boxes)
    best = np.inf
    for slots in itertools.permutations(range(m), k):
        total = sum(match_cost(gt_boxes[g], pred_boxes[s], scores[s], weights) for g, s in enumerate(slots))
        best = min(best, total)
    return best


def hungarian_suite(n_matrices: int = 500, n_frames: int = 200, seed: int = 0) -> SuiteResult:
    res = SuiteResult("assignment oracle")
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    for t in range(n_matrices):
        n = int(rng.integers(1, 7))
        m = int(rng.integers(n, 7))
        cost = rng.uniform(-1, 1, (n, m))
        col = hungarian(cost)
        valid = len(set(col.tolist())) == n and col.min() >= 0
        res.check(valid and assignment_cost(cost, col) == brute_force_assignment(cost),
                  f"matrix {t} ({n}x{m})")
    w = LossWeights()
    for t in range(n_frames):
        m = int(rng.integers(1, 6))
        k = int(rng.integers(0, m + 1))
        pb = np.concatenate([rng.uniform(0.1, 0.9, (m, 2)), rng.uniform(0.05, 0.6, (m, 2))], axis=1)
        sc = rng.uniform(0, 1, m)
        gt = np.concatenate([rng.uniform(0.1, 0.9, (k, 2)), rng.uniform(0.05, 0.6, (k, 2))], axis=1)
        asg = per_frame_match(pb[None], sc[None], [gt], w)
        slot_of = {int(asg.gt_index[0, j]): j for j in np.nonzero(asg.matched[0])[0]}
        complete = sorted(slot_of) == list(range(k))
        got = sum(match_cost(gt[g], pb[slot_of[g]], sc[slot_of[g]], w) for g in range(k)) if complete else np.inf
        res.check(complete and abs(got - brute_force_frame(pb, sc, gt, w)) <= 1e-12,
                  f"frame {t} (M={m}, K={k})")
    res.seconds = time.perf_counter() - t0
    return res


# ------------------------------------------------------------------ gIoU


def _clamped_corners(b):
    cx, cy, w, h = (float(x) for x in b)
    c = [cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2]
    return [min(max(x, 0.0), 1.0) for x in c]


def giou_oracle(b1, b2) -> float:
    """``1 - gIoU`` by summing covered cells of the grid cut by all box edges."""
    a, b = _clamped_corners(b1), _clamped_corners(b2)
    xs = sorted({a[0], a[2], b[0], b[2]})
    ys = sorted({a[1], a[3], b[1], b[3]})
    inter = union = 0.0
    for x0, x1 in zip(xs, xs[1:]):
        for y0, y1 in zip(ys, ys[1:]):
            mx, my = (x0 + x1) / 2, (y0 + y1) / 2
            in_a = a[0] <= mx <= a[2] and a[1] <= my <= a[3]
            in_b = b[0] <= mx <= b[2] and b[1] <= my <= b[3]
            cell = (x1 - x0) * (y1 - y0)
            inter += cell if in_a and in_b else 0.0
            union += cell if in_a or in_b else 0.0
    hull = (xs[-1] - xs[0]) * (ys[-1] - ys[0])
    iou = inter / max(union, bx.EPS)
    return 1.0 - (iou - (hull - union) / max(hull, bx.EPS))


def random_boxes(rng: np.random.Generator, n: int, inside: bool = False) -> np.ndarray:
    """cxcywh boxes; ``inside`` keeps them within the unit square so clamping never acts."""
    if inside:
        c0 = rng.uniform(0, 0.9, (n, 2))
        c1 = c0 + rng.uniform(0.02, 1.0, (n, 2)) * (1 - c0)
        return bx.corners_to_cxcywh(np.concatenate([c0, c1], axis=1))
    return np.concatenate([rng.uniform(-0.1, 1.1, (n, 2)), rng.uniform(0.01, 1.0, (n, 2))], axis=1)


def staggered_boxes(rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Pairs that overlap partially on both axes, so no coordinate has a flat gIoU."""
    edges = np.sort(rng.uniform(0.05, 0.95, (n, 2, 4)), axis=-1)   # a0 < b0 < a1 < b1 per axis
    a = np.stack([edges[:, 0, 0], edges[:, 1, 0], edges[:, 0, 2], edges[:, 1, 2]], axis=1)
    b = np.stack([edges[:, 0, 1], edges[:, 1, 1], edges[:, 0, 3], edges[:, 1, 3]], axis=1)
    return bx.corners_to_cxcywh(a), bx.corners_to_cxcywh(b)


def _tensor_giou(a, b) -> np.ndarray:
    return giou_loss(Tensor(a), Tensor(b)).data


def giou_suite(n_pairs: int = 10000, seed: int = 0,
               giou_fn: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None) -> SuiteResult:
    """Oracle agreement (1e-9) plus range, identity, symmetry and the IoU bound."""
    fn = giou_fn or _tensor_giou
    res = SuiteResult("gIoU oracle")
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    a, b = random_boxes(rng, n_pairs), random_boxes(rng, n_pairs)
    got = np.asarray(fn(a, b))
    want = np.array([giou_oracle(x, y) for x, y in zip(a, b)])
    err = np.abs(got - want)
    res.check(bool(np.all(err <= 1e-9)), f"oracle mismatch, max error {err.max():.3g}")
    res.check(bool(np.allclose(np.asarray(bx.giou_loss(a, b)), want, rtol=0, atol=1e-9)),
              "numpy giou_loss disagrees with the oracle")
    a, b = random_boxes(rng, n_pairs, inside=True), random_boxes(rng, n_pairs, inside=True)
    g = np.asarray(fn(a, b))
    res.check(bool(np.all((g >= 0) & (g < 2))), "loss outside [0, 2)")
    res.check(bool(np.allclose(g, np.asarray(fn(b, a)), rtol=0, atol=1e-12)), "not symmetric")
    res.check(bool(np.all(np.abs(np.asarray(fn(a, a))) <= 1e-12)), "nonzero loss for identical boxes")
    res.check(bool(np.all(g > 0)), "zero loss for distinct boxes")
    res.check(bool(np.all(g >= 1 - bx.iou(a, b) - 1e-12)), "loss below 1 - IoU")
    res.seconds = time.perf_counter() - t0
    return res


# ------------------------------------------------------------------ gradients


def _away_from(x: np.ndarray, kinks=(0.0,), margin: float = 1e-3) -> np.ndarray:
    for k in kinks:
        near = np.abs(x - k) < margin
        x = np.where(near, k + np.where(x >= k, 1, -1) * margin * 2, x)
    return x


def kernel_cases(rng: np.random.Generator) -> dict[str, tuple[Callable[[Tensor], Tensor], Tensor]]:
    """One scalar function per kernel op, each of a single tensor argument.

    Outputs are reduced against a fixed random projection so no gradient
    component is trivially one. Inputs to kinked ops stay clear of the kinks.
    """
    x = rng.normal(size=(3, 4))
    other = rng.normal(size=(3, 4))
    mat = rng.normal(size=(4, 5))
    pos = rng.uniform(0.5, 2.0, size=(3, 4))
    gain, bias = rng.normal(size=4), rng.normal(size=4)
    kv = rng.normal(size=(5, 4))
    heads = AttentionWeights.init(4, 2, rng)
    box0, box1 = staggered_boxes(rng, 3)
    proj_seed = int(rng.integers(2**31))
    xk = _away_from(x)
    xm = np.where(np.abs(x - other) < 1e-3, x + 3e-3, x)
    xc = _away_from(x, (-0.5, 0.5))

    def wsum(t: Tensor) -> Tensor:
        proj = np.random.default_rng([proj_seed, *t.shape]).normal(size=t.shape)
        return T.tsum(t * proj)

    return {
        "add": (lambda t: wsum(t + other), Tensor(x)),
        "sub": (lambda t: wsum(other - t), Tensor(x)),
        "mul": (lambda t: wsum(t * other), Tensor(x)),
        "scale": (lambda t: wsum(T.scale(t, -1.7)), Tensor(x)),
        "div": (lambda t: wsum(other / t), Tensor(pos)),
        "matmul": (lambda t: wsum(t @ mat), Tensor(x)),
        "exp": (lambda t: wsum(T.exp(t)), Tensor(x)),
        "log": (lambda t: wsum(T.log(t)), Tensor(pos)),
        "abs": (lambda t: wsum(T.tabs(t)), Tensor(xk)),
        "sigmoid": (lambda t: wsum(T.sigmoid(t)), Tensor(x)),
        "relu": (lambda t: wsum(T.relu(t)), Tensor(xk)),
        "maximum": (lambda t: wsum(T.maximum(t, other)), Tensor(xm)),
        "minimum": (lambda t: wsum(T.minimum(t, other)), Tensor(xm)),
        "clip": (lambda t: wsum(T.clip(t, -0.5, 0.5)), Tensor(xc)),
        "sum_axis": (lambda t: wsum(T.tsum(t, axis=0)), Tensor(x)),
        "mean_axis": (lambda t: wsum(T.mean(t, axis=1, keepdims=True)), Tensor(x)),
        "softmax": (lambda t: wsum(T.softmax(t, axis=-1)), Tensor(x)),
        "layer_norm": (lambda t: wsum(T.layer_norm(t, Tensor(gain), Tensor(bias))), Tensor(x)),
        "reshape": (lambda t: wsum(T.reshape(t, (4, 3))), Tensor(x)),
        "transpose": (lambda t: wsum(T.transpose(t)), Tensor(x)),
        "swapaxes": (lambda t: wsum(T.swapaxes(T.reshape(t, (3, 2, 2)), 0, 2)), Tensor(x)),
        "getitem": (lambda t: wsum(t[1:, ::2]), Tensor(x)),
        "fancy_index": (lambda t: wsum(t[[0, 2, 0]]), Tensor(x)),
        "concat": (lambda t: wsum(T.concat([t, t * t], axis=1)), Tensor(x)),
        "stack": (lambda t: wsum(T.stack([t, T.exp(t)], axis=0)), Tensor(x)),
        "attention_query": (lambda t: wsum(multi_head_attention(t, kv, kv, None, None, heads)), Tensor(x)),
        "attention_memory": (lambda t: wsum(multi_head_attention(kv[:3], t, t, None, None, heads)), Tensor(x)),
        "giou": (lambda t: wsum(giou_loss(t, box1)), Tensor(box0)),
        # a fresh generator per call keeps the dropout mask fixed across evaluations
        "dropout": (lambda t: wsum(T.dropout(t, 0.3, np.random.default_rng(proj_seed))), Tensor(x)),
    }


MICRO = ModelConfig(frames=2, slots=3, width=8, heads=2, layers=1, patch=8, image_size=16)


def micro_set_loss(seed: int, cfg: ModelConfig = MICRO):
    """Model, inputs, fixed assignment and a closure ``loss(model)`` for one seed."""
    rng = np.random.default_rng(seed)
    model = Model(cfg, seed=seed)
    frames = rng.uniform(0, 1, (cfg.frames, cfg.image_size, cfg.image_size))
    sketch = rng.uniform(0, 1, (cfg.image_size, cfg.image_size))
    gts = [random_boxes(rng, int(rng.integers(0, cfg.slots + 1)), inside=True) for _ in range(cfg.frames)]
    if not any(len(g) for g in gts):
        gts[0] = random_boxes(rng, 1, inside=True)
    w = LossWeights()
    pred = model.forward(frames, sketch)
    asg = per_frame_match(pred.boxes.data, pred.scores.data, gts, w)

    def loss() -> Tensor:
        p = model.forward(frames, sketch)
        return set_loss(p.boxes, p.scores, gts, asg, w)

    return model, loss, (pred, gts, asg, w)


def grad_suite(seeds: int = 20, per_tensor: int = 3, tol: float = GRAD_TOL) -> SuiteResult:
    """Every kernel op, set_loss on raw predictions, and every micro-model parameter."""
    res = SuiteResult("gradient battery")
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(seeds):
        rng = np.random.default_rng(1000 + seed)
        for name, (f, x) in kernel_cases(rng).items():
            err = grad_check(f, x)
            worst = max(worst, err)
            res.check(err <= tol, f"{name} seed {seed}: {err:.2e}")
        model, loss, (pred, gts, asg, w) = micro_set_loss(seed)
        boxes0, scores0 = pred.boxes.data.copy(), pred.scores.data.copy()
        err = grad_check(lambda b: set_loss(b, scores0, gts, asg, w), Tensor(boxes0), MODEL_STEP)
        res.check(err <= tol, f"set_loss/boxes seed {seed}: {err:.2e}")
        err = grad_check(lambda s: set_loss(boxes0, s, gts, asg, w), Tensor(scores0), MODEL_STEP)
        res.check(err <= tol, f"set_loss/scores seed {seed}: {err:.2e}")
        params = model.parameters()
        model.zero_grad()
        with Tape() as tape:
            tape.backward(loss())
        for pname, p in params.items():
            idx = rng.choice(p.data.size, size=min(per_tensor, p.data.size), replace=False)
            err = param_grad_error(loss, p, idx)
            worst = max(worst, err)
            res.check(err <= tol, f"model {pname} seed {seed}: {err:.2e}")
    res.seconds = time.perf_counter() - t0
    if res.failed:
        res.failures.append(f"worst relative error {worst:.2e}")
    return res


def param_grad_error(loss: Callable[[], Tensor], p: Tensor, idx) -> float:
    """Relative error of ``p.grad`` (already accumulated) against central differences."""
    saved = p.data

    def f(t: Tensor) -> Tensor:
        p.data = t.data
        try:
            return loss()
        finally:
            p.data = saved

    n = numeric_grad(f, Tensor(saved.copy()), MODEL_STEP, indices=idx).reshape(-1)[idx]
    a = (p.grad if p.grad is not None else np.zeros_like(saved)).reshape(-1)[idx]
    return relative_error(a, n)


# ------------------------------------------------------------------ metrics


def hand_records() -> tuple[list[EvalRecord], dict]:
    """Four records with expected metrics tallied by hand."""
    recs = [
        EvalRecord("a", [0.80, 0.10, 0.0, 0.0, 0.0]),   # r1@.5, r1@.7
        EvalRecord("b", [0.60, 0.75, 0.0, 0.0, 0.0]),   # r1@.5, r5@.7
        EvalRecord("c", [0.30, 0.20, 0.10, 0.55, 0.0]),  # r5@.5 only
        EvalRecord("d", [0.50, 0.70, 0.0, 0.0, 0.9]),   # threshold ties miss; r5 hits via rank 5
    ]
    want = {"r1_50": 0.5, "r1_70": 0.25, "r5_50": 1.0, "r5_70": 0.75,
            "miou": (0.80 + 0.60 + 0.30 + 0.50) / 4, "num_samples": 4}
    return recs, want


def metric_suite(n_sets: int = 1000, seed: int = 0) -> SuiteResult:
    res = SuiteResult("metric oracle")
    t0 = time.perf_counter()
    recs, want = hand_records()
    got = report(recs)
    for key, value in want.items():
        res.check(abs(got[key] - value) <= 1e-15, f"hand record {key}: {got[key]} vs {value}")
    # candidate ranking: slot 2 has the top score in both frames
    boxes = np.tile(np.array([0.5, 0.5, 0.2, 0.2]), (2, 3, 1))
    boxes[:, 2] = [0.25, 0.25, 0.5, 0.5]
    boxes[:, :2] = [0.85, 0.85, 0.1, 0.1]
    scores = np.array([[0.1, 0.2, 0.9], [0.3, 0.3, 0.8]])
    gts = [np.array([[0.25, 0.25, 0.5, 0.5]]), np.zeros((0, 4))]
    ious = candidate_iou(boxes, scores, gts)
    res.check(abs(ious[0] - 1.0) <= 1e-12 and abs(ious[1]) <= 1e-12, f"candidate ranking {ious}")
    rng = np.random.default_rng(seed)
    for t in range(n_sets):
        n = int(rng.integers(1, 20))
        recs = [EvalRecord(str(i), rng.uniform(0, 1, 10) ** rng.uniform(0.2, 3)) for i in range(n)]
        ok = True
        for mu in (0.5, 0.7):
            ok &= recall_at(recs, 5, mu) >= recall_at(recs, 1, mu)
        for k in (1, 5):
            ok &= recall_at(recs, k, 0.5) >= recall_at(recs, k, 0.7)
        ok &= 0.0 <= mean_iou(recs) <= 1.0
        perm = [recs[i] for i in rng.permutation(n)]
        a, b = report(perm), report(recs)
        ok &= all(a[k] == b[k] for k in a if k != "miou") and abs(a["miou"] - b["miou"]) <= 1e-12
        res.check(bool(ok), f"record set {t}")
    res.seconds = time.perf_counter() - t0
    return res


SUITES: dict[str, Callable[[], SuiteResult]] = {
    "assignment": hungarian_suite,
    "giou": giou_suite,
    "gradients": grad_suite,
    "metrics": metric_suite,
}


def run_all(emit: Callable[[str], None] = print) -> list[SuiteResult]:
    results = []
    for fn in SUITES.values():
        r = fn()
        emit(r.line())
        for f in r.failures:
            emit(f"    {f}")
        results.append(r)
    return results
