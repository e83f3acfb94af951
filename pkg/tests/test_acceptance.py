"""Acceptance criteria, one test each, each at its stated tolerance and budget.

Every test appends a PASS/FAIL line to the "acceptance criteria" section of
the pytest terminal summary. The training criteria (6 to 8) are marked slow.
"""
import json
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from svol.cli import main
from svol.config import load_config
from svol.losses import LossWeights, set_loss
from svol.matching import MatchAssignment, per_frame_match
from svol.model import Model, ModelConfig
from svol.attention import AttentionWeights, multi_head_attention
from svol.synth.dataset import save_dataset
from svol.tensor import Tensor
from svol.train import (eval_report, evaluate, model_predictor, open_dataset, resolve_protocol, train)
from svol.verify import giou_suite, grad_suite, hungarian_suite, metric_suite

CONFIGS = Path(__file__).parents[1] / "configs"


def record(number: int, title: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'} criterion {number} ({title}): {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def toy_data():
    """The default 512/128-clip synthetic set with both transfer styles."""
    cfg = load_config(CONFIGS / "transfer_dataset.json")
    return open_dataset(cfg)


def test_1_assignment_oracle():
    res = hungarian_suite(n_matrices=500, n_frames=200)
    record(1, "assignment oracle", res.ok and res.seconds < 30,
           f"{res.passed} checks passed, {res.failed} failed in {res.seconds:.1f}s (budget 30s)")


def test_2_giou_oracle():
    res = giou_suite(n_pairs=10_000)
    record(2, "gIoU oracle", res.ok, f"{res.passed} property groups passed, {res.failed} failed; {res.failures}")


def test_3_gradient_battery():
    res = grad_suite(seeds=20)
    record(3, "gradient battery", res.ok and res.seconds < 120,
           f"{res.passed} checks passed, {res.failed} failed in {res.seconds:.1f}s (budget 120s); {res.failures}")


def test_4_structural_invariants():
    rng = np.random.default_rng(0)
    worst_attn = 0.0
    for seed in range(20):
        w = AttentionWeights.init(8, 2, np.random.default_rng(seed))
        q, kv = rng.normal(size=(5, 8)), rng.normal(size=(7, 8))
        base = multi_head_attention(q, kv, kv, None, None, w).data
        pq, pk = rng.permutation(5), rng.permutation(7)
        worst_attn = max(worst_attn,
                         np.abs(multi_head_attention(q[pq], kv, kv, None, None, w).data - base[pq]).max(),
                         np.abs(multi_head_attention(q, kv[pk], kv[pk], None, None, w).data - base).max())
    wts = LossWeights()
    worst_loss = 0.0
    for seed in range(200):
        r = np.random.default_rng(seed)
        boxes = np.concatenate([r.uniform(0.2, 0.8, (3, 5, 2)), r.uniform(0.05, 0.4, (3, 5, 2))], -1)
        scores = r.uniform(0.05, 0.95, (3, 5))
        gts = [np.concatenate([r.uniform(0.2, 0.8, (k, 2)), r.uniform(0.05, 0.4, (k, 2))], -1)
               for k in r.integers(0, 6, 3)]
        asg = per_frame_match(boxes, scores, gts, wts)
        base = set_loss(Tensor(boxes), Tensor(scores), gts, asg, wts).item()
        i, perm = int(r.integers(3)), r.permutation(5)
        b2, s2, f2, k2 = boxes.copy(), scores.copy(), asg.gt_frame.copy(), asg.gt_index.copy()
        b2[i], s2[i], f2[i], k2[i] = boxes[i, perm], scores[i, perm], asg.gt_frame[i, perm], asg.gt_index[i, perm]
        moved = set_loss(Tensor(b2), Tensor(s2), gts, MatchAssignment(f2, k2), wts).item()
        worst_loss = max(worst_loss, abs(moved - base))
    exact = True
    cfg = ModelConfig(frames=2, slots=3, width=8, heads=2, layers=2, patch=8, image_size=16)
    for seed in range(5):
        m = Model(cfg, seed=seed)
        r = np.random.default_rng(seed)
        frames, sketch = r.uniform(size=(2, 16, 16)), r.uniform(size=(16, 16))
        a = m.forward(frames, sketch, skip_first_tsa=True)
        b = m.forward(frames, sketch, skip_first_tsa=False)
        exact &= np.array_equal(a.boxes.data, b.boxes.data) and np.array_equal(a.scores.data, b.scores.data)
    ok = worst_attn <= 1e-10 and worst_loss <= 1e-9 and exact
    record(4, "structural invariants", ok,
           f"attention permutation max dev {worst_attn:.2e} (<=1e-10), slot permutation max dev "
           f"{worst_loss:.2e} (<=1e-9), first-layer TSA omission bit-exact: {exact}")


def test_5_metric_oracle():
    res = metric_suite(n_sets=1000)
    record(5, "metric oracle and monotonicity", res.ok, f"{res.passed} checks passed, {res.failed} failed; {res.failures}")


@pytest.mark.slow
def test_6_overfit(toy_data):
    cfg = load_config(CONFIGS / "overfit.json")
    t0 = time.perf_counter()
    proto = resolve_protocol(cfg, toy_data)
    assert len(proto.train) == 16
    state = train(cfg, toy_data, proto.train)
    first, last = state.log[0], state.log[-1]
    rep = eval_report(evaluate(model_predictor(state.model), cfg, toy_data, proto.train))
    seconds = time.perf_counter() - t0
    ratio = last["loss"] / first["loss"]
    ok = first["iter"] == 1 and last["iter"] == 2000 and ratio < 0.1 and rep["r1_50"] >= 0.9 and seconds <= 600
    record(6, "overfit", ok,
           f"loss {first['loss']:.3f} -> {last['loss']:.4f} (ratio {ratio:.4f} < 0.1), R1@0.5 on the "
           f"16 pairs {rep['r1_50']:.3f} (>= 0.9), mIoU {rep['miou']:.3f}, {seconds:.0f}s (budget 600s)")


@pytest.mark.slow
def test_7_matching_ablation(toy_data):
    t0 = time.perf_counter()
    miou = {}
    for matching in ("per-frame", "whole-video"):
        cfg = load_config(CONFIGS / "ablation.json", [f'matching="{matching}"'])
        proto = resolve_protocol(cfg, toy_data)
        state = train(cfg, toy_data, proto.train)
        miou[matching] = eval_report(evaluate(model_predictor(state.model), cfg, toy_data, proto.eval))["miou"]
    seconds = time.perf_counter() - t0
    gap = 100 * (miou["per-frame"] - miou["whole-video"])
    n_train = len({p.clip_id for p in proto.train})
    ok = gap >= 5.0 and seconds <= 1800
    record(7, "matching ablation", ok,
           f"eval mIoU per-frame {100 * miou['per-frame']:.2f} vs whole-video {100 * miou['whole-video']:.2f}, "
           f"gap {gap:+.2f} points (>= 5), {len(toy_data.clip_ids('train'))}/{len(toy_data.clip_ids('eval'))} "
           f"train/eval clips ({n_train} with pairs), {seconds:.0f}s (budget 1800s)")


@pytest.mark.slow
def test_8_transfer_protocols(toy_data, tmp_path):
    data = tmp_path / "data"
    save_dataset(toy_data, data)
    lines = []
    ok = True
    for mode in ("category", "dataset"):
        run = tmp_path / mode
        assert main(["train", "--config", str(CONFIGS / f"transfer_{mode}.json"), "--data", str(data),
                     "--out", str(run), "--quiet"]) == 0
        assert main(["transfer-eval", "--mode", mode, "--checkpoint", str(run / "checkpoint.bin"),
                     "--data", str(data), "--out", str(run / "transfer")]) == 0
        rep = json.loads((run / "transfer" / "metrics.json").read_text())
        split = rep["split"]
        if mode == "category":
            seen, unseen = split["seen_categories"], split["unseen_categories"]
            good = (len(seen) == 9 and len(unseen) == 3 and not set(seen) & set(unseen)
                    and set(split["evaluated_categories"]) <= set(unseen) and rep["miou"] > 0
                    and max(rep[k] for k in ("r1_50", "r5_50")) > 0)
            lines.append(f"category: 9 seen / 3 unseen, {rep['num_samples']} unseen pairs, "
                         f"mIoU {rep['miou']:.3f}, R5@0.5 {rep['r5_50']:.3f}")
        else:
            good = (split["identical_clip_ids"] is True and split["eval_clip_ids"] == split["train_clip_ids"]
                    and split["train_style"] == "realistic" and split["eval_style"] == "abstract")
            lines.append(f"dataset: realistic -> abstract on {len(split['eval_clip_ids'])} identical clips, "
                         f"mIoU {rep['miou']:.3f}")
        ok &= bool(good)
    record(8, "transfer protocols", ok, "; ".join(lines))
