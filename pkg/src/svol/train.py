"""Training loop, evaluation runner and the pair-selection protocols."""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import checkpoint
from .config import RunConfig
from .errors import ConfigError, NumericError, ProtocolError, UndefinedSampleError
from .losses import set_loss
from .matching import MATCHERS
from .metrics import EvalRecord, candidate_iou, report
from .model import Model
from .optim import OptimizerState, adamw_step, step_decay_lr
from .rng import BATCH, DROPOUT, LAYOUT, make_rng
from .synth.dataset import Dataset, SamplePair, build_dataset, load_dataset, split_categories
from .tensor import Tape

# ------------------------------------------------------------------ data plumbing


def sample_indices(clip_frames: int, frames: int) -> np.ndarray:
    """``frames`` evenly spaced frame indices, each the centre of its stretch of the clip."""
    if frames > clip_frames:
        raise ConfigError(f"cannot sample {frames} frames from {clip_frames}")
    return ((np.arange(frames) + 0.5) * clip_frames / frames).astype(int)


def open_dataset(cfg: RunConfig) -> Dataset:
    d = cfg.data
    if d.root is not None:
        ds = load_dataset(d.root)
        if ds.frames != d.clip_frames or ds.image_size != d.image_size:
            raise ConfigError(f"dataset at {d.root} has {ds.frames}x{ds.image_size}px clips, "
                              f"config expects {d.clip_frames}x{d.image_size}px")
        return ds
    return build_dataset(seed=d.seed, n_clips=d.clips, n_categories=d.categories, styles=d.styles,
                         eval_fraction=d.eval_fraction, frames=d.clip_frames, image_size=d.image_size,
                         max_objects=d.max_objects,
                         sketches_per_category=tuple(d.sketches_per_category),
                         max_per_frame=cfg.model.slots)


@dataclass
class Protocol:
    """Resolved train/eval pair sets plus a description for reports."""

    train: list[SamplePair]
    eval: list[SamplePair]
    info: dict = field(default_factory=dict)


def resolve_protocol(cfg: RunConfig, ds: Dataset) -> Protocol:
    p = cfg.protocol
    idx = sample_indices(ds.frames, cfg.model.frames)
    all_ids = [c.id for c in ds.categories]
    styles = ds.styles()
    if p.mode == "standard":
        style = p.train_style if p.train_style in styles else styles[0]
        train = ds.pairs("train", style=style, frame_indices=idx)
        ev = ds.pairs("eval", style=style, frame_indices=idx)
        info = {"mode": "standard", "style": style, "categories": all_ids}
    elif p.mode == "category":
        seen, unseen = split_categories(all_ids, p.n_seen, p.split_seed)
        style = p.train_style if p.train_style in styles else styles[0]
        train = ds.pairs("train", style=style, category_ids=seen, frame_indices=idx)
        ev = ds.pairs("eval", style=style, category_ids=unseen, frame_indices=idx)
        info = {"mode": "category", "style": style, "seen_categories": seen,
                "unseen_categories": unseen, "split_seed": p.split_seed}
    else:
        for st in (p.train_style, p.eval_style):
            if st not in styles:
                raise ConfigError(f"dataset has no {st!r} sketches (has {styles})")
        train = ds.pairs("train", style=p.train_style, frame_indices=idx)
        # same clips, sketches in the other style
        ev = ds.pairs("eval", style=p.eval_style, frame_indices=idx, clip_split="train")
        info = {"mode": "dataset", "train_style": p.train_style, "eval_style": p.eval_style,
                "categories": all_ids}
    if p.max_train_pairs is not None and len(train) > p.max_train_pairs:
        keep = np.sort(make_rng(cfg.seed, LAYOUT).permutation(len(train))[:p.max_train_pairs])
        train = [train[i] for i in keep]
    info["train_clip_ids"] = sorted({x.clip_id for x in train})
    if p.mode == "dataset":
        keep_clips = set(info["train_clip_ids"])
        ev = [x for x in ev if x.clip_id in keep_clips]
    info["frame_indices"] = [int(i) for i in idx]
    return Protocol(train, ev, info)


def assemble(ds: Dataset, pairs: Sequence[SamplePair], idx: np.ndarray):
    frames = np.stack([ds.clips[p.clip_id].frames[idx] for p in pairs])
    sketches = np.stack([ds.sketches[p.sketch_id].image for p in pairs])
    gts = [p.frame_gts(idx) for p in pairs]
    return frames, sketches, gts


# ------------------------------------------------------------------ training


def batch_indices(seed: int, iteration: int, n_pairs: int, batch_size: int) -> np.ndarray:
    """Pair indices of one iteration's batch; depends only on (seed, iteration)."""
    rng = make_rng(seed, BATCH, iteration)
    return rng.choice(n_pairs, size=min(batch_size, n_pairs), replace=False)


def compute_loss(model: Model, cfg: RunConfig, frames, sketches, gts, rng=None, matching=None):
    pred = model.forward(frames, sketches, rng=rng)
    match = MATCHERS[matching or cfg.matching]
    asg = [match(pred.boxes.data[b], pred.scores.data[b], gts[b], cfg.loss) for b in range(len(gts))]
    return set_loss(pred.boxes, pred.scores, gts, asg, cfg.loss)


@dataclass
class TrainState:
    model: Model
    optim: OptimizerState
    iteration: int = 0
    log: list[dict] = field(default_factory=list)


def new_state(cfg: RunConfig) -> TrainState:
    o = cfg.optim
    return TrainState(Model(cfg.model, seed=cfg.seed),
                      OptimizerState(lr=o.lr, weight_decay=o.weight_decay, beta1=o.beta1,
                                     beta2=o.beta2, eps=o.eps))


def train_step(state: TrainState, cfg: RunConfig, ds: Dataset, pairs: Sequence[SamplePair],
               idx: np.ndarray) -> float:
    it = state.iteration
    chosen = [pairs[i] for i in batch_indices(cfg.seed, it, len(pairs), cfg.batch_size)]
    frames, sketches, gts = assemble(ds, chosen, idx)
    drop_rng = make_rng(cfg.seed, DROPOUT, it) if cfg.model.dropout else None
    params = state.model.parameters()
    with Tape() as tape:
        loss = compute_loss(state.model, cfg, frames, sketches, gts, drop_rng)
        if not loss.is_finite():
            raise NumericError(f"non-finite loss at iteration {it}")
        state.model.zero_grad()
        tape.backward(loss)
    s = cfg.schedule
    state.optim.lr = step_decay_lr(cfg.optim.lr, it, s.decay_step, s.decay_factor)
    adamw_step(params, {k: p.grad for k, p in params.items()}, state.optim)
    state.iteration += 1
    return loss.item()


def train(cfg: RunConfig, ds: Dataset, pairs: Sequence[SamplePair], state: TrainState | None = None,
          iterations: int | None = None, log_path: str | Path | None = None,
          on_log: Callable[[dict], None] | None = None) -> TrainState:
    """Run until ``iterations`` total steps (config value by default) have been taken."""
    if not pairs:
        raise ConfigError("no training pairs")
    state = state or new_state(cfg)
    total = cfg.schedule.iterations if iterations is None else iterations
    idx = sample_indices(ds.frames, cfg.model.frames)
    fh = open(log_path, "a") if log_path else None
    t0 = time.perf_counter()
    try:
        while state.iteration < total:
            lr = step_decay_lr(cfg.optim.lr, state.iteration, cfg.schedule.decay_step,
                               cfg.schedule.decay_factor)
            loss = train_step(state, cfg, ds, pairs, idx)
            it = state.iteration
            if it == 1 or it % cfg.schedule.log_every == 0 or it == total:
                line = {"iter": it, "loss": loss, "lr": lr, "seconds": round(time.perf_counter() - t0, 3)}
                state.log.append(line)
                if fh:
                    fh.write(json.dumps(line) + "\n")
                    fh.flush()
                if on_log:
                    on_log(line)
    finally:
        if fh:
            fh.close()
    return state


def mean_loss(model: Model, cfg: RunConfig, ds: Dataset, pairs: Sequence[SamplePair],
              matching: str | None = None, batch: int = 32) -> float:
    """Average set loss over ``pairs`` without dropout or gradient recording."""
    idx = sample_indices(ds.frames, cfg.model.frames)
    total = 0.0
    for s in range(0, len(pairs), batch):
        chunk = pairs[s:s + batch]
        frames, sketches, gts = assemble(ds, chunk, idx)
        total += compute_loss(model, cfg, frames, sketches, gts, matching=matching).item() * len(chunk)
    return total / len(pairs)


# ------------------------------------------------------------------ checkpoints


def save_state(path: str | Path, state: TrainState, meta: dict) -> None:
    arrays = state.model.state_arrays()
    for k, m in state.optim.m.items():
        arrays[f"optim.m.{k}"] = m
        arrays[f"optim.v.{k}"] = state.optim.v[k]
    arrays["optim.step"] = np.array(float(state.optim.step))
    arrays["train.iteration"] = np.array(float(state.iteration))
    checkpoint.save(path, arrays)
    Path(f"{path}.meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")


def load_meta(path: str | Path) -> dict:
    mp = Path(f"{path}.meta.json")
    if not mp.exists():
        raise ConfigError(f"checkpoint {path} has no {mp.name} sidecar")
    return json.loads(mp.read_text())


def load_state(path: str | Path, cfg: RunConfig) -> TrainState:
    arrays = checkpoint.load(path)
    state = new_state(cfg)
    state.model.load_arrays(arrays)
    for k in state.model.parameters():
        if f"optim.m.{k}" in arrays:
            state.optim.m[k] = arrays[f"optim.m.{k}"].copy()
            state.optim.v[k] = arrays[f"optim.v.{k}"].copy()
    state.optim.step = int(arrays.get("optim.step", np.array(0.0)))
    state.iteration = int(arrays.get("train.iteration", np.array(0.0)))
    return state


def check_meta(meta: dict, cfg: RunConfig) -> None:
    """Refuse a checkpoint whose model shape differs from the config."""
    mm = meta.get("config", {}).get("model", {})
    for key in ("frames", "slots", "width", "heads", "layers", "patch"):
        if key in mm and mm[key] != getattr(cfg.model, key):
            raise ConfigError(f"checkpoint model.{key}={mm[key]} but config has {getattr(cfg.model, key)}")


def run_meta(cfg: RunConfig, proto: Protocol) -> dict:
    return {"config": cfg.to_dict(), "protocol": proto.info}


# ------------------------------------------------------------------ evaluation

Predictor = Callable[[np.ndarray, np.ndarray, list], tuple[np.ndarray, np.ndarray]]


def model_predictor(model: Model) -> Predictor:
    def predict(frames, sketches, gts):
        pred = model.forward(frames, sketches)
        return pred.boxes.data, pred.scores.data
    return predict


def oracle_predictor(slots: int) -> Predictor:
    """Test hook: every frame's ground truth sits in the top slots with score 1."""
    def predict(frames, sketches, gts):
        b, l = frames.shape[:2]
        boxes = np.tile(np.array([0.5, 0.5, 0.1, 0.1]), (b, l, slots, 1))
        scores = np.zeros((b, l, slots))
        for i, per in enumerate(gts):
            for t, g in enumerate(per):
                boxes[i, t, :len(g)] = g
                scores[i, t, :len(g)] = 1.0
                if len(g):
                    boxes[i, t, len(g):] = g[0]
        return boxes, scores
    return predict


def evaluate(predict: Predictor, cfg: RunConfig, ds: Dataset, pairs: Sequence[SamplePair],
             batch: int = 32) -> list[EvalRecord]:
    if not pairs:
        raise UndefinedSampleError("empty evaluation set")
    idx = sample_indices(ds.frames, cfg.model.frames)
    records = []
    for s in range(0, len(pairs), batch):
        chunk = pairs[s:s + batch]
        frames, sketches, gts = assemble(ds, chunk, idx)
        boxes, scores = predict(frames, sketches, gts)
        for p, b, sc, g in zip(chunk, boxes, scores, gts):
            records.append(EvalRecord(p.pair_id, candidate_iou(b, sc, g)))
    return records


def eval_report(records: list[EvalRecord], **extra) -> dict:
    rep = report(records)
    if rep["r5_50"] < rep["r1_50"] or rep["r5_70"] < rep["r1_70"]:
        raise NumericError("recall is not monotone in k")
    rep.update(extra)
    return rep


def transfer_split_info(meta: dict, cfg: RunConfig, proto: Protocol, mode: str) -> dict:
    """Protocol guard plus the split description that goes into the report."""
    trained = meta.get("protocol", {})
    if trained.get("mode") != mode:
        raise ProtocolError(f"checkpoint was trained with protocol {trained.get('mode')!r}, "
                            f"{mode} transfer needs a {mode}-mode checkpoint")
    info = dict(proto.info)
    if mode == "category":
        seen, unseen = trained["seen_categories"], trained["unseen_categories"]
        if seen != info["seen_categories"] or unseen != info["unseen_categories"]:
            raise ProtocolError("category split differs from the one used in training")
        if set(seen) & set(unseen):
            raise ProtocolError("seen and unseen categories overlap")
        eval_cats = sorted({p.category for p in proto.eval})
        if set(eval_cats) & set(seen):
            raise ProtocolError("evaluation pairs include seen categories")
        info["evaluated_categories"] = eval_cats
    else:
        eval_clips = sorted({p.clip_id for p in proto.eval})
        train_clips = trained["train_clip_ids"]
        info["eval_clip_ids"] = eval_clips
        info["train_clip_ids"] = train_clips
        info["identical_clip_ids"] = eval_clips == sorted(train_clips)
        if not info["identical_clip_ids"]:
            raise ProtocolError("dataset transfer must evaluate on the training clips")
    return info
