"""Synthetic dataset: generation, on-disk layout, pairing, splits and statistics.

On-disk layout::

    <root>/manifest.json      categories, splits, clip specs, sketch styles
    <root>/clips/<id>.bin     u8 frames
    <root>/sketches/<id>.bin  u8 sketch image (count 1)
    <root>/gt/<id>.json       per-frame boxes of every instance in a clip

``.bin`` files: ``b"SVIM"``, then little-endian u32 version (1), u32 count,
u32 height, u32 width, then ``count*height*width`` u8 pixels row-major.
"""
from __future__ import annotations

import json
import os
import struct
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..errors import ConfigError, ProtocolError
from ..rng import CLIP, SKETCH, SPLIT, make_rng
from .glyphs import GlyphCategory, categories as all_categories
from .render import (PRESETS, ClipSpec, FrameObjects, SketchStyle, random_clip_spec, render_clip,
                     render_sketch, sample_style)

IMG_MAGIC = b"SVIM"
SPLITS = ("train", "eval")


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("SVOL_THREADS", "1")))
    except ValueError:
        return 1


def _pmap(fn, items):
    n = worker_count()
    if n == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(n) as ex:
        return list(ex.map(fn, items))


# ------------------------------------------------------------------ records


@dataclass
class ClipRecord:
    clip_id: str
    split: str
    spec: ClipSpec
    frames: np.ndarray                 # (L, S, S) float in [0, 1]
    objects: list[FrameObjects]
    categories: list[int]


@dataclass
class SketchRecord:
    sketch_id: str
    split: str
    category: int
    style: str
    params: SketchStyle
    image: np.ndarray                  # (S, S) float in [0, 1]
    seed: int = 0


@dataclass
class SamplePair:
    pair_id: str
    clip_id: str
    sketch_id: str
    category: int
    split: str
    gts: list[np.ndarray] = field(repr=False)   # per clip frame, (K_i, 4) boxes of ``category``

    def frame_gts(self, frame_indices: Sequence[int]) -> list[np.ndarray]:
        return [self.gts[i] for i in frame_indices]


def quantize(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * 255).astype(np.uint8)


# ------------------------------------------------------------------ generation


def make_clip(index: int, seed: int, split: str, category_ids, frames: int, image_size: int,
              max_objects: int, max_per_frame: int, glyph_set) -> ClipRecord:
    rng = make_rng(seed, CLIP, index)
    spec = random_clip_spec(f"clip_{index:05d}", rng, category_ids, frames, image_size, max_objects)
    imgs, per_frame, present = render_clip(spec, max_per_frame, glyph_set)
    return ClipRecord(spec.clip_id, split, spec, quantize(imgs) / 255.0, per_frame, present)


def make_sketch(category: GlyphCategory, split: str, style: str, k: int, seed: int,
                image_size: int) -> SketchRecord:
    rng = make_rng(seed, SKETCH, category.id, SPLITS.index(split), sorted(PRESETS).index(style), k)
    params = sample_style(style, rng)
    jitter_seed = int(rng.integers(2**31))
    img = render_sketch(category, params, image_size, jitter_seed)
    sid = f"sk_{split}_{style}_{category.name}_{k:03d}"
    return SketchRecord(sid, split, category.id, style, params, quantize(img) / 255.0, jitter_seed)


@dataclass
class Dataset:
    categories: list[GlyphCategory]
    clips: dict[str, ClipRecord]
    sketches: dict[str, SketchRecord]
    seed: int = 0
    frames: int = 32
    image_size: int = 32
    max_objects: int = 3

    def clip_ids(self, split: str) -> list[str]:
        return [c for c, r in self.clips.items() if r.split == split]

    def sketch_list(self, split: str, style: str | None = None,
                    category_ids: Iterable[int] | None = None) -> list[SketchRecord]:
        cats = None if category_ids is None else set(category_ids)
        return [s for s in self.sketches.values()
                if s.split == split and (style is None or s.style == style)
                and (cats is None or s.category in cats)]

    def styles(self) -> list[str]:
        return sorted({s.style for s in self.sketches.values()})

    def pairs(self, split: str, style: str | None = None, category_ids=None,
              frame_indices=None, clip_split: str | None = None) -> list["SamplePair"]:
        clips = [self.clips[c] for c in self.clip_ids(clip_split or split)]
        sketches = self.sketch_list(split, style, category_ids)
        if clip_split is not None and clip_split != split:
            # same-video transfer: the clip split deliberately differs from the sketch split
            return curate_pairs(clips, sketches, None, frame_indices)
        return curate_pairs(clips, sketches, split, frame_indices)


def build_dataset(seed: int = 0, n_clips: int = 640, n_categories: int = 12,
                  styles: Sequence[str] = ("realistic",), eval_fraction: float = 0.2,
                  frames: int = 32, image_size: int = 32, max_objects: int = 3,
                  sketches_per_category: tuple[int, int] = (8, 2), max_per_frame: int = 10) -> Dataset:
    """Generate clips and sketches in memory (pixels already quantised to u8 levels)."""
    for st in styles:
        if st not in PRESETS:
            raise ConfigError(f"unknown sketch style preset {st!r}; choose from {sorted(PRESETS)}")
    if n_clips < 1:
        raise ConfigError("need at least one clip")
    if max_objects > max_per_frame:
        raise ConfigError(f"max_objects {max_objects} exceeds slot capacity {max_per_frame}")
    glyph_set = all_categories()
    cats = glyph_set[:n_categories] if n_categories <= len(glyph_set) else None
    if cats is None:
        raise ConfigError(f"at most {len(glyph_set)} categories are available")
    cat_ids = [c.id for c in cats]
    n_eval = int(round(n_clips * eval_fraction)) if n_clips > 1 else 0
    split_of = ["train"] * (n_clips - n_eval) + ["eval"] * n_eval
    clips = _pmap(lambda i: make_clip(i, seed, split_of[i], cat_ids, frames, image_size,
                                      max_objects, max_per_frame, glyph_set), range(n_clips))
    jobs = [(c, split, st, k) for st in styles for split, n in zip(SPLITS, sketches_per_category)
            for c in cats for k in range(n)]
    sketches = _pmap(lambda j: make_sketch(*j, seed, image_size), jobs)
    return Dataset(cats, {c.clip_id: c for c in clips}, {s.sketch_id: s for s in sketches},
                   seed, frames, image_size, max_objects)


# ------------------------------------------------------------------ protocol


def curate_pairs(clips: Sequence[ClipRecord], sketches: Sequence[SketchRecord], split: str | None,
                 frame_indices: Sequence[int] | None = None) -> list[SamplePair]:
    """All (clip, sketch) pairs of equal category where that category is visible.

    Visibility counts only ``frame_indices`` (all frames by default). A pair's
    ground truth keeps only the boxes of the sketch's category. Every clip and
    sketch must carry ``split``; pass ``split=None`` only for the same-video
    transfer protocol.
    """
    if split is not None:
        for rec in (*clips, *sketches):
            if rec.split != split:
                rid = getattr(rec, "clip_id", None) or rec.sketch_id
                raise ProtocolError(f"{rid} belongs to split {rec.split!r}, not {split!r}")
    by_cat: dict[int, list[SketchRecord]] = {}
    for s in sketches:
        by_cat.setdefault(s.category, []).append(s)
    pairs = []
    for clip in clips:
        idx = range(len(clip.objects)) if frame_indices is None else frame_indices
        visible = {c for i in idx for c in clip.objects[i].categories}
        for cat in sorted(visible & set(by_cat)):
            gts = []
            for fo in clip.objects:
                keep = [k for k, c in enumerate(fo.categories) if c == cat]
                gts.append(fo.boxes[keep].reshape(-1, 4))
            for s in by_cat[cat]:
                pairs.append(SamplePair(f"{clip.clip_id}|{s.sketch_id}", clip.clip_id, s.sketch_id,
                                        cat, split or s.split, gts))
    return pairs


def split_categories(category_ids: Sequence[int], n_seen: int, seed: int) -> tuple[list[int], list[int]]:
    """Disjoint seen/unseen category sets, deterministic per seed."""
    ids = sorted(set(category_ids))
    if not 0 < n_seen < len(ids):
        raise ConfigError(f"n_seen must be between 1 and {len(ids) - 1}")
    order = make_rng(seed, SPLIT).permutation(len(ids))
    seen = sorted(ids[i] for i in order[:n_seen])
    unseen = sorted(ids[i] for i in order[n_seen:])
    assert not set(seen) & set(unseen)
    return seen, unseen


def style_split(styles: Sequence[str]) -> tuple[str, str]:
    """(train style, eval style) from two distinct presets; swap the input to swap roles."""
    if len(styles) != 2:
        raise ConfigError("style_split needs exactly two presets")
    a, b = styles
    for st in (a, b):
        if st not in PRESETS:
            raise ConfigError(f"unknown sketch style preset {st!r}")
    if a == b:
        raise ConfigError("train and eval styles must differ")
    return a, b


def dataset_stats(pairs: Sequence[SamplePair], frame_indices: Sequence[int] | None = None,
                  max_instances: int = 3) -> dict:
    """Pair counts per split and category, and a histogram of boxes per frame."""
    per_split = Counter(p.split for p in pairs)
    per_cat = Counter(p.category for p in pairs)
    hist = Counter()
    for p in pairs:
        gts = p.gts if frame_indices is None else p.frame_gts(frame_indices)
        hist.update(len(g) for g in gts)
    top = max([max_instances, *hist.keys()])
    return {
        "total_pairs": len(pairs),
        "pairs_per_split": {s: per_split.get(s, 0) for s in SPLITS},
        "pairs_per_category": {str(k): per_cat[k] for k in sorted(per_cat)},
        "instances_per_frame": {str(k): hist.get(k, 0) for k in range(top + 1)},
    }


# ------------------------------------------------------------------ disk io


def write_images(path: Path, images: np.ndarray) -> None:
    images = np.asarray(images, dtype=np.uint8)
    if images.ndim == 2:
        images = images[None]
    n, h, w = images.shape
    path.write_bytes(IMG_MAGIC + struct.pack("<IIII", 1, n, h, w) + images.tobytes(order="C"))


def read_images(path: Path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if blob[:4] != IMG_MAGIC:
        raise ConfigError(f"{path}: not an image file")
    version, n, h, w = struct.unpack_from("<IIII", blob, 4)
    if version != 1:
        raise ConfigError(f"{path}: unsupported image file version {version}")
    return np.frombuffer(blob, dtype=np.uint8, count=n * h * w, offset=20).reshape(n, h, w)


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def save_dataset(ds: Dataset, root: str | Path) -> None:
    root = Path(root)
    for sub in ("clips", "sketches", "gt"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    names = {c.id: c.name for c in ds.categories}
    for c in ds.clips.values():
        write_images(root / "clips" / f"{c.clip_id}.bin", quantize(c.frames))
        gt = {
            "clip_id": c.clip_id,
            "frames": [
                [{"instance": k, "category": names[cat], "box": [float(x) for x in box]}
                 for k, cat, box in zip(fo.instances, fo.categories, fo.boxes)]
                for fo in c.objects
            ],
        }
        (root / "gt" / f"{c.clip_id}.json").write_text(_dump(gt))
    for s in ds.sketches.values():
        write_images(root / "sketches" / f"{s.sketch_id}.bin", quantize(s.image))
    manifest = {
        "format": "svol-synth",
        "version": 1,
        "seed": ds.seed,
        "frames": ds.frames,
        "image_size": ds.image_size,
        "max_objects": ds.max_objects,
        "categories": [{"id": c.id, "name": c.name} for c in ds.categories],
        "styles": ds.styles(),
        "splits": {sp: ds.clip_ids(sp) for sp in SPLITS},
        "clips": [{"id": c.clip_id, "split": c.split, "categories": c.categories,
                   "spec": c.spec.to_dict()} for c in ds.clips.values()],
        "sketches": [{"id": s.sketch_id, "split": s.split, "category": s.category,
                      "style": s.style, "seed": s.seed, "params": s.params.to_dict()}
                     for s in ds.sketches.values()],
    }
    (root / "manifest.json").write_text(_dump(manifest))


def load_dataset(root: str | Path) -> Dataset:
    root = Path(root)
    mpath = root / "manifest.json"
    if not mpath.exists():
        raise ConfigError(f"{root} has no manifest.json")
    man = json.loads(mpath.read_text())
    glyph_set = all_categories()
    cats = [glyph_set[c["id"]] for c in man["categories"]]
    ids_by_name = {c.name: c.id for c in glyph_set}
    clips = {}
    for c in man["clips"]:
        frames = read_images(root / "clips" / f"{c['id']}.bin") / 255.0
        gt = json.loads((root / "gt" / f"{c['id']}.json").read_text())
        objs = [FrameObjects(np.array([o["box"] for o in fr], dtype=np.float64).reshape(-1, 4),
                             [o["instance"] for o in fr], [ids_by_name[o["category"]] for o in fr])
                for fr in gt["frames"]]
        clips[c["id"]] = ClipRecord(c["id"], c["split"], ClipSpec.from_dict(c["spec"]), frames,
                                    objs, list(c["categories"]))
    sketches = {}
    for s in man["sketches"]:
        img = read_images(root / "sketches" / f"{s['id']}.bin")[0] / 255.0
        sketches[s["id"]] = SketchRecord(s["id"], s["split"], s["category"], s["style"],
                                         SketchStyle(**s["params"]), img, s.get("seed", 0))
    return Dataset(cats, clips, sketches, man["seed"], man["frames"], man["image_size"],
                   man["max_objects"])
