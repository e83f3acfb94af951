"""Rasterisation of moving filled glyphs (video clips) and outline sketches."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..boxes import corners_to_cxcywh
from ..errors import CapacityError, ConfigError
from .glyphs import GlyphCategory, categories

# ------------------------------------------------------------------ raster core


def _pixel_centers(size: int) -> tuple[np.ndarray, np.ndarray]:
    c = np.arange(size) + 0.5
    return np.meshgrid(c, c)  # xs, ys, indexed [row, col]


def fill_mask(loops_px, size: int) -> np.ndarray:
    """Even-odd fill of closed pixel-space loops, sampled at pixel centres."""
    xs, ys = _pixel_centers(size)
    parity = np.zeros((size, size), dtype=np.int64)
    for loop in loops_px:
        a = loop
        b = np.roll(loop, -1, axis=0)
        keep = a[:, 1] != b[:, 1]
        ax, ay, bx, by = (v[keep, None, None] for v in (a[:, 0], a[:, 1], b[:, 0], b[:, 1]))
        crosses = (ay > ys) != (by > ys)
        xint = ax + (ys - ay) * (bx - ax) / (by - ay)
        parity += (crosses & (xs < xint)).sum(axis=0)
    return parity % 2 == 1


def stroke_image(loops_px, size: int, width: float) -> np.ndarray:
    """Anti-aliased outline: intensity falls off linearly beyond half the stroke width."""
    xs, ys = _pixel_centers(size)
    p = np.stack([xs.ravel(), ys.ravel()], axis=1)
    best = np.full(p.shape[0], np.inf)
    for loop in loops_px:
        a = loop
        b = np.roll(loop, -1, axis=0)
        d = b - a
        dd = np.maximum((d * d).sum(axis=1), 1e-12)
        t = np.clip(((p[:, None, :] - a[None]) * d[None]).sum(axis=2) / dd[None], 0.0, 1.0)
        proj = a[None] + t[..., None] * d[None]
        dist = np.sqrt(((p[:, None, :] - proj) ** 2).sum(axis=2)).min(axis=1)
        best = np.minimum(best, dist)
    img = np.clip(width / 2 + 0.5 - best, 0.0, 1.0)
    return img.reshape(size, size)


def mask_bounds(mask: np.ndarray) -> np.ndarray | None:
    """Tight normalised cxcywh box around the set pixels of ``mask``; ``None`` if empty."""
    rows = np.nonzero(mask.any(axis=1))[0]
    cols = np.nonzero(mask.any(axis=0))[0]
    if not len(rows):
        return None
    s = mask.shape[0]
    corners = np.array([cols[0], rows[0], cols[-1] + 1, rows[-1] + 1], dtype=np.float64) / s
    return corners_to_cxcywh(corners)


# ------------------------------------------------------------------ clips


@dataclass
class ObjectSpec:
    category: int
    center: tuple[float, float]     # frame fractions at t = 0
    velocity: tuple[float, float]   # frame fractions per frame
    radius: float                   # half extent, frame fraction
    enter: int
    exit: int
    intensity: float = 1.0

    def center_at(self, t: int) -> np.ndarray:
        return np.asarray(self.center) + np.asarray(self.velocity) * t


@dataclass
class ClipSpec:
    clip_id: str
    frames: int
    image_size: int
    objects: list[ObjectSpec] = field(default_factory=list)
    seed: int = 0

    def validate(self) -> "ClipSpec":
        for o in self.objects:
            if not 0 <= o.enter < o.exit <= self.frames:
                raise ConfigError(f"{self.clip_id}: bad visibility range [{o.enter}, {o.exit})")
            if o.radius <= 0:
                raise ConfigError(f"{self.clip_id}: object radius must be positive")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        for o in d["objects"]:
            o["center"] = list(o["center"])
            o["velocity"] = list(o["velocity"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ClipSpec":
        objs = [ObjectSpec(**{**o, "center": tuple(o["center"]), "velocity": tuple(o["velocity"])})
                for o in d["objects"]]
        return cls(d["clip_id"], d["frames"], d["image_size"], objs, d.get("seed", 0))


@dataclass
class FrameObjects:
    """Visible instances in one frame: ``boxes`` ``(K, 4)`` cxcywh plus parallel ids."""

    boxes: np.ndarray
    instances: list[int]
    categories: list[int]


def object_mask(glyph: GlyphCategory, obj: ObjectSpec, t: int, size: int) -> np.ndarray:
    c = obj.center_at(t)
    loops = [(c + obj.radius * loop) * size for loop in glyph.loops]
    return fill_mask(loops, size)


def render_clip(spec: ClipSpec, max_per_frame: int | None = None,
                glyph_set: list[GlyphCategory] | None = None):
    """Rasterise a clip.

    Returns ``(frames, per_frame, category_ids)``: ``frames`` is ``(L, S, S)``
    in ``[0, 1]``; ``per_frame[t]`` lists the instances with at least one pixel
    inside frame ``t``, boxed by the tight bounds of those pixels. Later objects
    paint over earlier ones; boxes come from each object's own raster.
    """
    spec.validate()
    glyph_set = glyph_set or categories()
    s = spec.image_size
    frames = np.zeros((spec.frames, s, s))
    per_frame: list[FrameObjects] = []
    for t in range(spec.frames):
        boxes, inst, cats = [], [], []
        for k, obj in enumerate(spec.objects):
            if not obj.enter <= t < obj.exit:
                continue
            mask = object_mask(glyph_set[obj.category], obj, t, s)
            box = mask_bounds(mask)
            if box is None:
                continue
            frames[t][mask] = obj.intensity
            boxes.append(box)
            inst.append(k)
            cats.append(obj.category)
        if max_per_frame is not None and len(boxes) > max_per_frame:
            raise CapacityError(f"{spec.clip_id}: frame {t} holds {len(boxes)} objects > {max_per_frame}")
        per_frame.append(FrameObjects(np.array(boxes).reshape(-1, 4), inst, cats))
    present = sorted({c for f in per_frame for c in f.categories})
    return frames, per_frame, present


def random_clip_spec(clip_id: str, rng: np.random.Generator, category_ids, frames: int = 32,
                     image_size: int = 32, max_objects: int = 3) -> ClipSpec:
    """Draw 1..max_objects linearly moving glyphs; roughly a third enter or leave mid-clip."""
    n = int(rng.integers(1, max_objects + 1))
    objs = []
    for _ in range(n):
        radius = float(rng.uniform(0.12, 0.22))
        speed = float(rng.uniform(0.004, 0.02))
        angle = float(rng.uniform(0, 2 * np.pi))
        vel = (speed * np.cos(angle), speed * np.sin(angle))
        # start so that the mid-clip centre stays well inside the frame
        mid = rng.uniform(0.3, 0.7, size=2)
        c0 = mid - np.asarray(vel) * (frames - 1) / 2
        enter, exit_ = 0, frames
        if rng.random() < 0.35:
            span = int(rng.integers(max(2, frames // 4), frames + 1))
            enter = int(rng.integers(0, frames - span + 1))
            exit_ = enter + span
        objs.append(ObjectSpec(int(rng.choice(category_ids)), (float(c0[0]), float(c0[1])),
                               (float(vel[0]), float(vel[1])), radius, enter, exit_,
                               float(rng.uniform(0.55, 1.0))))
    return ClipSpec(clip_id, frames, image_size, objs, int(rng.integers(2**31)))


# ------------------------------------------------------------------ sketches

LEVELS = ("realistic", "moderate", "abstract")


@dataclass
class SketchStyle:
    stroke_width: float = 1.0
    rotation: float = 0.0
    scale: float = 1.0
    jitter: float = 0.0
    abstraction: int = 0   # index into LEVELS

    def to_dict(self) -> dict:
        return asdict(self)


# parameter regimes per preset; presets never overlap in stroke width,
# jitter range or abstraction level
PRESETS: dict[str, dict] = {
    "realistic": dict(stroke_width=1.0, jitter=(0.0, 0.03), rotation=0.15, scale=(0.9, 1.0), abstraction=0),
    "moderate": dict(stroke_width=1.6, jitter=(0.04, 0.07), rotation=0.3, scale=(0.8, 0.9), abstraction=1),
    "abstract": dict(stroke_width=2.2, jitter=(0.08, 0.12), rotation=0.45, scale=(0.7, 0.8), abstraction=2),
}


def sample_style(preset: str, rng: np.random.Generator) -> SketchStyle:
    if preset not in PRESETS:
        raise ConfigError(f"unknown sketch style preset {preset!r}; choose from {sorted(PRESETS)}")
    p = PRESETS[preset]
    return SketchStyle(stroke_width=p["stroke_width"],
                       rotation=float(rng.uniform(-p["rotation"], p["rotation"])),
                       scale=float(rng.uniform(*p["scale"])),
                       jitter=float(rng.uniform(*p["jitter"])),
                       abstraction=p["abstraction"])


def preset_of(style: SketchStyle) -> str:
    for name, p in PRESETS.items():
        lo, hi = p["jitter"]
        if (style.abstraction == p["abstraction"] and style.stroke_width == p["stroke_width"]
                and lo <= style.jitter <= hi):
            return name
    return "custom"


def _resample_loop(loop: np.ndarray, glyph: GlyphCategory, level: int) -> np.ndarray:
    if glyph.smooth:
        return loop[:: 2 ** level]
    sub = 3 - level   # points per edge, corners included
    a = loop
    b = np.roll(loop, -1, axis=0)
    t = np.arange(sub)[None, :, None] / sub
    return (a[:, None, :] + t * (b - a)[:, None, :]).reshape(-1, 2)


def sketch_vertices(glyph: GlyphCategory, style: SketchStyle, seed: int = 0) -> list[np.ndarray]:
    """Drawn outline points in unit glyph space after abstraction, rotation, scale and jitter."""
    if not 0 <= style.abstraction < len(LEVELS):
        raise ConfigError(f"abstraction level must be in [0, {len(LEVELS)})")
    rng = np.random.default_rng(seed)
    theta = float(np.mod(style.rotation, 2 * np.pi))
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    out = []
    for loop in glyph.loops:
        pts = _resample_loop(loop, glyph, style.abstraction)
        pts = style.scale * pts @ rot.T if theta else style.scale * pts
        if style.jitter:
            pts = pts + rng.normal(0.0, style.jitter, pts.shape)
        out.append(pts)
    return out


def render_sketch(glyph: GlyphCategory, style: SketchStyle, image_size: int = 32,
                  seed: int = 0) -> np.ndarray:
    """Outline-only drawing of ``glyph`` centred in an ``S x S`` canvas, values in ``[0, 1]``."""
    loops = sketch_vertices(glyph, style, seed)
    half = 0.38 * image_size
    centre = image_size / 2
    return stroke_image([centre + half * p for p in loops], image_size, style.stroke_width)
