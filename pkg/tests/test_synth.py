import json

import numpy as np
import pytest

from svol.errors import CapacityError, ConfigError, ProtocolError
from svol.synth.dataset import (ClipRecord, SamplePair, SketchRecord, build_dataset, curate_pairs,
                                dataset_stats, load_dataset, read_images, save_dataset,
                                split_categories, style_split, write_images)
from svol.synth.glyphs import by_name, categories
from svol.synth.render import (PRESETS, ClipSpec, FrameObjects, ObjectSpec, SketchStyle, fill_mask,
                               mask_bounds, object_mask, render_clip, render_sketch, sample_style,
                               sketch_vertices)


@pytest.fixture(scope="module")
def small():
    return build_dataset(seed=3, n_clips=12, frames=8, styles=("realistic", "abstract"),
                         sketches_per_category=(2, 1))


def one_object_clip(**kw):
    obj = dict(category=1, center=(0.5, 0.5), velocity=(0.0, 0.0), radius=0.2, enter=0, exit=6)
    obj.update(kw)
    return ClipSpec("c", 6, 32, [ObjectSpec(**obj)])


# ------------------------------------------------------------------ rendering

def test_fill_mask_square():
    sq = np.array([[8.0, 8.0], [24.0, 8.0], [24.0, 24.0], [8.0, 24.0]])
    m = fill_mask([sq], 32)
    assert m.sum() == 16 * 16 and m[8:24, 8:24].all()
    np.testing.assert_allclose(mask_bounds(m), [0.5, 0.5, 0.5, 0.5])
    assert mask_bounds(np.zeros((4, 4), bool)) is None


def test_static_object_keeps_its_box():
    _, per_frame, _ = render_clip(one_object_clip())
    for f in per_frame[1:]:
        assert np.array_equal(f.boxes, per_frame[0].boxes)


def test_single_frame_visibility():
    _, per_frame, _ = render_clip(one_object_clip(enter=3, exit=4))
    assert [len(f.boxes) for f in per_frame] == [0, 0, 0, 1, 0, 0]


def test_linear_trajectory():
    o = ObjectSpec(0, (0.3, 0.4), (0.01, -0.02), 0.1, 0, 10)
    for t in range(10):
        np.testing.assert_allclose(o.center_at(t), [0.3 + 0.01 * t, 0.4 - 0.02 * t], atol=1e-15)


def test_boxes_are_tight_and_cover_painted_pixels(small):
    glyphs = categories()
    for clip in list(small.clips.values())[:6]:
        for t, fo in enumerate(clip.objects):
            covered = np.zeros((32, 32), bool)
            for k, box in zip(fo.instances, fo.boxes):
                mask = object_mask(glyphs[clip.spec.objects[k].category], clip.spec.objects[k], t, 32)
                np.testing.assert_array_equal(box, mask_bounds(mask))
                x0, y0, x1, y1 = np.round((np.r_[box[:2] - box[2:] / 2, box[:2] + box[2:] / 2]) * 32).astype(int)
                assert mask[y0:y1, x0:x1].sum() == mask.sum()
                covered[y0:y1, x0:x1] = True
            assert not np.any(clip.frames[t][~covered])


def test_capacity_is_enforced():
    spec = ClipSpec("c", 2, 32, [ObjectSpec(0, (0.5, 0.5), (0, 0), 0.2, 0, 2)] * 3)
    with pytest.raises(CapacityError):
        render_clip(spec, max_per_frame=2)
    with pytest.raises(ConfigError):
        render_clip(one_object_clip(enter=4, exit=2))


def test_every_frame_fits_the_slots(small):
    assert all(len(f.boxes) <= 10 for c in small.clips.values() for f in c.objects)


def test_identity_style_draws_the_canonical_outline():
    sq = by_name("square")
    pts = sketch_vertices(sq, SketchStyle(abstraction=0))
    corners = pts[0][::3]
    np.testing.assert_allclose(corners, sq.loops[0], atol=1e-15)


def test_circle_rotation_by_full_turn():
    circ = by_name("circle")
    a = render_sketch(circ, SketchStyle(rotation=0.0))
    b = render_sketch(circ, SketchStyle(rotation=2 * np.pi))
    assert np.array_equal(a, b)


def test_abstraction_drops_vertices():
    for name in ("square", "star", "cross", "circle"):
        g = by_name(name)
        counts = [sum(len(p) for p in sketch_vertices(g, SketchStyle(abstraction=lv))) for lv in range(3)]
        assert counts[0] > counts[1] > counts[2]


def test_sketch_rendering_is_deterministic():
    g = by_name("heart")
    st = sample_style("moderate", np.random.default_rng(0))
    assert np.array_equal(render_sketch(g, st, seed=5), render_sketch(g, st, seed=5))
    with pytest.raises(ConfigError):
        sample_style("sloppy", np.random.default_rng(0))


def test_presets_do_not_overlap():
    names = sorted(PRESETS)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            pa, pb = PRESETS[a], PRESETS[b]
            assert pa["stroke_width"] != pb["stroke_width"] and pa["abstraction"] != pb["abstraction"]
            assert pa["jitter"][1] < pb["jitter"][0] or pb["jitter"][1] < pa["jitter"][0]


# ------------------------------------------------------------------ pairing

def clip_record(cid, split, cats_per_frame):
    objs = []
    for t, cats in enumerate(cats_per_frame):
        boxes = np.array([[0.2 + 0.1 * k, 0.5, 0.1, 0.1] for k in range(len(cats))]).reshape(-1, 4)
        objs.append(FrameObjects(boxes, list(range(len(cats))), list(cats)))
    present = sorted({c for cs in cats_per_frame for c in cs})
    return ClipRecord(cid, split, ClipSpec(cid, len(cats_per_frame), 32), np.zeros((len(cats_per_frame), 32, 32)),
                      objs, present)


def sketch_record(sid, split, cat):
    return SketchRecord(sid, split, cat, "realistic", SketchStyle(), np.zeros((32, 32)))


def test_pairs_need_equal_category():
    circle, square = by_name("circle").id, by_name("square").id
    clip = clip_record("c0", "train", [[circle]])
    pairs = curate_pairs([clip], [sketch_record("s0", "train", circle), sketch_record("s1", "train", square)], "train")
    assert [p.sketch_id for p in pairs] == ["s0"]
    assert curate_pairs([clip], [sketch_record("s1", "train", square)], "train") == []


def test_ground_truth_keeps_only_the_sketch_category():
    circle, square = by_name("circle").id, by_name("square").id
    clip = clip_record("c0", "train", [[circle, square], [square], []])
    (pair,) = curate_pairs([clip], [sketch_record("s0", "train", circle)], "train")
    assert [len(g) for g in pair.gts] == [1, 0, 0]
    np.testing.assert_array_equal(pair.gts[0], clip.objects[0].boxes[:1])


def test_visibility_counts_sampled_frames_only():
    clip = clip_record("c0", "train", [[], [4], []])
    sk = [sketch_record("s0", "train", 4)]
    assert len(curate_pairs([clip], sk, "train")) == 1
    assert curate_pairs([clip], sk, "train", frame_indices=[0, 2]) == []


def test_pairing_rejects_cross_split_records(small):
    with pytest.raises(ProtocolError):
        curate_pairs([clip_record("c0", "eval", [[1]])], [sketch_record("s", "train", 1)], "train")
    train_clips = set(small.clip_ids("train"))
    train_sketches = {s.sketch_id for s in small.sketch_list("train")}
    for p in small.pairs("train"):
        assert p.clip_id in train_clips and p.sketch_id in train_sketches
    for p in small.pairs("eval"):
        assert p.clip_id not in train_clips and p.sketch_id not in train_sketches


def test_category_split():
    ids = list(range(19))
    seen, unseen = split_categories(ids, 14, seed=0)
    assert (len(seen), len(unseen)) == (14, 5)
    assert set(seen) | set(unseen) == set(ids) and not set(seen) & set(unseen)
    assert split_categories(ids, 14, seed=0) == (seen, unseen)
    with pytest.raises(ConfigError):
        split_categories(ids, 19, seed=0)


def test_style_split(small):
    a, b = style_split(["realistic", "abstract"])
    assert (a, b) == ("realistic", "abstract")
    assert style_split(["abstract", "realistic"]) == (b, a)
    eval_b = small.sketch_list("eval", b)
    assert eval_b and all(s.params.abstraction != PRESETS[a]["abstraction"] for s in eval_b)
    cats = lambda st: {s.category for s in small.sketch_list("train", st)}
    assert cats(a) == cats(b)
    for bad in (["realistic"], ["realistic", "realistic"], ["realistic", "sloppy"]):
        with pytest.raises(ConfigError):
            style_split(bad)


def test_stats_hand_tally():
    z = np.zeros((0, 4))
    one, two = np.full((1, 4), 0.5), np.full((2, 4), 0.5)
    pairs = [SamplePair("a", "c0", "s0", 0, "train", [one, z]),
             SamplePair("b", "c0", "s1", 0, "train", [two, one]),
             SamplePair("c", "c1", "s2", 3, "eval", [z, z])]
    st = dataset_stats(pairs, max_instances=3)
    assert st == {"total_pairs": 3, "pairs_per_split": {"train": 2, "eval": 1},
                  "pairs_per_category": {"0": 2, "3": 1},
                  "instances_per_frame": {"0": 3, "1": 2, "2": 1, "3": 0}}
    assert sum(st["pairs_per_category"].values()) == st["total_pairs"]
    empty = dataset_stats([])
    assert empty["total_pairs"] == 0 and set(empty["instances_per_frame"].values()) == {0}


def test_stats_schema(small, validate):
    validate(dataset_stats(small.pairs("train") + small.pairs("eval")), "dataset_stats")


# ------------------------------------------------------------------ determinism and io

def test_generation_is_bit_deterministic(small):
    again = build_dataset(seed=3, n_clips=12, frames=8, styles=("realistic", "abstract"),
                          sketches_per_category=(2, 1))
    for cid, c in small.clips.items():
        assert np.array_equal(c.frames, again.clips[cid].frames)
    for sid, s in small.sketches.items():
        assert np.array_equal(s.image, again.sketches[sid].image)
    other = build_dataset(seed=4, n_clips=12, frames=8, sketches_per_category=(2, 1))
    assert any(not np.array_equal(c.frames, other.clips[cid].frames) for cid, c in small.clips.items())


def test_build_dataset_validation():
    with pytest.raises(ConfigError):
        build_dataset(n_clips=2, styles=("sloppy",))
    with pytest.raises(ConfigError):
        build_dataset(n_clips=2, n_categories=40)


def test_image_file_round_trip(tmp_path):
    imgs = np.random.default_rng(0).integers(0, 256, (3, 5, 7), dtype=np.uint8)
    write_images(tmp_path / "x.bin", imgs)
    assert np.array_equal(read_images(tmp_path / "x.bin"), imgs)
    raw = (tmp_path / "x.bin").read_bytes()
    assert raw[:4] == b"SVIM" and len(raw) == 20 + imgs.size
    (tmp_path / "bad.bin").write_bytes(b"NOPE" + raw[4:])
    with pytest.raises(ConfigError):
        read_images(tmp_path / "bad.bin")


def test_dataset_round_trip(tmp_path, small, validate):
    save_dataset(small, tmp_path)
    validate(json.loads((tmp_path / "manifest.json").read_text()), "manifest")
    back = load_dataset(tmp_path)
    assert list(back.clips) == list(small.clips) and list(back.sketches) == list(small.sketches)
    for cid, c in small.clips.items():
        assert np.array_equal(back.clips[cid].frames, c.frames)
        for a, b in zip(back.clips[cid].objects, c.objects):
            assert np.array_equal(a.boxes, b.boxes) and a.categories == b.categories
    assert [p.pair_id for p in back.pairs("train")] == [p.pair_id for p in small.pairs("train")]
    with pytest.raises(ConfigError):
        load_dataset(tmp_path / "missing")
