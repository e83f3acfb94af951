"""Synthetic moving-glyph videos, outline sketches and the pairing protocol."""
from .dataset import (Dataset, SamplePair, build_dataset, curate_pairs, dataset_stats, load_dataset,
                      save_dataset, split_categories, style_split)
from .glyphs import GlyphCategory, categories
from .render import PRESETS, ClipSpec, ObjectSpec, SketchStyle, render_clip, render_sketch

__all__ = ["Dataset", "SamplePair", "build_dataset", "curate_pairs", "dataset_stats", "load_dataset",
           "save_dataset", "split_categories", "style_split", "GlyphCategory", "categories",
           "PRESETS", "ClipSpec", "ObjectSpec", "SketchStyle", "render_clip", "render_sketch"]
