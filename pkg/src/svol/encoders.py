"""Patch-embedding encoders for video frames and sketches.

Each ``P x P`` patch of a grayscale image is flattened and mapped to ``C``
channels by one shared linear layer. Video frames keep the token grid; the
sketch is mean-pooled over its patches into a single vector.

A linear patch map has no idea where its patch sits. :func:`grid_code` is a
fixed 2-d sine/cosine code of each patch centre that the model adds to the
video tokens; without it nothing in the value stream carries location and box
regression has nothing to read.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError
from .tensor import Tensor


def patchify(images: np.ndarray, patch: int) -> np.ndarray:
    """``(..., S, S)`` -> ``(..., (S/P)**2, P*P)``, patches in row-major grid order."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim < 2 or images.shape[-1] != images.shape[-2]:
        raise ShapeError(f"expected square images, got shape {images.shape}")
    s = images.shape[-1]
    if patch <= 0 or s % patch:
        raise ConfigError(f"image size {s} is not divisible by patch size {patch}")
    g = s // patch
    lead = images.shape[:-2]
    x = images.reshape(*lead, g, patch, g, patch)
    x = np.moveaxis(x, -3, -2)  # (..., gy, gx, py, px)
    return x.reshape(*lead, g * g, patch * patch)


class PatchEmbed:
    def __init__(self, weight: Tensor, bias: Tensor, patch: int):
        self.weight = weight
        self.bias = bias
        self.patch = patch

    @classmethod
    def init(cls, patch: int, width: int, rng: np.random.Generator) -> "PatchEmbed":
        fan_in = patch * patch
        bound = 1.0 / math.sqrt(fan_in)
        w = Tensor(rng.uniform(-bound, bound, (fan_in, width)), requires_grad=True)
        b = Tensor(rng.uniform(-bound, bound, (width,)), requires_grad=True)
        return cls(w, b, patch)

    def __call__(self, images: np.ndarray) -> Tensor:
        return T.matmul(Tensor(patchify(images, self.patch)), self.weight) + self.bias


@lru_cache(maxsize=16)
def _grid_table(side: int, width: int) -> np.ndarray:
    if width % 4:
        raise ConfigError(f"grid code needs a width divisible by 4, got {width}")
    centre = (np.arange(side) + 0.5) / side
    gy, gx = np.meshgrid(centre, centre, indexing="ij")
    freqs = np.pi * 2.0 ** (np.arange(width // 4) / 2.0)
    parts = []
    for coord in (gx.ravel(), gy.ravel()):
        ang = coord[:, None] * freqs[None, :]
        parts += [np.sin(ang), np.cos(ang)]
    table = np.concatenate(parts, axis=1)
    table.setflags(write=False)
    return table


def grid_code(side: int, width: int) -> np.ndarray:
    """``(side*side, width)`` code of patch centres, row-major like :func:`patchify`.

    Columns are ``sin``/``cos`` of ``x`` then of ``y`` at ``width/4`` frequencies.
    """
    return _grid_table(side, width)


def encode_video(frames: np.ndarray, embed: PatchEmbed) -> Tensor:
    """``(..., L, S, S)`` frames -> ``(..., L, H*W, C)`` token grids."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim < 3:
        raise ShapeError(f"expected (..., L, S, S) frames, got {frames.shape}")
    return embed(frames)


def encode_sketch(sketch: np.ndarray, embed: PatchEmbed) -> Tensor:
    """``(..., S, S)`` sketch -> ``(..., C)`` mean of its patch embeddings."""
    return T.mean(embed(sketch), axis=-2)
