"""Glyph categories: each is one or more closed outlines in unit coordinates.

Outlines live in ``[-1, 1]^2`` with +y pointing down (image convention).
Filled rendering uses the even-odd rule, so a ring is two concentric loops.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GlyphCategory:
    id: int
    name: str
    loops: tuple[np.ndarray, ...]
    smooth: bool = False   # outline approximates a curve; abstraction decimates it

    @property
    def num_vertices(self) -> int:
        return sum(len(p) for p in self.loops)


def _circle(n=48, r=1.0, cx=0.0, cy=0.0, a0=0.0, a1=2 * np.pi, closed=True):
    t = np.linspace(a0, a1, n, endpoint=not closed)
    return np.stack([cx + r * np.cos(t), cy + r * np.sin(t)], axis=1)


def _regular(n, r=1.0, phase=-np.pi / 2):
    t = phase + 2 * np.pi * np.arange(n) / n
    return np.stack([r * np.cos(t), r * np.sin(t)], axis=1)


def _star(points, r_out=1.0, r_in=0.45):
    t = -np.pi / 2 + np.pi * np.arange(2 * points) / points
    r = np.where(np.arange(2 * points) % 2 == 0, r_out, r_in)
    return np.stack([r * np.cos(t), r * np.sin(t)], axis=1)


def _poly(*pts):
    return np.array(pts, dtype=np.float64)


def _heart(n=48):
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    x = 16 * np.sin(t) ** 3
    y = 13 * np.cos(t) - 5 * np.cos(2 * t) - 2 * np.cos(3 * t) - np.cos(4 * t)
    pts = np.stack([x, -y], axis=1)
    pts -= (pts.max(0) + pts.min(0)) / 2
    return pts / np.abs(pts).max()


def _crescent(n=24):
    # unit disc minus a disc of radius 0.85 centred at (0.45, 0)
    d, r2 = 0.45, 0.85
    x = (d * d + 1.0 - r2 * r2) / (2 * d)
    a_out = np.arctan2(np.sqrt(1 - x * x), x)
    a_in = np.arctan2(np.sqrt(1 - x * x), x - d)
    outer = _circle(n, 1.0, a0=a_out, a1=2 * np.pi - a_out, closed=False)
    inner = _circle(n, r2, cx=d, a0=2 * np.pi - a_in, a1=a_in, closed=False)
    pts = np.concatenate([outer, inner[1:-1]])
    pts -= (pts.max(0) + pts.min(0)) / 2
    return pts / np.abs(pts).max()


def _semicircle(n=32):
    arc = _circle(n, 1.0, a0=np.pi, a1=2 * np.pi, closed=False)
    pts = arc + np.array([0.0, 0.5])
    return pts / np.abs(pts).max()


_DEFS = [
    ("circle", lambda: (_circle(),), True),
    ("square", lambda: (_poly((-1, -1), (1, -1), (1, 1), (-1, 1)),), False),
    ("triangle", lambda: (_poly((0, -1), (1, 1), (-1, 1)),), False),
    ("star", lambda: (_star(5),), False),
    ("cross", lambda: (_poly((-0.35, -1), (0.35, -1), (0.35, -0.35), (1, -0.35), (1, 0.35),
                             (0.35, 0.35), (0.35, 1), (-0.35, 1), (-0.35, 0.35), (-1, 0.35),
                             (-1, -0.35), (-0.35, -0.35)),), False),
    ("ring", lambda: (_circle(), _circle(r=0.55)), True),
    ("diamond", lambda: (_poly((0, -1), (0.7, 0), (0, 1), (-0.7, 0)),), False),
    ("hexagon", lambda: (_regular(6, phase=0.0),), False),
    ("arrow", lambda: (_poly((-1, -0.3), (0.1, -0.3), (0.1, -0.9), (1, 0), (0.1, 0.9),
                             (0.1, 0.3), (-1, 0.3)),), False),
    ("heart", lambda: (_heart(),), True),
    ("crescent", lambda: (_crescent(),), True),
    ("pentagon", lambda: (_regular(5),), False),
    ("trapezoid", lambda: (_poly((-0.5, -0.7), (0.5, -0.7), (1, 0.7), (-1, 0.7)),), False),
    ("chevron", lambda: (_poly((-1, -1), (0, -0.2), (1, -1), (1, -0.1), (0, 0.9), (-1, -0.1)),), False),
    ("hourglass", lambda: (_poly((-0.8, -1), (0.8, -1), (0.1, 0), (0.8, 1), (-0.8, 1), (-0.1, 0)),), False),
    ("tee", lambda: (_poly((-1, -1), (1, -1), (1, -0.4), (0.3, -0.4), (0.3, 1), (-0.3, 1),
                           (-0.3, -0.4), (-1, -0.4)),), False),
    ("ell", lambda: (_poly((-0.8, -1), (-0.2, -1), (-0.2, 0.4), (0.8, 0.4), (0.8, 1), (-0.8, 1)),), False),
    ("star4", lambda: (_star(4, r_in=0.35),), False),
    ("semicircle", lambda: (_semicircle(),), True),
    ("frame", lambda: (_poly((-1, -1), (1, -1), (1, 1), (-1, 1)),
                       _poly((-0.55, -0.55), (0.55, -0.55), (0.55, 0.55), (-0.55, 0.55))), False),
]

ALL_NAMES = tuple(name for name, _, _ in _DEFS)


def categories(n: int | None = None) -> list[GlyphCategory]:
    """The first ``n`` glyph categories (all of them by default)."""
    n = len(_DEFS) if n is None else n
    if not 1 <= n <= len(_DEFS):
        raise ValueError(f"between 1 and {len(_DEFS)} categories are available, asked for {n}")
    out = []
    for i, (name, make, smooth) in enumerate(_DEFS[:n]):
        loops = tuple(np.asarray(p, dtype=np.float64) for p in make())
        out.append(GlyphCategory(i, name, loops, smooth))
    return out


def by_name(name: str) -> GlyphCategory:
    for c in categories():
        if c.name == name:
            return c
    raise KeyError(name)
