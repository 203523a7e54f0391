"""Procedural rasterization of playing-card suit glyphs.

Glyphs are unions of circles, triangles and rectangles in a [-1, 1]^2
frame, rasterized by supersampled point-in-shape tests.  No font assets:
builds stay hermetic.
"""

from __future__ import annotations

import numpy as np

SUITS = ("spades", "hearts", "diamonds", "clubs")


def _circle(px, py, cx, cy, r):
    return (px - cx) ** 2 + (py - cy) ** 2 <= r * r


def _triangle(px, py, a, b, c):
    # half-plane sign tests; vertices in any winding order
    def side(p0, p1):
        return (p1[0] - p0[0]) * (py - p0[1]) - (p1[1] - p0[1]) * (px - p0[0])

    d1, d2, d3 = side(a, b), side(b, c), side(c, a)
    neg = (d1 < 0) | (d2 < 0) | (d3 < 0)
    pos = (d1 > 0) | (d2 > 0) | (d3 > 0)
    return ~(neg & pos)


def _rect(px, py, x0, x1, y0, y1):
    return (px >= x0) & (px <= x1) & (py >= y0) & (py <= y1)


def _mask_hearts(px, py):
    lobes = _circle(px, py, -0.28, 0.28, 0.40) | _circle(px, py, 0.28, 0.28, 0.40)
    body = _triangle(px, py, (-0.66, 0.18), (0.66, 0.18), (0.0, -0.85))
    return lobes | body


def _mask_spades(px, py):
    lobes = _circle(px, py, -0.27, -0.10, 0.36) | _circle(px, py, 0.27, -0.10, 0.36)
    body = _triangle(px, py, (-0.62, -0.02), (0.62, -0.02), (0.0, 0.85))
    stem = _rect(px, py, -0.07, 0.07, -0.80, -0.10)
    foot = _triangle(px, py, (-0.30, -0.82), (0.30, -0.82), (0.0, -0.45))
    return lobes | body | stem | foot


def _mask_diamonds(px, py):
    return (np.abs(px) / 0.58 + np.abs(py) / 0.85) <= 1.0


def _mask_clubs(px, py):
    top = _circle(px, py, 0.0, 0.40, 0.31)
    left = _circle(px, py, -0.31, -0.08, 0.31)
    right = _circle(px, py, 0.31, -0.08, 0.31)
    stem = _rect(px, py, -0.07, 0.07, -0.80, -0.05)
    foot = _triangle(px, py, (-0.30, -0.82), (0.30, -0.82), (0.0, -0.45))
    return top | left | right | stem | foot


_MASKS = {
    "spades": _mask_spades,
    "hearts": _mask_hearts,
    "diamonds": _mask_diamonds,
    "clubs": _mask_clubs,
}


def render_suit(suit, size, rotation_deg=0.0, shear=0.0, supersample=3):
    """Render one suit glyph as a (size, size) ink image in [0, 1].

    The glyph frame is rotated by `rotation_deg` and sheared horizontally
    by `shear` before sampling; pixels are supersampled for soft edges.
    """
    if suit not in _MASKS:
        raise KeyError(f"unknown suit {suit!r}")
    if size < 8:
        raise ValueError("suit glyphs need a patch extent of at least 8")
    s = supersample
    n = size * s
    # pixel-center coordinates of the supersampled grid, y up
    ticks = (np.arange(n) + 0.5) / n * 2.0 - 1.0
    px, py = np.meshgrid(ticks, -ticks)
    # inverse transform of shear(k) @ rot(theta)
    theta = np.deg2rad(rotation_deg)
    fwd = np.array([[1.0, shear], [0.0, 1.0]]) @ np.array(
        [[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]]
    )
    inv = np.linalg.inv(fwd)
    gx = inv[0, 0] * px + inv[0, 1] * py
    gy = inv[1, 0] * px + inv[1, 1] * py
    mask = _MASKS[suit](gx, gy).astype(np.float64)
    return mask.reshape(size, s, size, s).mean(axis=(1, 3))
