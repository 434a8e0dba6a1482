"""Deterministic synthetic digit images for desk-scale runs without downloads."""

from __future__ import annotations

import numpy as np

from .data_io import Dataset

_GLYPH_ROWS = {
    0: ("01110", "10001", "10011", "10101", "11001", "10001", "01110"),
    1: ("00100", "01100", "00100", "00100", "00100", "00100", "01110"),
    2: ("01110", "10001", "00001", "00010", "00100", "01000", "11111"),
    3: ("11111", "00010", "00100", "00010", "00001", "10001", "01110"),
    4: ("00010", "00110", "01010", "10010", "11111", "00010", "00010"),
    5: ("11111", "10000", "11110", "00001", "00001", "10001", "01110"),
    6: ("00110", "01000", "10000", "11110", "10001", "10001", "01110"),
    7: ("11111", "00001", "00010", "00100", "01000", "01000", "01000"),
    8: ("01110", "10001", "10001", "01110", "10001", "10001", "01110"),
    9: ("01110", "10001", "10001", "01111", "00001", "00010", "01100"),
}

GLYPHS = {
    digit: np.array([[float(ch) for ch in row] for row in rows], dtype=np.float32)
    for digit, rows in _GLYPH_ROWS.items()
}

CANVAS = 28


def _render(digit: int, rng: np.random.Generator) -> np.ndarray:
    glyph = GLYPHS[digit]
    if rng.random() < 0.35:
        glyph = _thicken(glyph)
    sy = rng.uniform(2.4, 2.9)
    sx = rng.uniform(2.4, 2.9)
    gh, gw = int(glyph.shape[0] * sy), int(glyph.shape[1] * sx)
    rows = (np.arange(gh) / sy).astype(int).clip(0, glyph.shape[0] - 1)
    cols = (np.arange(gw) / sx).astype(int).clip(0, glyph.shape[1] - 1)
    big = glyph[rows][:, cols]

    canvas = np.zeros((CANVAS, CANVAS), dtype=np.float32)
    max_top = CANVAS - gh
    max_left = CANVAS - gw
    center_top, center_left = max_top // 2, max_left // 2
    top = int(np.clip(center_top + rng.integers(-2, 3), 0, max_top))
    left = int(np.clip(center_left + rng.integers(-2, 3), 0, max_left))
    canvas[top : top + gh, left : left + gw] = big * rng.uniform(0.75, 1.0)

    canvas = _soften(canvas)
    canvas += rng.normal(0.0, 0.02, canvas.shape).astype(np.float32)
    return np.clip(canvas, 0.0, 1.0)


def _thicken(glyph: np.ndarray) -> np.ndarray:
    out = glyph.copy()
    out[:, 1:] = np.maximum(out[:, 1:], glyph[:, :-1])
    return out


def _soften(img: np.ndarray) -> np.ndarray:
    # cheap 4-neighbor smoothing to take the hard edge off glyph blocks
    blur = img.copy()
    blur[1:, :] += img[:-1, :]
    blur[:-1, :] += img[1:, :]
    blur[:, 1:] += img[:, :-1]
    blur[:, :-1] += img[:, 1:]
    return (0.75 * img + 0.25 * blur / 5.0).astype(np.float32)


def generate_digits(n: int, seed: int = 0, name: str = "synth-digits") -> Dataset:
    """Balanced labeled digit set; same (n, seed) always yields the same bytes."""
    rng = np.random.default_rng(seed)
    labels = np.tile(np.arange(10), n // 10 + 1)[:n]
    labels = labels[rng.permutation(n)]
    images = np.stack([_render(int(d), rng) for d in labels])
    return Dataset(images, labels.astype(np.int64), name)
