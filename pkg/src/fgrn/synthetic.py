"""Seeded synthetic RGB images for smoke tests and toy training runs."""
from __future__ import annotations

import numpy as np


def synthetic_image(h: int, w: int, rng: np.random.Generator) -> np.ndarray:
    """A (3, h, w) float64 image in [0, 1]: gradient background, a few flat
    shapes and an oriented sinusoidal texture."""
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    yy /= max(h - 1, 1)
    xx /= max(w - 1, 1)
    img = np.empty((3, h, w))
    for c in range(3):
        a, b, d = rng.uniform(-0.4, 0.4, 3)
        img[c] = 0.5 + a * xx + b * yy + d * xx * yy
    for _ in range(rng.integers(3, 7)):
        cy, cx = rng.uniform(0, 1, 2)
        ry, rx = rng.uniform(0.08, 0.3, 2)
        color = rng.uniform(0, 1, 3)
        if rng.random() < 0.5:
            mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        else:
            mask = (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
        img[:, mask] = color[:, None]
    theta = rng.uniform(0, np.pi)
    freq = rng.uniform(6, 14)
    wave = np.sin(2 * np.pi * freq * (np.cos(theta) * xx + np.sin(theta) * yy))
    img += 0.08 * wave[None] * rng.uniform(0.5, 1.0, 3)[:, None, None]
    return np.clip(img, 0.0, 1.0)


def synthetic_dataset(n: int, h: int, w: int | None = None, seed: int = 0) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    return [synthetic_image(h, w or h, rng) for _ in range(n)]
