"""Procedural "pristine" images for desk-scale experiments.

Each image is a smooth colour gradient with low-frequency shading, a handful
of anti-aliased shapes and a patch of fine texture. Nothing here is meant to
look natural; it only has to be clean, sharp, mid-exposed and varied.
"""
from __future__ import annotations

import numpy as np

from .imaging import gaussian_blur
from .rng import derive_rng

REFERENCE_SEED = 20240917


def _shape_mask(rng, yy, xx, h, w):
    cy, cx = rng.uniform(0, h), rng.uniform(0, w)
    size = rng.uniform(0.08, 0.3) * min(h, w)
    kind = rng.integers(3)
    if kind == 0:
        d = np.hypot(yy - cy, xx - cx) - size
    elif kind == 1:
        ry, rx = size * rng.uniform(0.4, 1.0), size
        theta = rng.uniform(0, np.pi)
        u = (xx - cx) * np.cos(theta) + (yy - cy) * np.sin(theta)
        v = -(xx - cx) * np.sin(theta) + (yy - cy) * np.cos(theta)
        d = (np.sqrt((u / rx) ** 2 + (v / ry) ** 2) - 1) * min(rx, ry)
    else:
        hy, hx = size * rng.uniform(0.3, 1.0), size
        d = np.maximum(np.abs(yy - cy) - hy, np.abs(xx - cx) - hx)
    return np.clip(0.5 - d, 0.0, 1.0)  # one-pixel anti-aliased edge


def make_image(seed: int, index: int, size: int = 128) -> np.ndarray:
    rng = derive_rng(seed, "procedural", index)
    h = w = size
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)

    theta = rng.uniform(0, 2 * np.pi)
    ramp = ((xx * np.cos(theta) + yy * np.sin(theta)) / size + 1) / 2
    c0, c1 = rng.uniform(0.25, 0.7, 3), rng.uniform(0.25, 0.7, 3)
    img = c0 + (c1 - c0) * ramp[..., None]

    shade = gaussian_blur(rng.standard_normal((h, w)), size / 8)
    img += 0.6 * shade[..., None] / (np.abs(shade).max() + 1e-12) * 0.15

    for _ in range(rng.integers(5, 11)):
        m = _shape_mask(rng, yy, xx, h, w)[..., None]
        img = img * (1 - m) + rng.uniform(0.1, 0.9, 3) * m

    # fine texture inside one region
    cy, cx, r = rng.uniform(0, h), rng.uniform(0, w), rng.uniform(0.2, 0.45) * size
    region = np.clip((r - np.hypot(yy - cy, xx - cx)) / 2, 0, 1)
    freq = rng.uniform(0.25, 0.6)
    phi = rng.uniform(0, np.pi)
    grating = np.sin(freq * (xx * np.cos(phi) + yy * np.sin(phi)))
    texture = 0.08 * grating + 0.04 * gaussian_blur(rng.standard_normal((h, w)), 0.7) / 0.25
    img += (region * texture)[..., None]
    return np.clip(img, 0.02, 0.98)


def make_images(seed: int, count: int, size: int = 128, start: int = 0) -> list[np.ndarray]:
    return [make_image(seed, start + i, size) for i in range(count)]


def reference_set(size: int = 128) -> list[np.ndarray]:
    """The fixed 10-image set used for severity checks."""
    return make_images(REFERENCE_SEED, 10, size)
