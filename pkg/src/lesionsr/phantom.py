"""Synthetic phantom slices for desk-scale experiments.

Each phantom has a smooth background, a few anatomy-like ellipses, and one
high-contrast textured lesion whose support defines the segmentation mask.
Pixel values are quantized to the 16-bit grid so that saving to 16-bit PNG
and loading back is lossless.
"""

from __future__ import annotations

import numpy as np

from .data import ImageSlice, SegMask
from .errors import InvalidInputError

QUANT_LEVELS = 65535


def _ellipse(grid_y, grid_x, cy, cx, ry, rx, angle):
    ct, st = np.cos(angle), np.sin(angle)
    dy = grid_y - cy
    dx = grid_x - cx
    u = (dx * ct + dy * st) / rx
    v = (-dx * st + dy * ct) / ry
    return u * u + v * v  # <= 1 inside


def _make_slice(size: int, rng: np.random.Generator) -> tuple[ImageSlice, SegMask]:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)

    # Smooth background: gentle gradient plus two broad gaussian bumps.
    gx, gy = rng.uniform(-0.15, 0.15, size=2)
    img = 0.35 + gx * (xx / size - 0.5) + gy * (yy / size - 0.5)
    for _ in range(2):
        cy, cx = rng.uniform(0.2 * size, 0.8 * size, size=2)
        sigma = rng.uniform(0.25, 0.45) * size
        amp = rng.uniform(0.05, 0.15)
        img += amp * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * sigma**2))

    # Anatomy: 2-4 soft-edged ellipses with moderate contrast.
    for _ in range(int(rng.integers(2, 5))):
        cy, cx = rng.uniform(0.15 * size, 0.85 * size, size=2)
        ry, rx = rng.uniform(0.08 * size, 0.25 * size, size=2)
        angle = rng.uniform(0, np.pi)
        d = _ellipse(yy, xx, cy, cx, ry, rx, angle)
        soft = np.clip(1.0 - d, 0.0, 1.0) ** 0.7
        img += rng.uniform(-0.18, 0.18) * soft

    # Lesion: one high-contrast blob with internal high-frequency texture.
    lr_margin = 0.22 * size
    cy, cx = rng.uniform(lr_margin, size - lr_margin, size=2)
    ry, rx = rng.uniform(0.10 * size, 0.16 * size, size=2)
    angle = rng.uniform(0, np.pi)
    d = _ellipse(yy, xx, cy, cx, ry, rx, angle)
    inside = d <= 1.0
    # Texture lives above the LR Nyquist (scale-4 block means kill it), so
    # interpolation baselines cannot recover it while a trained model can.
    fy, fx = rng.uniform(0.30, 0.48, size=2)  # cycles/pixel, near HR Nyquist
    phase_y, phase_x = rng.uniform(0, 2 * np.pi, size=2)
    texture = np.sin(2 * np.pi * fy * yy + phase_y) * np.sin(2 * np.pi * fx * xx + phase_x)
    speckle = rng.normal(0.0, 1.0, size=(size, size))
    lesion = 0.30 + 0.42 * texture + 0.04 * speckle
    img = np.where(inside, img + lesion, img)

    img = np.clip(img, 0.0, 1.0)
    img = np.round(img * QUANT_LEVELS) / QUANT_LEVELS  # 16-bit grid, lossless round trip

    mask = SegMask(inside.astype(np.uint8))
    assert mask.pixels.any()
    return ImageSlice(img), mask


def synth_phantom_corpus(n: int, hr_size: int, seed: int) -> list[tuple[ImageSlice, SegMask]]:
    """Generate ``n`` deterministic phantom (slice, mask) pairs."""
    if n < 1:
        raise InvalidInputError(f"n must be >= 1, got {n}")
    if hr_size % 4:
        raise InvalidInputError(f"hr_size must be divisible by 4, got {hr_size}")
    rng = np.random.default_rng(seed)
    return [_make_slice(hr_size, rng) for _ in range(n)]
