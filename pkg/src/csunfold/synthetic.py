"""Synthetic grayscale images for desk-scale experiments and tests.

Real benchmark datasets are large; these generators produce small
piecewise-smooth images from a shared distribution so that training
runs can demonstrate genuine generalization in seconds.
"""

from __future__ import annotations

import numpy as np


def random_smooth_images(
    count: int,
    height: int = 33,
    width: int = 33,
    seed: int = 0,
    waves: int = 4,
    blobs: int = 2,
) -> list[np.ndarray]:
    """Random superpositions of low-frequency waves and Gaussian bumps.

    Every image is independently drawn and normalized to span [0, 1].
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.meshgrid(
        np.linspace(0.0, 1.0, height), np.linspace(0.0, 1.0, width), indexing="ij"
    )
    images = []
    for _ in range(count):
        img = np.zeros((height, width))
        for _ in range(waves):
            fy, fx = rng.uniform(0.5, 3.0, size=2)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            amp = rng.uniform(0.4, 1.0)
            img += amp * np.cos(2.0 * np.pi * (fy * yy + fx * xx) + phase)
        for _ in range(blobs):
            cy, cx = rng.uniform(0.15, 0.85, size=2)
            sigma = rng.uniform(0.08, 0.2)
            amp = rng.uniform(-1.0, 1.0)
            img += amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma**2))
        lo, hi = img.min(), img.max()
        images.append((img - lo) / (hi - lo) if hi > lo else np.zeros_like(img))
    return images


def save_images_as_png(images: list[np.ndarray], directory, prefix: str = "img") -> list:
    """Write images as 8-bit PNGs; returns the created paths."""
    from pathlib import Path

    from PIL import Image as PILImage

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, img in enumerate(images):
        arr = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
        path = directory / f"{prefix}{i:03d}.png"
        PILImage.fromarray(arr).save(path)
        paths.append(path)
    return paths
