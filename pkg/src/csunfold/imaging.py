"""Image ingestion and the patch <-> image plumbing.

Images are plain 2-D float64 arrays with intensities in [0, 1].  A
whole image is tiled by non-overlapping square patches; the bottom and
right edges are reflect-padded up to the next multiple of the patch
side, and each patch is rasterized row-major into a flat vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .errors import ConfigurationError, DimensionError, IngestionError

# ITU-R BT.601 luma weights for RGB -> gray conversion.
_LUMA = np.array([0.299, 0.587, 0.114])

_SUPPORTED_SUFFIXES = {".png", ".bmp", ".pgm"}


@dataclass
class PatchGrid:
    """A whole image split into non-overlapping ``patch_side**2`` vectors.

    ``patches`` has shape (rows * cols, patch_side**2), one row-major
    rasterized patch per row, patches ordered row-major over the grid.
    ``height``/``width`` are the original (unpadded) image dimensions.
    """

    patch_side: int
    rows: int
    cols: int
    pad_bottom: int
    pad_right: int
    height: int
    width: int
    patches: np.ndarray

    @property
    def n(self) -> int:
        return self.patch_side * self.patch_side

    @property
    def count(self) -> int:
        return self.rows * self.cols


def to_grayscale(pixels: np.ndarray) -> np.ndarray:
    """Collapse an (h, w, 3) RGB array to (h, w) using BT.601 luma."""
    if pixels.ndim == 2:
        return pixels
    if pixels.ndim == 3 and pixels.shape[2] in (3, 4):
        return pixels[:, :, :3] @ _LUMA
    raise DimensionError(f"cannot interpret shape {pixels.shape} as an image")


def load_image(path: str | Path) -> np.ndarray:
    """Read one image file as a grayscale [0, 1] float array.

    Integer inputs are normalized by their dtype maximum (255 for 8-bit,
    65535 for 16-bit), so a full-scale pixel maps to exactly 1.0.
    """
    path = Path(path)
    try:
        with PILImage.open(path) as img:
            mode = img.mode
            arr = np.asarray(img)
    except Exception as exc:
        raise IngestionError(f"cannot read image file {path}: {exc}") from exc
    arr = arr.astype(float)
    if mode in ("I;16", "I;16B", "I;16L", "I"):
        arr = arr / 65535.0
    elif mode == "F":
        pass
    elif mode == "1":
        pass
    else:
        arr = arr / 255.0
    gray = to_grayscale(arr)
    if not np.all(np.isfinite(gray)):
        raise IngestionError(f"non-finite pixel values in {path}")
    return np.clip(gray, 0.0, 1.0)


def load_dataset(
    path: str | Path,
    split_spec: tuple[float, ...] = (1.0,),
    seed: int = 0,
) -> tuple[list[np.ndarray], ...]:
    """Load every supported image under ``path`` and split it.

    Files are discovered recursively, ordered by a seeded shuffle of the
    sorted file list, and partitioned according to ``split_spec`` (its
    fractions must sum to 1).  The same seed always yields the same
    split membership and ordering.
    """
    path = Path(path)
    if not path.is_dir():
        raise ConfigurationError(f"dataset directory does not exist: {path}")
    if abs(sum(split_spec) - 1.0) > 1e-9:
        raise ConfigurationError(f"split fractions must sum to 1, got {split_spec}")
    files = sorted(
        p for p in path.rglob("*") if p.suffix.lower() in _SUPPORTED_SUFFIXES
    )
    if not files:
        raise ConfigurationError(f"no {sorted(_SUPPORTED_SUFFIXES)} images under {path}")
    order = np.random.default_rng(seed).permutation(len(files))
    images = [load_image(files[i]) for i in order]
    bounds = np.floor(np.cumsum(np.asarray(split_spec)) * len(images) + 0.5).astype(int)
    bounds[-1] = len(images)
    pieces = []
    start = 0
    for stop in bounds:
        pieces.append(images[start:stop])
        start = stop
    return tuple(pieces)


def extract_patches(image: np.ndarray, patch_side: int) -> PatchGrid:
    """Tile ``image`` with non-overlapping ``patch_side`` squares.

    The image is reflect-padded on the bottom/right to the next multiple
    of ``patch_side``; patches are taken row-major and rasterized
    row-major into vectors.
    """
    image = np.asarray(image, dtype=float)
    if patch_side < 2:
        raise ConfigurationError(f"patch_side must be >= 2, got {patch_side}")
    if image.ndim != 2 or image.shape[0] < 1 or image.shape[1] < 1:
        raise DimensionError(f"expected a non-empty 2-D image, got shape {image.shape}")
    h, w = image.shape
    rows = math.ceil(h / patch_side)
    cols = math.ceil(w / patch_side)
    pad_bottom = rows * patch_side - h
    pad_right = cols * patch_side - w
    padded = np.pad(image, ((0, pad_bottom), (0, pad_right)), mode="symmetric")
    patches = split_into_patches(padded, patch_side)
    return PatchGrid(
        patch_side=patch_side,
        rows=rows,
        cols=cols,
        pad_bottom=pad_bottom,
        pad_right=pad_right,
        height=h,
        width=w,
        patches=patches,
    )


def split_into_patches(padded: np.ndarray, patch_side: int) -> np.ndarray:
    """Rearrange an exactly-tileable image into (count, n) patch vectors."""
    h, w = padded.shape
    if h % patch_side or w % patch_side:
        raise DimensionError(
            f"image {h}x{w} is not an exact multiple of patch side {patch_side}"
        )
    rows, cols = h // patch_side, w // patch_side
    blocks = padded.reshape(rows, patch_side, cols, patch_side)
    return blocks.transpose(0, 2, 1, 3).reshape(rows * cols, patch_side * patch_side)


def assemble_from_patches(patches: np.ndarray, rows: int, cols: int, patch_side: int) -> np.ndarray:
    """Inverse of :func:`split_into_patches`; returns the padded mosaic."""
    count, n = patches.shape
    if count != rows * cols or n != patch_side * patch_side:
        raise DimensionError(
            f"{count} patches of length {n} do not form a {rows}x{cols} grid "
            f"of side {patch_side}"
        )
    blocks = patches.reshape(rows, cols, patch_side, patch_side)
    return blocks.transpose(0, 2, 1, 3).reshape(rows * patch_side, cols * patch_side)


def splice_patches(grid: PatchGrid) -> np.ndarray:
    """Reassemble a :class:`PatchGrid` and crop away the padding.

    ``splice_patches(extract_patches(image, s))`` reproduces ``image``
    bit-exactly.
    """
    mosaic = assemble_from_patches(grid.patches, grid.rows, grid.cols, grid.patch_side)
    return mosaic[: grid.height, : grid.width].copy()
