"""Training losses: wavelet sub-band loss, pixel MSE and their blend.

The wavelet loss compares the Haar sub-bands of each original image
against those of every refined whole image the pipeline produced for
it, averaging squared Frobenius distances over the N images and the K
refinement stages.  The MSE loss compares originals against final
outputs only, normalized per pixel.  The total training objective is

    total = mse + gamma * wavelet      (gamma defaults to 0.01)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError
from .wavelets import haar_dwt

DEFAULT_GAMMA = 0.01


@dataclass
class LossReport:
    """Loss values for one batch; ``total == mse + gamma * wt`` holds."""

    mse: float
    wt: float
    gamma: float
    per_module_wt: list[float] = field(default_factory=list)

    @property
    def total(self) -> float:
        return self.mse + self.gamma * self.wt


def _band_sq_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Squared Frobenius distance between stacked Haar sub-bands."""
    ca, cb = haar_dwt(a), haar_dwt(b)
    return float(np.sum((ca.stack() - cb.stack()) ** 2))


def wavelet_loss(
    originals: list[np.ndarray],
    refined: list[list[np.ndarray]],
) -> float:
    """Mean squared sub-band distance over N images x K stages.

    ``refined[j]`` holds the K whole-image refinement outputs produced
    for ``originals[j]``; all must share the original's shape.
    """
    if len(refined) != len(originals):
        raise DimensionError(
            f"{len(originals)} originals but {len(refined)} refinement groups"
        )
    n_images = len(originals)
    if n_images == 0:
        return 0.0
    k = len(refined[0])
    if k == 0:
        return 0.0
    acc = 0.0
    for orig, outs in zip(originals, refined):
        if len(outs) != k:
            raise DimensionError("refinement groups have inconsistent lengths")
        for out in outs:
            if out.shape != orig.shape:
                raise DimensionError(
                    f"refined shape {out.shape} differs from original {orig.shape}"
                )
            acc += _band_sq_distance(orig, out)
    return acc / (n_images * k)


def mse_loss(originals: list[np.ndarray], finals: list[np.ndarray]) -> float:
    """Per-pixel mean squared error averaged over the image batch."""
    if len(finals) != len(originals):
        raise DimensionError(f"{len(originals)} originals but {len(finals)} outputs")
    if not originals:
        return 0.0
    acc = 0.0
    for orig, out in zip(originals, finals):
        if out.shape != orig.shape:
            raise DimensionError(
                f"output shape {out.shape} differs from original {orig.shape}"
            )
        acc += float(np.sum((orig - out) ** 2)) / orig.size
    return acc / len(originals)


def total_loss(mse: float, wt: float, gamma: float = DEFAULT_GAMMA) -> float:
    """Blend the pixel and wavelet objectives."""
    return mse + gamma * wt
