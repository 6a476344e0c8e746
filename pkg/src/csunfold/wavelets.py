"""One-level orthonormal Haar decomposition of 2-D images.

The transform splits an even-sized image into four half-resolution
sub-bands.  With the orthonormal weights (+-1/2 per 2x2 block) the
transform preserves energy exactly, so squared coefficient distances
equal squared pixel distances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError


@dataclass(frozen=True)
class WaveletCoeffs:
    """Sub-band coefficients of a one-level Haar decomposition.

    ``LL`` is the coarse approximation; ``LH``, ``HL`` and ``HH`` carry
    the horizontal, vertical and diagonal detail.  Each band has half
    the resolution of the (even-padded) input.
    """

    LL: np.ndarray
    LH: np.ndarray
    HL: np.ndarray
    HH: np.ndarray

    def stack(self) -> np.ndarray:
        """All four bands as one (4, h/2, w/2) array."""
        return np.stack([self.LL, self.LH, self.HL, self.HH])

    def energy(self) -> float:
        """Sum of squared coefficients over all bands."""
        return float(sum(np.sum(b * b) for b in (self.LL, self.LH, self.HL, self.HH)))


def pad_to_even(image: np.ndarray) -> tuple[np.ndarray, int, int]:
    """Reflect-pad the bottom/right edge so both dimensions are even.

    Returns the padded image and the (0 or 1) amounts added per axis.
    """
    h, w = image.shape
    pad_b = h % 2
    pad_r = w % 2
    if pad_b or pad_r:
        image = np.pad(image, ((0, pad_b), (0, pad_r)), mode="symmetric")
    return image, pad_b, pad_r


def pad_to_even_adjoint(grad: np.ndarray, pad_b: int, pad_r: int) -> np.ndarray:
    """Adjoint of :func:`pad_to_even`: fold padded-cell gradients back."""
    if pad_b:
        grad = grad.copy()
        grad[-2, :] += grad[-1, :]
        grad = grad[:-1, :]
    if pad_r:
        grad = grad.copy()
        grad[:, -2] += grad[:, -1]
        grad = grad[:, :-1]
    return grad


def haar_dwt(image: np.ndarray) -> WaveletCoeffs:
    """One-level orthonormal Haar transform.

    Odd-sized inputs are reflect-padded to even first.  For a 2x2 block
    [[a, b], [c, d]] the coefficients are

        LL = (a + b + c + d) / 2      LH = (a - b + c - d) / 2
        HL = (a + b - c - d) / 2      HH = (a - b - c + d) / 2

    which keeps ``sum(coeffs**2) == sum(pixels**2)`` exactly.
    """
    image = np.asarray(image, dtype=float)
    if image.ndim != 2 or image.size == 0:
        raise DimensionError(f"expected a non-empty 2-D image, got shape {image.shape}")
    image, _, _ = pad_to_even(image)
    a = image[0::2, 0::2]
    b = image[0::2, 1::2]
    c = image[1::2, 0::2]
    d = image[1::2, 1::2]
    return WaveletCoeffs(
        LL=(a + b + c + d) / 2.0,
        LH=(a - b + c - d) / 2.0,
        HL=(a + b - c - d) / 2.0,
        HH=(a - b - c + d) / 2.0,
    )


def haar_idwt(coeffs: WaveletCoeffs) -> np.ndarray:
    """Invert :func:`haar_dwt` (exact for even-sized originals)."""
    LL, LH, HL, HH = coeffs.LL, coeffs.LH, coeffs.HL, coeffs.HH
    if not (LL.shape == LH.shape == HL.shape == HH.shape):
        raise DimensionError("sub-band shapes disagree")
    hh, hw = LL.shape
    out = np.empty((2 * hh, 2 * hw), dtype=float)
    out[0::2, 0::2] = (LL + LH + HL + HH) / 2.0
    out[0::2, 1::2] = (LL - LH + HL - HH) / 2.0
    out[1::2, 0::2] = (LL + LH - HL - HH) / 2.0
    out[1::2, 1::2] = (LL - LH - HL + HH) / 2.0
    return out
