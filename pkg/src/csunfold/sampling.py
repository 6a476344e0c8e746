"""Sampling operators and mean-subtraction sampling.

A sampling operator is an m x n matrix A with m < n.  Whitened
operators have exactly orthonormal rows (A A^T = I), the
maximum-likelihood-optimal shape for measurements contaminated by
isotropic signal noise, and are the default initialization here.

Mean-subtraction sampling measures a patch through the augmented matrix
[A; 1...1]: the extra all-ones row captures n times the patch pixel
mean, which is then subtracted from the raw measurement so downstream
reconstruction operates on zero-mean data:

    y = y_raw - A @ (mean * ones)   with   mean = y_extra / n.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, SingularityError


@dataclass
class SamplingOperator:
    """An m x n sampling matrix plus whitening/trainability metadata."""

    A: np.ndarray
    whitened: bool = False
    trainable: bool = True

    def __post_init__(self) -> None:
        self.A = np.asarray(self.A, dtype=float)
        if self.A.ndim != 2:
            raise DimensionError(f"sampling matrix must be 2-D, got shape {self.A.shape}")
        if not np.all(np.isfinite(self.A)):
            raise DimensionError("sampling matrix contains non-finite entries")

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]


@dataclass
class Measurement:
    """Result of mean-subtraction sampling of one patch batch.

    All fields are batched along the leading axis when the input was a
    (batch, n) array; for a single n-vector they are unbatched.
    ``patch_mean`` always equals ``mean_channel / n`` exactly.
    """

    y: np.ndarray
    y_raw: np.ndarray
    mean_channel: np.ndarray
    n: int
    patch_mean: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.patch_mean = self.mean_channel / self.n


def measurement_count(ratio: float, n: int) -> int:
    """Number of measurements for a compression ratio: round(ratio * n).

    Rounds half away from zero and clamps to [1, n - 1] so the operator
    always stays strictly compressive.
    """
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"ratio must lie in (0, 1], got {ratio}")
    m = int(np.floor(ratio * n + 0.5))
    return max(1, min(m, n - 1))


def init_whitened(m: int, n: int, seed: int = 0) -> SamplingOperator:
    """Draw a random operator with exactly orthonormal rows.

    An n x n Gaussian matrix is orthonormalized and m of its rows are
    selected uniformly at random, so A A^T = I_m holds by construction.
    """
    if not 1 <= m < n:
        raise DimensionError(f"need 1 <= m < n, got m={m}, n={n}")
    rng = np.random.default_rng(seed)
    gauss = rng.standard_normal((n, n))
    q, r = np.linalg.qr(gauss)
    # Fix the QR sign ambiguity so the distribution is Haar-uniform.
    q = q * np.sign(np.diag(r))
    rows = rng.choice(n, size=m, replace=False)
    return SamplingOperator(A=q[rows], whitened=True)


def whiten(A: np.ndarray) -> np.ndarray:
    """Orthonormalize the rows of A without changing its row space.

    Returns (A A^T)^{-1/2} A, computed through the economy SVD
    A = U S V^T as U V^T.  Requires full row rank.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] > A.shape[1]:
        raise DimensionError(f"expected a wide 2-D matrix, got shape {A.shape}")
    u, s, vt = np.linalg.svd(A, full_matrices=False)
    if s[-1] <= 1e-10 * s[0]:
        raise SingularityError(
            f"matrix is numerically rank deficient (sigma_min/sigma_max = {s[-1] / s[0]:.2e})"
        )
    return u @ vt


def augment(op: SamplingOperator) -> np.ndarray:
    """The (m+1) x n sampling matrix with an appended all-ones row."""
    return np.vstack([op.A, np.ones((1, op.n))])


def mss_sample(op: SamplingOperator, x_star: np.ndarray) -> Measurement:
    """Mean-subtraction sampling of one patch or a batch of patches.

    Computes the raw measurement A x*, the mean channel sum(x*) (the
    ones-row output of the augmented matrix), and the mean-subtracted
    measurement y = A x* - mean * (A 1).
    """
    x_star = np.asarray(x_star, dtype=float)
    single = x_star.ndim == 1
    xb = x_star[None, :] if single else x_star
    if xb.ndim != 2 or xb.shape[1] != op.n:
        raise DimensionError(
            f"patch vectors of length {op.n} required, got shape {x_star.shape}"
        )
    y_raw = xb @ op.A.T
    mean_channel = xb.sum(axis=1)
    ones_response = op.A.sum(axis=1)
    y = y_raw - np.outer(mean_channel / op.n, ones_response)
    if single:
        return Measurement(y=y[0], y_raw=y_raw[0], mean_channel=mean_channel[0], n=op.n)
    return Measurement(y=y, y_raw=y_raw, mean_channel=mean_channel, n=op.n)
