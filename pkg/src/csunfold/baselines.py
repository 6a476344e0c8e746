"""Non-learned reference solvers for the penalized CS problem.

Both solvers attack  min_x 0.5 ||y - A x||^2 + omega * g(x)  with an
l1 penalty g, either directly on the coefficients or after a Haar
transform of the square-reshaped vector.

``classical_solve`` is the alternating scheme on the augmented
Lagrangian with penalty weight rho: a soft-threshold z-step, a
multiplier step and an exact quadratic x-step.  ``ista_solve`` is
plain iterative soft thresholding.  They double as independent test
oracles for the learned pipeline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ConfigurationError, NumericError
from .sampling import SamplingOperator
from .wavelets import WaveletCoeffs, haar_dwt, haar_idwt


@dataclass
class ClassicalConfig:
    """Settings for :func:`classical_solve`."""

    rho: float = 1.0
    omega: float = 1e-3
    iters: int = 100
    threshold_transform: str = "identity"  # or "haar"

    def __post_init__(self) -> None:
        if self.iters < 1:
            raise ConfigurationError(f"iters must be >= 1, got {self.iters}")
        if self.rho <= 0 or self.omega <= 0:
            raise ConfigurationError("rho and omega must be positive")
        if self.threshold_transform not in ("identity", "haar"):
            raise ConfigurationError(
                f"unknown threshold transform {self.threshold_transform!r}"
            )


def soft_threshold(v: np.ndarray, t: float) -> np.ndarray:
    """Elementwise sign(v) * max(|v| - t, 0); the prox of t * ||.||_1."""
    if t < 0:
        raise ValueError(f"threshold must be nonnegative, got {t}")
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def _threshold_in_transform(v: np.ndarray, t: float, transform: str) -> np.ndarray:
    if transform == "identity":
        return soft_threshold(v, t)
    side = math.isqrt(v.size)
    if side * side != v.size:
        raise ConfigurationError(
            f"haar thresholding needs a square-reshapeable vector, got length {v.size}"
        )
    coeffs = haar_dwt(v.reshape(side, side))
    shrunk = WaveletCoeffs(*(soft_threshold(band, t) for band in coeffs.stack()))
    return haar_idwt(shrunk).reshape(-1)


def _l1_in_transform(v: np.ndarray, transform: str) -> float:
    if transform == "identity":
        return float(np.sum(np.abs(v)))
    side = math.isqrt(v.size)
    return float(np.sum(np.abs(haar_dwt(v.reshape(side, side)).stack())))


def augmented_lagrangian_value(
    op: SamplingOperator,
    y: np.ndarray,
    x: np.ndarray,
    z: np.ndarray,
    lam: np.ndarray,
    rho: float,
    omega: float,
    transform: str = "identity",
) -> float:
    """0.5||y - Ax||^2 + omega*||z||_1 + lam.(z - x) + rho/2 ||z - x||^2."""
    resid = y - op.A @ x
    return float(
        0.5 * resid @ resid
        + omega * _l1_in_transform(z, transform)
        + lam @ (z - x)
        + 0.5 * rho * np.sum((z - x) ** 2)
    )


def classical_solve(
    op: SamplingOperator,
    y: np.ndarray,
    cfg: ClassicalConfig,
    return_history: bool = False,
):
    """Alternating z / multiplier / x updates on the augmented Lagrangian.

    Starts from x = A^T y with a zero multiplier.  Each round applies

        z   <- shrink(x - lam / rho, omega / rho)
        lam <- lam + rho (z - x)
        x   <- (A^T A + rho I)^{-1} (A^T y + lam + rho z)

    and records the augmented Lagrangian value.  The z-step is the
    exact prox of the z-subproblem of the Lagrangian above (minimizing
    omega*g(z) + lam.z + rho/2 ||z - x||^2 completes the square at
    x - lam/rho); the x-step is the exact quadratic minimizer.  Returns
    the final x, or (x, history) when ``return_history`` is set.
    """
    a = op.A
    m, n = a.shape
    x = a.T @ y
    lam = np.zeros(n)
    z = np.zeros(n)
    gram = cho_factor(a @ a.T + cfg.rho * np.eye(m))

    def solve_quadratic(r: np.ndarray) -> np.ndarray:
        # (A^T A + rho I)^{-1} r  via the m x m Woodbury reduction
        return (r - a.T @ cho_solve(gram, a @ r)) / cfg.rho

    history = []
    for it in range(cfg.iters):
        z = _threshold_in_transform(x - lam / cfg.rho, cfg.omega / cfg.rho, cfg.threshold_transform)
        lam = lam + cfg.rho * (z - x)
        x = solve_quadratic(a.T @ y + lam + cfg.rho * z)
        if not np.all(np.isfinite(x)):
            raise NumericError(f"solver diverged at iteration {it}")
        history.append(
            augmented_lagrangian_value(
                op, y, x, z, lam, cfg.rho, cfg.omega, cfg.threshold_transform
            )
        )
    if return_history:
        return x, history
    return x


def ista_solve(
    op: SamplingOperator,
    y: np.ndarray,
    step: float,
    t: float,
    iters: int,
    return_history: bool = False,
):
    """Iterative soft thresholding for 0.5||y - Ax||^2 + t||x||_1.

    Requires step <= 1 / ||A||_2^2 so the objective is non-increasing;
    that monotonicity is asserted every iteration.
    """
    a = op.A
    spectral_sq = float(np.linalg.norm(a, 2) ** 2)
    if step > 1.0 / spectral_sq + 1e-12:
        raise ValueError(
            f"step {step} exceeds 1/||A||^2 = {1.0 / spectral_sq:.6g}"
        )
    x = np.zeros(a.shape[1])

    def objective(v: np.ndarray) -> float:
        r = y - a @ v
        return float(0.5 * r @ r + t * np.sum(np.abs(v)))

    prev = objective(x)
    history = [prev]
    for it in range(iters):
        x = soft_threshold(x + step * (a.T @ (y - a @ x)), step * t)
        curr = objective(x)
        if curr > prev + 1e-10:
            raise NumericError(
                f"objective increased at iteration {it}: {prev:.6g} -> {curr:.6g}"
            )
        prev = curr
        history.append(curr)
    if return_history:
        return x, history
    return x
