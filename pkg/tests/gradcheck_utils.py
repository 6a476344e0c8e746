"""Finite-difference helpers shared by the gradient tests."""

import numpy as np


def central_difference(loss_fn, param_value, idx, h=1e-6):
    """Central finite difference of a scalar loss along one coordinate."""
    orig = param_value[idx]
    param_value[idx] = orig + h
    plus = loss_fn()
    param_value[idx] = orig - h
    minus = loss_fn()
    param_value[idx] = orig
    return (plus - minus) / (2.0 * h)


def relative_error(a, b, floor=1e-12):
    denom = max(abs(a), abs(b), floor)
    return abs(a - b) / denom


def check_param_gradients(loss_and_backward, loss_only, params, rng, coords_per_param=3, h=1e-6, tol=1e-5):
    """Compare analytic parameter gradients against central differences.

    ``loss_and_backward`` runs a full forward+backward, accumulating
    gradients on the given params and returning the loss value.
    ``loss_only`` recomputes the loss without touching gradients.
    Returns the list of (name, index, analytic, numeric) failures.
    """
    for p in params:
        p.zero_grad()
    loss_and_backward()
    failures = []
    for p in params:
        flat_val = p.value.reshape(-1)
        flat_grad = p.grad.reshape(-1)
        size = flat_val.size
        count = min(coords_per_param, size)
        picks = rng.choice(size, size=count, replace=False)
        for idx in picks:
            numeric = central_difference(loss_only, flat_val, idx, h=h)
            analytic = flat_grad[idx]
            # absolute floor absorbs FD roundoff (~eps * loss / h) on
            # directions whose true gradient is zero
            if relative_error(analytic, numeric) > tol and abs(analytic - numeric) > 5e-8:
                failures.append((p.name, int(idx), float(analytic), float(numeric)))
    return failures
