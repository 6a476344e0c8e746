"""A small conv-net engine with explicit forward/backward passes.

Everything runs on float64 numpy arrays.  Layers are functional: each
``forward`` returns (output, cache) and each ``backward`` consumes the
upstream gradient plus that cache, accumulates parameter gradients in
place, and returns the input gradient.  This keeps every pass reentrant
(a layer may be applied several times per round) and makes the analytic
gradients directly checkable against finite differences.

The only architecture used by the reconstruction pipeline is
:class:`ProxNet`, a residual refiner with a global skip connection:

    out = x + conv2(relu(bn2(res2(relu(res1(relu(bn1(conv1(x)))))))))

It serves both as the learned proximal operator applied to patch
batches and as the whole-image high-frequency refinement stage.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError


class Param:
    """A learnable array with an accumulated gradient buffer."""

    def __init__(self, value: np.ndarray, name: str = "") -> None:
        self.value = np.array(value, dtype=float)
        self.grad = np.zeros_like(self.value)
        self.name = name

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def __repr__(self) -> str:  # pragma: no cover
        return f"Param({self.name!r}, shape={self.value.shape})"


# ---------------------------------------------------------------------------
# reflect padding (pad width 1, used by the 3x3 convolutions)

def reflect_pad1(x: np.ndarray) -> np.ndarray:
    """Pad the two trailing axes by 1 with edge-excluding reflection."""
    return np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)), mode="reflect")


def reflect_pad1_adjoint(gp: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`reflect_pad1`: fold border gradients inward."""
    g = gp[:, :, 1:-1, 1:-1].copy()
    g[:, :, 1, :] += gp[:, :, 0, 1:-1]
    g[:, :, -2, :] += gp[:, :, -1, 1:-1]
    g[:, :, :, 1] += gp[:, :, 1:-1, 0]
    g[:, :, :, -2] += gp[:, :, 1:-1, -1]
    g[:, :, 1, 1] += gp[:, :, 0, 0]
    g[:, :, 1, -2] += gp[:, :, 0, -1]
    g[:, :, -2, 1] += gp[:, :, -1, 0]
    g[:, :, -2, -2] += gp[:, :, -1, -1]
    return g


def _im2col3(xp: np.ndarray, h: int, w: int) -> np.ndarray:
    """Stack the nine 3x3 taps of a padded (B, C, h+2, w+2) tensor.

    Returns a (B, C * 9, h * w) column matrix.
    """
    b, c = xp.shape[:2]
    cols = np.empty((b, c, 9, h, w))
    idx = 0
    for di in range(3):
        for dj in range(3):
            cols[:, :, idx] = xp[:, :, di : di + h, dj : dj + w]
            idx += 1
    return cols.reshape(b, c * 9, h * w)


def _col2im3(dcols: np.ndarray, b: int, c: int, h: int, w: int) -> np.ndarray:
    """Scatter-add column gradients back onto the padded tensor."""
    dcols = dcols.reshape(b, c, 9, h, w)
    dxp = np.zeros((b, c, h + 2, w + 2))
    idx = 0
    for di in range(3):
        for dj in range(3):
            dxp[:, :, di : di + h, dj : dj + w] += dcols[:, :, idx]
            idx += 1
    return dxp


class Conv2d:
    """3x3 convolution with stride 1 and reflect same-padding."""

    def __init__(
        self,
        c_in: int,
        c_out: int,
        rng: np.random.Generator,
        name: str = "conv",
        zero_init: bool = False,
    ) -> None:
        self.c_in = c_in
        self.c_out = c_out
        fan_in = c_in * 9
        if zero_init:
            w = np.zeros((c_out, c_in, 3, 3))
        else:
            w = rng.standard_normal((c_out, c_in, 3, 3)) * np.sqrt(2.0 / fan_in)
        self.w = Param(w, f"{name}.w")
        self.b = Param(np.zeros(c_out), f"{name}.b")

    def params(self) -> list[Param]:
        return [self.w, self.b]

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, tuple]:
        b, c, h, w = x.shape
        if c != self.c_in:
            raise DimensionError(f"expected {self.c_in} input channels, got {c}")
        cols = _im2col3(reflect_pad1(x), h, w)
        # merge the batch into the GEMM so BLAS sees one wide multiply
        flat = cols.transpose(1, 0, 2).reshape(self.c_in * 9, b * h * w)
        w2 = self.w.value.reshape(self.c_out, self.c_in * 9)
        out = (w2 @ flat).reshape(self.c_out, b, h, w).transpose(1, 0, 2, 3)
        out = out + self.b.value[None, :, None, None]
        return out, (flat, (b, c, h, w))

    def backward(self, dout: np.ndarray, cache: tuple) -> np.ndarray:
        flat, (b, c, h, w) = cache
        d2 = dout.transpose(1, 0, 2, 3).reshape(self.c_out, b * h * w)
        self.b.grad += dout.sum(axis=(0, 2, 3))
        self.w.grad += (d2 @ flat.T).reshape(self.w.value.shape)
        w2 = self.w.value.reshape(self.c_out, self.c_in * 9)
        dflat = w2.T @ d2  # (c_in*9, b*h*w)
        dcols = dflat.reshape(self.c_in * 9, b, h * w).transpose(1, 0, 2)
        return reflect_pad1_adjoint(_col2im3(dcols, b, c, h, w))


class BatchNorm2d:
    """Per-channel batch normalization with running statistics.

    Training mode normalizes with the (biased) batch statistics and can
    fold them into the running buffers; evaluation mode normalizes with
    the running buffers, making each sample independent of the batch.
    """

    def __init__(self, c: int, name: str = "bn", momentum: float = 0.1, eps: float = 1e-5) -> None:
        self.gamma = Param(np.ones(c), f"{name}.gamma")
        self.beta = Param(np.zeros(c), f"{name}.beta")
        self.running_mean = np.zeros(c)
        self.running_var = np.ones(c)
        self.momentum = momentum
        self.eps = eps
        self.name = name

    def params(self) -> list[Param]:
        return [self.gamma, self.beta]

    def state(self) -> dict[str, np.ndarray]:
        return {
            f"{self.name}.running_mean": self.running_mean,
            f"{self.name}.running_var": self.running_var,
        }

    def forward(
        self, x: np.ndarray, train: bool, update_stats: bool = False
    ) -> tuple[np.ndarray, tuple]:
        if train:
            mu = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            if update_stats:
                self.running_mean += self.momentum * (mu - self.running_mean)
                self.running_var += self.momentum * (var - self.running_var)
        else:
            mu, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mu[None, :, None, None]) * inv_std[None, :, None, None]
        out = self.gamma.value[None, :, None, None] * xhat + self.beta.value[None, :, None, None]
        return out, (xhat, inv_std, train)

    def backward(self, dout: np.ndarray, cache: tuple) -> np.ndarray:
        xhat, inv_std, train = cache
        self.gamma.grad += np.sum(dout * xhat, axis=(0, 2, 3))
        self.beta.grad += np.sum(dout, axis=(0, 2, 3))
        dxhat = dout * self.gamma.value[None, :, None, None]
        if not train:
            return dxhat * inv_std[None, :, None, None]
        b, _, h, w = dout.shape
        count = b * h * w
        sum_d = dxhat.sum(axis=(0, 2, 3))
        sum_dx = np.sum(dxhat * xhat, axis=(0, 2, 3))
        return (
            inv_std[None, :, None, None]
            / count
            * (count * dxhat - sum_d[None, :, None, None] - xhat * sum_dx[None, :, None, None])
        )


def relu(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mask = x > 0.0
    return x * mask, mask


def relu_backward(dout: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return dout * mask


class ResidualBlock:
    """conv -> BN -> ReLU -> conv with an additive skip connection."""

    def __init__(self, c: int, rng: np.random.Generator, name: str = "res") -> None:
        self.conv_a = Conv2d(c, c, rng, f"{name}.conv_a")
        self.bn = BatchNorm2d(c, f"{name}.bn")
        self.conv_b = Conv2d(c, c, rng, f"{name}.conv_b")

    def params(self) -> list[Param]:
        return self.conv_a.params() + self.bn.params() + self.conv_b.params()

    def state(self) -> dict[str, np.ndarray]:
        return self.bn.state()

    def forward(self, x, train: bool, update_stats: bool = False):
        h1, c1 = self.conv_a.forward(x)
        h2, c2 = self.bn.forward(h1, train, update_stats)
        h3, c3 = relu(h2)
        h4, c4 = self.conv_b.forward(h3)
        return x + h4, (c1, c2, c3, c4)

    def backward(self, dout, cache):
        c1, c2, c3, c4 = cache
        d = self.conv_b.backward(dout, c4)
        d = relu_backward(d, c3)
        d = self.bn.backward(d, c2)
        d = self.conv_a.backward(d, c1)
        return dout + d


class ProxNet:
    """Residual refiner CNN with a global input-output skip.

    Structure: feature extraction (conv1 -> BN -> ReLU), feature
    enhancement (two residual blocks with a ReLU between them) and
    feature aggregation (BN -> ReLU -> conv2), added back onto the
    input.  The final convolution starts at zero so a freshly
    initialized net is exactly the identity map.
    """

    def __init__(self, channels: int, rng: np.random.Generator, name: str = "prox") -> None:
        self.channels = channels
        self.name = name
        self.conv1 = Conv2d(1, channels, rng, f"{name}.conv1")
        self.bn1 = BatchNorm2d(channels, f"{name}.bn1")
        self.res1 = ResidualBlock(channels, rng, f"{name}.res1")
        self.res2 = ResidualBlock(channels, rng, f"{name}.res2")
        self.bn2 = BatchNorm2d(channels, f"{name}.bn2")
        self.conv2 = Conv2d(channels, 1, rng, f"{name}.conv2", zero_init=True)

    def params(self) -> list[Param]:
        return (
            self.conv1.params()
            + self.bn1.params()
            + self.res1.params()
            + self.res2.params()
            + self.bn2.params()
            + self.conv2.params()
        )

    def state(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for part in (self.bn1, self.res1, self.res2, self.bn2):
            out.update(part.state())
        return out

    def forward(self, x: np.ndarray, train: bool, update_stats: bool = False):
        """Apply to a (B, 1, H, W) tensor; returns (out, cache)."""
        if x.ndim != 4 or x.shape[1] != 1:
            raise DimensionError(f"expected (B, 1, H, W) input, got shape {x.shape}")
        h1, c1 = self.conv1.forward(x)
        h2, c2 = self.bn1.forward(h1, train, update_stats)
        h3, m3 = relu(h2)
        h4, c4 = self.res1.forward(h3, train, update_stats)
        h5, m5 = relu(h4)
        h6, c6 = self.res2.forward(h5, train, update_stats)
        h7, c7 = self.bn2.forward(h6, train, update_stats)
        h8, m8 = relu(h7)
        h9, c9 = self.conv2.forward(h8)
        return x + h9, (c1, c2, m3, c4, m5, c6, c7, m8, c9)

    def backward(self, dout: np.ndarray, cache) -> np.ndarray:
        c1, c2, m3, c4, m5, c6, c7, m8, c9 = cache
        d = self.conv2.backward(dout, c9)
        d = relu_backward(d, m8)
        d = self.bn2.backward(d, c7)
        d = self.res2.backward(d, c6)
        d = relu_backward(d, m5)
        d = self.res1.backward(d, c4)
        d = relu_backward(d, m3)
        d = self.bn1.backward(d, c2)
        d = self.conv1.backward(d, c1)
        return dout + d

    def zero_all_parameters(self) -> None:
        """Set every learnable tensor to zero (identity behaviour)."""
        for p in self.params():
            p.value[...] = 0.0


def softplus(x: float) -> float:
    """Numerically stable log(1 + exp(x))."""
    return float(np.logaddexp(0.0, x))


def softplus_grad(x: float) -> float:
    """Derivative of softplus: the logistic sigmoid."""
    return float(1.0 / (1.0 + np.exp(-x)))


def softplus_inverse(y: float) -> float:
    """Inverse of softplus for y > 0: log(exp(y) - 1)."""
    return float(np.log(np.expm1(y)))
