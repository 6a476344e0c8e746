"""The unfolded reconstruction pipeline.

One forward pass maps whole images through:

  1. patch extraction and mean-subtraction sampling,
  2. an initial reconstruction (one fully-connected layer applied to
     the measurement),
  3. K reconstruction modules, each running four blocks:
       z-step     z = prox_net(lambda / rho + x_prev)
       multiplier lambda = lambda + rho * (z - x_prev), the stored
                  buffer being overwritten by the batch mean
       x-step     x = (A^T A + rho I)^{-1} (A^T y + lambda + rho z),
                  the exact minimizer of the quadratic subproblem
       refinement patches get their pixel means back, are spliced into
                  the whole image, pass a second residual CNN, and are
                  re-split (and re-zero-meaned) for the next module.

Each module owns an independent penalty scalar rho (softplus
reparameterized), its own proximal and refinement networks and a
persistent multiplier buffer.  Under the default ``detached`` coupling
the image signal is gradient-stopped between modules, so every module's
parameters are optimized against its own loss contribution only; the
``end2end`` coupling backpropagates through the whole chain instead.

All backward passes are hand-derived; ``tests/test_gradients.py``
verifies them against central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ConfigurationError, DimensionError, NumericError
from .imaging import (
    PatchGrid,
    assemble_from_patches,
    extract_patches,
    split_into_patches,
)
from .nets import Param, ProxNet, softplus, softplus_grad, softplus_inverse
from .sampling import SamplingOperator, measurement_count, init_whitened

COUPLING_MODES = ("detached", "end2end")
LAMBDA_MODES = ("buffer_mean", "per_sample_zero_init", "shared")
RHO_MODES = ("per_module", "shared")


class InitialReconstructor:
    """Single fully-connected layer mapping measurements to patches."""

    def __init__(self, w: np.ndarray, b: np.ndarray) -> None:
        self.w = Param(w, "irm.w")
        self.b = Param(b, "irm.b")

    @classmethod
    def adjoint_init(cls, op: SamplingOperator) -> "InitialReconstructor":
        """W = A^T, b = 0; exact on the measurable subspace when A is whitened."""
        return cls(op.A.T.copy(), np.zeros(op.n))

    def forward(self, y: np.ndarray) -> np.ndarray:
        return y @ self.w.value.T + self.b.value

    def backward(self, dout: np.ndarray, y: np.ndarray) -> np.ndarray:
        self.w.grad += dout.T @ y
        self.b.grad += dout.sum(axis=0)
        return dout @ self.w.value


class DRMState:
    """Learnables and the multiplier buffer of one reconstruction module."""

    def __init__(
        self,
        n: int,
        channels: int,
        rng: np.random.Generator,
        name: str,
        rho_init: float = 0.1,
        rho_param: Param | None = None,
    ) -> None:
        self.name = name
        if rho_param is None:
            rho_param = Param(np.array(softplus_inverse(rho_init)), f"{name}.rho_raw")
        self.rho_raw = rho_param
        self.prox = ProxNet(channels, rng, f"{name}.prox")
        self.hfc = ProxNet(channels, rng, f"{name}.hfc")
        self.lambda_buf = np.zeros(n)

    @property
    def rho(self) -> float:
        """The positive penalty scalar softplus(rho_raw)."""
        return softplus(float(self.rho_raw.value))


@dataclass
class ReconstructionTrace:
    """Every intermediate signal of one forward pass."""

    x0: np.ndarray
    z: list[np.ndarray] = field(default_factory=list)
    lambda_used: list[np.ndarray] = field(default_factory=list)
    x_tilde: list[np.ndarray] = field(default_factory=list)
    x_patches: list[np.ndarray] = field(default_factory=list)
    images: list[list[np.ndarray]] = field(default_factory=list)
    final_images: list[np.ndarray] = field(default_factory=list)


@dataclass
class RoundRecord:
    """Forward caches needed to run the matching backward pass."""

    grids: list[PatchGrid]
    slices: list[slice]
    x_star: np.ndarray
    x_centered: np.ndarray
    means: np.ndarray
    y: np.ndarray
    x0: np.ndarray
    modules: list[dict]
    trace: ReconstructionTrace


def _as_batch(v: np.ndarray) -> tuple[np.ndarray, bool]:
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        return v[None, :], True
    return v, False


# ---------------------------------------------------------------------------
# standalone block operations (the pipeline uses the same arithmetic)

def initial_reconstruct(ir: InitialReconstructor, y: np.ndarray) -> np.ndarray:
    """x0 = W y + b for one measurement or a batch of measurements."""
    yb, single = _as_batch(y)
    if yb.shape[1] != ir.w.value.shape[1]:
        raise DimensionError(
            f"measurement length {yb.shape[1]} does not match W {ir.w.value.shape}"
        )
    out = ir.forward(yb)
    return out[0] if single else out


def prox_apply(net: ProxNet, v: np.ndarray, train: bool = False) -> np.ndarray:
    """Apply the proximal network to a batch of patch vectors."""
    vb, single = _as_batch(v)
    side = int(round(np.sqrt(vb.shape[1])))
    if side * side != vb.shape[1]:
        raise ConfigurationError(
            f"patch vectors of length {vb.shape[1]} are not square-reshapeable"
        )
    out, _ = net.forward(vb.reshape(-1, 1, side, side), train=train)
    out = out.reshape(vb.shape)
    return out[0] if single else out


def z_update(state: DRMState, x_prev: np.ndarray, train: bool = False) -> np.ndarray:
    """z = prox_net(lambda_buf / rho + x_prev), buffer broadcast over the batch."""
    xb, single = _as_batch(x_prev)
    out = prox_apply(state.prox, state.lambda_buf / state.rho + xb, train=train)
    return out[0] if single else out


def lambda_round_values(
    lam_in: np.ndarray, rho: float, z: np.ndarray, x_prev: np.ndarray, mode: str
) -> tuple[np.ndarray, np.ndarray | None]:
    """Multiplier values used this round and the value to persist.

    ``buffer_mean``/``shared``: one shared vector, advanced by the batch
    mean of the per-sample updates.  ``per_sample_zero_init``: fresh
    per-sample multipliers rho * (z - x_prev), nothing persisted.
    """
    resid = z - x_prev
    if mode == "per_sample_zero_init":
        return rho * resid, None
    lam_used = lam_in + rho * resid.mean(axis=0)
    return lam_used, lam_used.copy()


def lambda_update(state: DRMState, z: np.ndarray, x_prev: np.ndarray) -> np.ndarray:
    """Overwrite the stored buffer with the batch-mean multiplier update."""
    zb, _ = _as_batch(z)
    xb, _ = _as_batch(x_prev)
    lam_used, new_buf = lambda_round_values(
        state.lambda_buf, state.rho, zb, xb, "buffer_mean"
    )
    state.lambda_buf[...] = new_buf
    return state.lambda_buf


def x_update(
    op: SamplingOperator,
    rho: float,
    y: np.ndarray,
    z: np.ndarray,
    lam: np.ndarray,
) -> np.ndarray:
    """Exact minimizer (A^T A + rho I)^{-1} (A^T y + lambda + rho z).

    Solved through the m x m system (A A^T + rho I) to avoid forming the
    n x n matrix; agrees with a dense solve to machine precision.
    """
    if rho <= 0:
        raise ConfigurationError(f"rho must be positive, got {rho}")
    yb, single = _as_batch(y)
    zb, _ = _as_batch(z)
    if not (np.all(np.isfinite(yb)) and np.all(np.isfinite(zb)) and np.all(np.isfinite(lam))):
        raise NumericError("non-finite inputs to the x-step")
    a = op.A
    gram = cho_factor(a @ a.T + rho * np.eye(op.m))
    r = yb @ a + lam + rho * zb
    out = (r - cho_solve(gram, (r @ a.T).T).T @ a) / rho
    return out[0] if single else out


def hfc_apply(
    state: DRMState,
    x_tilde: np.ndarray,
    patch_means: np.ndarray,
    grid: PatchGrid,
    train: bool = False,
    enabled: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Whole-image refinement of one image's patch batch.

    Adds the sampling-stage pixel means back, splices the padded mosaic,
    applies the refinement network with its global skip, then re-splits
    and re-subtracts the (new) per-patch means for the next module.
    Returns (next patch batch, cropped whole image).
    """
    if x_tilde.shape[0] != grid.count:
        raise DimensionError(
            f"{x_tilde.shape[0]} patches do not fill a {grid.rows}x{grid.cols} grid"
        )
    x_rec = x_tilde + np.asarray(patch_means).reshape(-1, 1)
    mosaic = assemble_from_patches(x_rec, grid.rows, grid.cols, grid.patch_side)
    if enabled:
        out4, _ = state.hfc.forward(mosaic[None, None], train=train)
        out = out4[0, 0]
    else:
        out = mosaic
    image = out[: grid.height, : grid.width].copy()
    nxt = split_into_patches(out, grid.patch_side)
    nxt = nxt - nxt.mean(axis=1, keepdims=True)
    return nxt, image


# ---------------------------------------------------------------------------
# the full pipeline

class ReconstructionPipeline:
    """Sampling operator + initial reconstructor + K modules."""

    def __init__(
        self,
        op: SamplingOperator,
        irm: InitialReconstructor,
        modules: list[DRMState],
        patch_side: int,
        coupling: str = "detached",
        lambda_mode: str = "per_sample_zero_init",
        mss_enabled: bool = True,
        hfc_enabled: bool = True,
    ) -> None:
        if coupling not in COUPLING_MODES:
            raise ConfigurationError(f"unknown coupling {coupling!r}")
        if lambda_mode not in LAMBDA_MODES:
            raise ConfigurationError(f"unknown lambda mode {lambda_mode!r}")
        if patch_side * patch_side != op.n:
            raise ConfigurationError(
                f"operator width {op.n} is not patch_side**2 = {patch_side**2}"
            )
        self.op = op
        self.irm = irm
        self.modules = modules
        self.patch_side = patch_side
        self.coupling = coupling
        self.lambda_mode = lambda_mode
        self.mss_enabled = mss_enabled
        self.hfc_enabled = hfc_enabled
        self.a_param: Param | None = None
        if op.trainable:
            self.a_param = Param(op.A, "sampling.A")
            op.A = self.a_param.value  # share storage with the operator
        self.shared_lambda = np.zeros(op.n)

    # -- parameter and state plumbing --------------------------------------

    @property
    def depth(self) -> int:
        return len(self.modules)

    def params(self) -> list[Param]:
        seen: dict[int, Param] = {}

        def add(p: Param) -> None:
            seen.setdefault(id(p), p)

        if self.a_param is not None:
            add(self.a_param)
        add(self.irm.w)
        add(self.irm.b)
        for st in self.modules:
            add(st.rho_raw)
            for p in st.prox.params() + st.hfc.params():
                add(p)
        return list(seen.values())

    def state_tensors(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {"shared_lambda": self.shared_lambda}
        for st in self.modules:
            out[f"{st.name}.lambda_buf"] = st.lambda_buf
            for key, val in {**st.prox.state(), **st.hfc.state()}.items():
                out[key] = val
        return out

    def zero_grads(self) -> None:
        for p in self.params():
            p.zero_grad()

    def reset_lambda(self) -> None:
        self.shared_lambda[...] = 0.0
        for st in self.modules:
            st.lambda_buf[...] = 0.0

    def _lambda_in(self, state: DRMState, running_shared: np.ndarray) -> np.ndarray:
        if self.lambda_mode == "per_sample_zero_init":
            return np.zeros(self.op.n)
        if self.lambda_mode == "shared":
            return running_shared
        return state.lambda_buf

    # -- forward ------------------------------------------------------------

    def run_batch(
        self,
        images: list[np.ndarray],
        train: bool = False,
        update_stats: bool = False,
        prox_override=None,
    ) -> RoundRecord:
        """Run the full pipeline over a batch of whole images.

        ``prox_override``, when given, replaces every module's proximal
        network with a plain function on patch batches (used to compare
        one module pass against the classical solver).
        """
        s = self.patch_side
        grids = [extract_patches(img, s) for img in images]
        slices = []
        start = 0
        for g in grids:
            slices.append(slice(start, start + g.count))
            start += g.count
        x_star = np.concatenate([g.patches for g in grids], axis=0)
        count = x_star.shape[0]
        if self.mss_enabled:
            means = x_star.mean(axis=1)
            x_centered = x_star - means[:, None]
        else:
            means = np.zeros(count)
            x_centered = x_star
        y = x_centered @ self.op.A.T
        return self._reconstruct_record(
            grids, slices, x_star, x_centered, means, y, train, update_stats, prox_override
        )

    def _reconstruct_record(
        self,
        grids,
        slices,
        x_star,
        x_centered,
        means,
        y,
        train,
        update_stats,
        prox_override=None,
    ) -> RoundRecord:
        s = self.patch_side
        n = self.op.n
        a = self.op.A
        count = y.shape[0]
        x0 = self.irm.forward(y)
        trace = ReconstructionTrace(x0=x0)

        x_prev = x0
        running_shared = self.shared_lambda.copy()
        module_recs: list[dict] = []
        for state in self.modules:
            rho = state.rho
            lam_in = self._lambda_in(state, running_shared)
            v = lam_in / rho + x_prev
            v4 = v.reshape(count, 1, s, s)
            if prox_override is not None:
                z4 = prox_override(v4)
                prox_cache = None
            else:
                z4, prox_cache = state.prox.forward(v4, train, update_stats)
            z = z4.reshape(count, n)
            lam_used, new_buf = lambda_round_values(lam_in, rho, z, x_prev, self.lambda_mode)
            if self.lambda_mode == "shared" and new_buf is not None:
                running_shared = new_buf
            gram = cho_factor(a @ a.T + rho * np.eye(self.op.m), check_finite=False)
            r = y @ a + lam_used + rho * z
            x_tilde = (r - cho_solve(gram, (r @ a.T).T, check_finite=False).T @ a) / rho
            if not np.all(np.isfinite(x_tilde)):
                raise NumericError(f"non-finite x-step output in module {state.name}")

            x_rec = x_tilde + means[:, None]
            hfc_in, hfc_out, hfc_caches, group_index = self._refine_images(
                state, x_rec, grids, slices, train, update_stats
            )
            images_k = [
                out[: g.height, : g.width].copy() for out, g in zip(hfc_out, grids)
            ]
            nxt = np.concatenate(
                [split_into_patches(out, s) for out in hfc_out], axis=0
            )
            if self.mss_enabled:
                row_means = nxt.mean(axis=1, keepdims=True)
                nxt = nxt - row_means

            module_recs.append(
                {
                    "state": state,
                    "rho": rho,
                    "lam_in": lam_in,
                    "v": v,
                    "prox_cache": prox_cache,
                    "z": z,
                    "x_prev": x_prev,
                    "lam_used": lam_used,
                    "new_buf": new_buf,
                    "gram": gram,
                    "x_tilde": x_tilde,
                    "hfc_caches": hfc_caches,
                    "group_index": group_index,
                    "x_next": nxt,
                }
            )
            trace.z.append(z)
            trace.lambda_used.append(lam_used)
            trace.x_tilde.append(x_tilde)
            trace.x_patches.append(nxt)
            trace.images.append(images_k)
            x_prev = nxt

        if self.modules:
            trace.final_images = list(trace.images[-1])
        else:
            x_rec = x0 + means[:, None]
            trace.final_images = [
                assemble_from_patches(x_rec[sl], g.rows, g.cols, s)[: g.height, : g.width]
                for sl, g in zip(slices, grids)
            ]
        return RoundRecord(
            grids=grids,
            slices=slices,
            x_star=x_star,
            x_centered=x_centered,
            means=means,
            y=y,
            x0=x0,
            modules=module_recs,
            trace=trace,
        )

    def _refine_images(self, state, x_rec, grids, slices, train, update_stats):
        """Splice each image's patches and run the refinement net.

        Images with identical padded shapes share one net call (and thus
        one set of batch statistics in training mode).
        """
        s = self.patch_side
        mosaics = [
            assemble_from_patches(x_rec[sl], g.rows, g.cols, s)
            for sl, g in zip(slices, grids)
        ]
        if not self.hfc_enabled:
            return mosaics, mosaics, None, None
        groups: dict[tuple[int, int], list[int]] = {}
        for i, mos in enumerate(mosaics):
            groups.setdefault(mos.shape, []).append(i)
        outs: list[np.ndarray | None] = [None] * len(mosaics)
        caches = {}
        for shape, idxs in groups.items():
            stacked = np.stack([mosaics[i] for i in idxs])[:, None]
            out4, cache = state.hfc.forward(stacked, train, update_stats)
            caches[shape] = cache
            for pos, i in enumerate(idxs):
                outs[i] = out4[pos, 0]
        return mosaics, outs, caches, groups

    def forward(self, image: np.ndarray) -> ReconstructionTrace:
        """Evaluation-mode pass over one whole image."""
        return self.run_batch([image], train=False, update_stats=False).trace

    def reconstruct(self, image: np.ndarray) -> np.ndarray:
        return self.forward(image).final_images[0]

    def reconstruct_from_measurements(
        self, y: np.ndarray, mean_channel: np.ndarray, grid: PatchGrid
    ) -> np.ndarray:
        """Reconstruct one image from stored measurements.

        ``y`` holds one mean-subtracted measurement row per patch and
        ``mean_channel`` the matching augmented-row outputs (patch pixel
        sums); the original pixels are not needed.
        """
        y = np.atleast_2d(np.asarray(y, dtype=float))
        if y.shape != (grid.count, self.op.m):
            raise DimensionError(
                f"measurements of shape {(grid.count, self.op.m)} required, got {y.shape}"
            )
        means = (
            np.asarray(mean_channel, dtype=float) / self.op.n
            if self.mss_enabled
            else np.zeros(grid.count)
        )
        placeholder = np.zeros((grid.count, self.op.n))
        rec = self._reconstruct_record(
            [grid],
            [slice(0, grid.count)],
            placeholder,
            placeholder,
            means,
            y,
            train=False,
            update_stats=False,
        )
        return rec.trace.final_images[0]

    def commit_lambda(self, rec: RoundRecord) -> None:
        """Persist the multiplier values computed during ``run_batch``."""
        if self.lambda_mode == "per_sample_zero_init":
            return
        if self.lambda_mode == "shared":
            if rec.modules:
                self.shared_lambda[...] = rec.modules[-1]["new_buf"]
            return
        for mod in rec.modules:
            mod["state"].lambda_buf[...] = mod["new_buf"]

    # -- backward -----------------------------------------------------------

    def _solve_rows(self, gram, rho: float, g: np.ndarray) -> np.ndarray:
        a = self.op.A
        return (g - cho_solve(gram, (g @ a.T).T, check_finite=False).T @ a) / rho

    def backward_batch(
        self,
        rec: RoundRecord,
        d_images: list[list[np.ndarray | None]],
        d_final_x0: list[np.ndarray | None] | None = None,
        module_range: tuple[int, int] | None = None,
    ) -> None:
        """Accumulate parameter gradients for image-domain loss gradients.

        ``d_images[k][i]`` is the loss gradient on module k's refined
        (cropped) image for batch image i, or None.  ``d_final_x0``
        seeds the module-free output (used when the pipeline has no
        modules).  ``module_range`` restricts the sweep to modules
        [lo, hi) for per-module loss probes.
        """
        s = self.patch_side
        a = self.op.A
        count = rec.x_star.shape[0]
        g_y = np.zeros_like(rec.y)
        carry: list[np.ndarray | None] = [None] * len(rec.grids)
        dx0_total = np.zeros_like(rec.x0)

        if d_final_x0 is not None:
            for i, (g, sl) in enumerate(zip(rec.grids, rec.slices)):
                seed = d_final_x0[i]
                if seed is None:
                    continue
                padded = np.zeros((g.rows * s, g.cols * s))
                padded[: g.height, : g.width] = seed
                dx0_total[sl] += split_into_patches(padded, s)

        lo, hi = (0, len(rec.modules)) if module_range is None else module_range
        for k in range(hi - 1, lo - 1, -1):
            mod = rec.modules[k]
            state: DRMState = mod["state"]
            rho = mod["rho"]
            d_xrec = np.zeros((count, self.op.n))
            any_seed = False
            # gradient arriving on this module's refined images
            per_image_pad: list[np.ndarray | None] = [None] * len(rec.grids)
            for i, g in enumerate(rec.grids):
                seed = d_images[k][i] if k < len(d_images) else None
                gpad = None
                if seed is not None:
                    gpad = np.zeros((g.rows * s, g.cols * s))
                    gpad[: g.height, : g.width] = seed
                if carry[i] is not None:
                    gpad = carry[i] if gpad is None else gpad + carry[i]
                per_image_pad[i] = gpad
                if gpad is not None:
                    any_seed = True
            carry = [None] * len(rec.grids)
            if not any_seed:
                continue

            if self.hfc_enabled:
                for shape, idxs in mod["group_index"].items():
                    seeds = [per_image_pad[i] for i in idxs]
                    if all(sd is None for sd in seeds):
                        continue
                    stacked = np.stack(
                        [np.zeros(shape) if sd is None else sd for sd in seeds]
                    )[:, None]
                    # ProxNet.backward already carries its global skip
                    d_t = state.hfc.backward(stacked, mod["hfc_caches"][shape])
                    for pos, i in enumerate(idxs):
                        d_xrec[rec.slices[i]] += split_into_patches(d_t[pos, 0], s)
            else:
                for i, gpad in enumerate(per_image_pad):
                    if gpad is not None:
                        d_xrec[rec.slices[i]] += split_into_patches(gpad, s)

            # x_rec = x_tilde + means (means are data)
            d_xt = d_xrec
            # x-step backward
            u = self._solve_rows(mod["gram"], rho, d_xt)
            x_tilde, z, x_prev = mod["x_tilde"], mod["z"], mod["x_prev"]
            d_rho = float(np.sum(u * z) - np.sum(u * x_tilde))
            g_y += u @ a.T
            if self.a_param is not None:
                self.a_param.grad += rec.y.T @ u
                self.a_param.grad -= (a @ u.T) @ x_tilde + (a @ x_tilde.T) @ u
            dz = rho * u
            dx_prev = np.zeros_like(x_prev)
            # multiplier backward
            resid = z - x_prev
            if self.lambda_mode == "per_sample_zero_init":
                d_rho += float(np.sum(u * resid))
                dz += rho * u
                dx_prev -= rho * u
            else:
                d_lam = u.sum(axis=0)
                d_rho += float(d_lam @ resid.mean(axis=0))
                dz += (rho / count) * d_lam[None, :]
                dx_prev -= (rho / count) * d_lam[None, :]
            # z backward through the proximal net
            if mod["prox_cache"] is None:
                raise NumericError("cannot backpropagate through an injected prox")
            dv4 = state.prox.backward(dz.reshape(count, 1, s, s), mod["prox_cache"])
            dv = dv4.reshape(count, self.op.n)
            dx_prev += dv
            lam_in = mod["lam_in"]
            d_rho -= float(dv.sum(axis=0) @ lam_in) / (rho * rho)
            state.rho_raw.grad += d_rho * softplus_grad(float(state.rho_raw.value))

            # propagate into the previous module (or the IRM)
            if k == 0:
                dx0_total += dx_prev
            elif self.coupling == "end2end":
                if self.mss_enabled:
                    dx_prev = dx_prev - dx_prev.mean(axis=1, keepdims=True)
                for i, (g, sl) in enumerate(zip(rec.grids, rec.slices)):
                    carry[i] = assemble_from_patches(dx_prev[sl], g.rows, g.cols, s)
            # detached coupling: dx_prev is dropped at the boundary

        if np.any(dx0_total):
            g_y += self.irm.backward(dx0_total, rec.y)
        if self.a_param is not None:
            self.a_param.grad += g_y.T @ rec.x_centered


def build_pipeline(
    ratio: float,
    patch_side: int,
    channels: int,
    depth: int,
    seed: int,
    coupling: str = "detached",
    lambda_mode: str = "per_sample_zero_init",
    rho_mode: str = "per_module",
    mss_enabled: bool = True,
    hfc_enabled: bool = True,
    rho_init: float = 0.1,
    trainable_matrix: bool = True,
) -> ReconstructionPipeline:
    """Assemble a freshly initialized pipeline.

    The operator is whitened-initialized at m = round(ratio * n)
    measurements, the initial reconstructor starts at the operator
    adjoint and each module's rho starts at ``rho_init``.  With
    ``rho_mode='shared'`` all modules reference one rho parameter.
    """
    if rho_mode not in RHO_MODES:
        raise ConfigurationError(f"unknown rho mode {rho_mode!r}")
    n = patch_side * patch_side
    m = measurement_count(ratio, n)
    op = init_whitened(m, n, seed=seed)
    op.trainable = trainable_matrix
    rng = np.random.default_rng(seed + 1)
    irm = InitialReconstructor.adjoint_init(op)
    shared_rho = (
        Param(np.array(softplus_inverse(rho_init)), "shared.rho_raw")
        if rho_mode == "shared"
        else None
    )
    modules = [
        DRMState(n, channels, rng, f"drm{k:02d}", rho_init=rho_init, rho_param=shared_rho)
        for k in range(depth)
    ]
    return ReconstructionPipeline(
        op,
        irm,
        modules,
        patch_side,
        coupling=coupling,
        lambda_mode=lambda_mode,
        mss_enabled=mss_enabled,
        hfc_enabled=hfc_enabled,
    )
