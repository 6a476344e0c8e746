"""Training harness: Adam, batched rounds, evaluation and ablations.

A training round takes one batch of whole images (all patches of an
image stay in the same round), runs the pipeline forward, computes the
blended loss, backpropagates, applies one Adam step over every
learnable parameter and then commits the multiplier buffers.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ConfigurationError, NumericError
from .losses import LossReport, mse_loss, wavelet_loss
from .metrics import psnr, ssim
from .nets import Param
from .unfolding import (
    COUPLING_MODES,
    LAMBDA_MODES,
    RHO_MODES,
    ReconstructionPipeline,
    RoundRecord,
    build_pipeline,
)
from .wavelets import WaveletCoeffs, haar_dwt, haar_idwt, pad_to_even, pad_to_even_adjoint

LOSS_MODES = ("mse_only", "total")


@dataclass
class TrainConfig:
    """Everything needed to reproduce one training run."""

    ratio: float = 0.25
    K: int = 9
    epochs: int = 100
    batch_size: int = 64
    lr: float = 1e-3
    gamma: float = 0.01
    coupling: str = "detached"
    rho_mode: str = "per_module"
    # fresh per-round multipliers; the persistent buffer_mean reading is
    # selectable but its update rule doubles the buffer whenever the
    # proximal net is near the identity, which diverges within tens of
    # rounds (see tests/test_training.py)
    lambda_mode: str = "per_sample_zero_init"
    mss_enabled: bool = True
    hfc_enabled: bool = True
    loss_mode: str = "total"
    seed: int = 0
    patch_side: int = 33
    channels: int = 32

    def __post_init__(self) -> None:
        if self.K < 0:
            raise ConfigurationError(f"K must be >= 0, got {self.K}")
        if not 0.0 < self.ratio <= 1.0:
            raise ConfigurationError(f"ratio must lie in (0, 1], got {self.ratio}")
        # lr == 0 is allowed: a zero step size must leave parameters untouched
        if self.lr < 0.0:
            raise ConfigurationError(f"lr must be nonnegative, got {self.lr}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigurationError(f"epochs must be >= 0, got {self.epochs}")
        if self.coupling not in COUPLING_MODES:
            raise ConfigurationError(f"unknown coupling {self.coupling!r}")
        if self.rho_mode not in RHO_MODES:
            raise ConfigurationError(f"unknown rho_mode {self.rho_mode!r}")
        if self.lambda_mode not in LAMBDA_MODES:
            raise ConfigurationError(f"unknown lambda_mode {self.lambda_mode!r}")
        if self.loss_mode not in LOSS_MODES:
            raise ConfigurationError(f"unknown loss_mode {self.loss_mode!r}")


class Adam:
    """Adam with in-place parameter updates and name-keyed moments."""

    def __init__(
        self,
        params: list[Param],
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {p.name: np.zeros_like(p.value) for p in self.params}
        self.v = {p.name: np.zeros_like(p.value) for p in self.params}

    def step(self) -> None:
        self.step_count += 1
        b1c = 1.0 - self.beta1**self.step_count
        b2c = 1.0 - self.beta2**self.step_count
        for p in self.params:
            m = self.m[p.name]
            v = self.v[p.name]
            m += (1.0 - self.beta1) * (p.grad - m)
            v += (1.0 - self.beta2) * (p.grad * p.grad - v)
            p.value -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def pipeline_from_config(config: TrainConfig) -> ReconstructionPipeline:
    return build_pipeline(
        ratio=config.ratio,
        patch_side=config.patch_side,
        channels=config.channels,
        depth=config.K,
        seed=config.seed,
        coupling=config.coupling,
        lambda_mode=config.lambda_mode,
        rho_mode=config.rho_mode,
        mss_enabled=config.mss_enabled,
        hfc_enabled=config.hfc_enabled,
    )


def _wavelet_seed(original: np.ndarray, output: np.ndarray, scale: float) -> np.ndarray:
    """Gradient of scale * ||bands(output) - bands(original)||^2 wrt output."""
    out_pad, pb, pr = pad_to_even(output)
    orig_pad, _, _ = pad_to_even(original)
    diff = haar_dwt(out_pad).stack() - haar_dwt(orig_pad).stack()
    grad_pad = 2.0 * scale * haar_idwt(WaveletCoeffs(*diff))
    return pad_to_even_adjoint(grad_pad, pb, pr)


def _per_module_wavelet(images, trace_images, depth):
    values = []
    for k in range(depth):
        values.append(wavelet_loss(images, [[trace_images[k][j]] for j in range(len(images))]))
    return values


def run_round(
    pipeline: ReconstructionPipeline,
    images: list[np.ndarray],
    gamma: float,
    loss_mode: str = "total",
    train: bool = True,
    update_stats: bool = True,
    compute_grads: bool = True,
) -> tuple[LossReport, RoundRecord]:
    """One forward (and optionally backward) pass over an image batch.

    Gradients are accumulated onto the pipeline parameters; callers
    zero them beforehand and apply the optimizer step afterwards.
    """
    rec = pipeline.run_batch(images, train=train, update_stats=update_stats)
    depth = pipeline.depth
    n_images = len(images)
    finals = rec.trace.final_images
    mse = mse_loss(images, finals)
    per_module_wt = _per_module_wavelet(images, rec.trace.images, depth)
    wt = float(np.mean(per_module_wt)) if depth else 0.0
    gamma_used = gamma if loss_mode == "total" else 0.0
    report = LossReport(mse=mse, wt=wt, gamma=gamma_used, per_module_wt=per_module_wt)

    if not compute_grads:
        return report, rec

    if depth == 0:
        d_final = [
            2.0 * (out - orig) / (orig.size * n_images)
            for orig, out in zip(images, finals)
        ]
        pipeline.backward_batch(rec, [], d_final_x0=d_final)
        return report, rec

    d_images: list[list[np.ndarray | None]] = [
        [None] * n_images for _ in range(depth)
    ]
    wt_scale = gamma_used / (n_images * depth)
    for j, orig in enumerate(images):
        for k in range(depth):
            seed = None
            if wt_scale > 0.0:
                seed = _wavelet_seed(orig, rec.trace.images[k][j], wt_scale)
            if k == depth - 1:
                mse_seed = 2.0 * (finals[j] - orig) / (orig.size * n_images)
                seed = mse_seed if seed is None else seed + mse_seed
            d_images[k][j] = seed
    pipeline.backward_batch(rec, d_images)
    return report, rec


@dataclass
class EvaluationReport:
    """Per-image and mean reconstruction quality."""

    per_image: list[dict]
    mean_psnr: float
    mean_ssim: float


def evaluate_pipeline(
    pipeline: ReconstructionPipeline, images: list[np.ndarray]
) -> EvaluationReport:
    rows = []
    for i, img in enumerate(images):
        out = pipeline.reconstruct(img)
        rows.append({"index": i, "psnr": psnr(img, out), "ssim": ssim(img, out)})
    return EvaluationReport(
        per_image=rows,
        mean_psnr=float(np.mean([r["psnr"] for r in rows])),
        mean_ssim=float(np.mean([r["ssim"] for r in rows])),
    )


@dataclass
class TrainResult:
    last: "Checkpoint"
    best: "Checkpoint"
    history: list[dict]


def train(
    config: TrainConfig,
    train_images: list[np.ndarray],
    val_images: list[np.ndarray],
) -> TrainResult:
    """Run the full optimization loop described by ``config``.

    History carries one record per optimizer step (loss components) and
    one per epoch (validation PSNR/SSIM).  The best-validation
    checkpoint is retained alongside the final one.
    """
    from .serialization import Checkpoint

    if not train_images or not val_images:
        raise ConfigurationError("training and validation sets must be nonempty")
    pipeline = pipeline_from_config(config)
    opt = Adam(pipeline.params(), lr=config.lr)
    rng = np.random.default_rng(config.seed)
    history: list[dict] = []
    best_psnr = -np.inf
    best_ckpt: Checkpoint | None = None
    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(len(train_images))
        for lo in range(0, len(order), config.batch_size):
            batch = [train_images[i] for i in order[lo : lo + config.batch_size]]
            pipeline.zero_grads()
            report, rec = run_round(
                pipeline,
                batch,
                gamma=config.gamma,
                loss_mode=config.loss_mode,
                train=True,
                update_stats=True,
                compute_grads=True,
            )
            if not np.isfinite(report.total):
                diag = [
                    f"module {k}: |z|max={np.max(np.abs(z)):.3e} "
                    f"|x~|max={np.max(np.abs(xt)):.3e}"
                    for k, (z, xt) in enumerate(
                        zip(rec.trace.z, rec.trace.x_tilde)
                    )
                ]
                raise NumericError(
                    "non-finite loss at step "
                    f"{step}: mse={report.mse}, wt={report.wt}; " + "; ".join(diag)
                )
            opt.step()
            pipeline.commit_lambda(rec)
            step += 1
            history.append(
                {
                    "step": step,
                    "epoch": epoch,
                    "mse": report.mse,
                    "wt": report.wt,
                    "total": report.total,
                }
            )
        val = evaluate_pipeline(pipeline, val_images)
        history.append(
            {
                "step": step,
                "epoch": epoch,
                "val_psnr": val.mean_psnr,
                "val_ssim": val.mean_ssim,
            }
        )
        if val.mean_psnr > best_psnr:
            best_psnr = val.mean_psnr
            best_ckpt = Checkpoint.from_training(pipeline, opt, config, epoch, step, rng)
    last = Checkpoint.from_training(
        pipeline, opt, config, max(config.epochs - 1, 0), step, rng
    )
    if best_ckpt is None:
        best_ckpt = last
    return TrainResult(last=last, best=best_ckpt, history=history)


def evaluate(checkpoint, test_images: list[np.ndarray]) -> EvaluationReport:
    """Frozen-pipeline evaluation of a stored checkpoint."""
    pipeline = checkpoint.build_pipeline()
    return evaluate_pipeline(pipeline, test_images)


# ---------------------------------------------------------------------------
# ablation suites

ABLATION_SUITES = ("independence", "mss_hfc", "loss")


@dataclass
class AblationTable:
    suite: str
    columns: list[str]
    rows: list[dict]
    note: str | None = None

    def to_markdown(self) -> str:
        lines = ["| " + " | ".join(self.columns) + " |"]
        lines.append("|" + "|".join("---" for _ in self.columns) + "|")
        for row in self.rows:
            lines.append(
                "| " + " | ".join(str(row[c]) for c in self.columns) + " |"
            )
        if self.note:
            lines.append("")
            lines.append(self.note)
        return "\n".join(lines)


def _replace_config(base: TrainConfig, **kwargs) -> TrainConfig:
    data = asdict(base)
    data.update(kwargs)
    return TrainConfig(**data)


def _fmt(value: float) -> str:
    return f"{value:.2f}"


def run_ablation(
    base: TrainConfig,
    suite: str,
    train_images: list[np.ndarray],
    val_images: list[np.ndarray],
    ratios: list[float] | None = None,
    seeds: list[int] | None = None,
) -> AblationTable:
    """Train the suite's configurations and tabulate mean val PSNR.

    ``independence``: shared-vs-independent penalty scalars and
    multiplier buffers (2 x 2 grid, several seeds; the ordering note
    reports how often the fully independent row wins).
    ``mss_hfc``: mean-subtraction sampling and refinement toggles over
    one or more compression ratios.  ``loss``: pixel-only versus total.
    """
    if suite not in ABLATION_SUITES:
        raise ConfigurationError(f"unknown ablation suite {suite!r}")

    def mean_val_psnr(cfg: TrainConfig) -> float:
        result = train(cfg, train_images, val_images)
        return evaluate(result.last, val_images).mean_psnr

    if suite == "independence":
        seeds = seeds if seeds is not None else [base.seed, base.seed + 1, base.seed + 2]
        cases = [
            (False, False, {"rho_mode": "shared", "lambda_mode": "shared"}),
            (False, True, {"rho_mode": "shared", "lambda_mode": "buffer_mean"}),
            (True, False, {"rho_mode": "per_module", "lambda_mode": "shared"}),
            (True, True, {"rho_mode": "per_module", "lambda_mode": "buffer_mean"}),
        ]
        scores = {}
        rows = []
        for rho_ind, lam_ind, overrides in cases:
            per_seed = [
                mean_val_psnr(_replace_config(base, seed=sd, **overrides))
                for sd in seeds
            ]
            scores[(rho_ind, lam_ind)] = per_seed
            rows.append(
                {
                    "independent rho": "yes" if rho_ind else "no",
                    "independent lambda": "yes" if lam_ind else "no",
                    "mean PSNR": _fmt(float(np.mean(per_seed))),
                }
            )
        wins = sum(
            all(
                scores[(True, True)][i] >= scores[key][i]
                for key in scores
                if key != (True, True)
            )
            for i in range(len(seeds))
        )
        note = (
            f"fully independent configuration best in {wins} of {len(seeds)} seeds"
        )
        return AblationTable(
            suite=suite,
            columns=["independent rho", "independent lambda", "mean PSNR"],
            rows=rows,
            note=note,
        )

    if suite == "mss_hfc":
        ratios = ratios if ratios is not None else [base.ratio]
        columns = ["MSS", "HFC"] + [f"{r:.0%}" for r in ratios]
        rows = []
        for mss in (False, True):
            for hfc in (False, True):
                row = {"MSS": "yes" if mss else "no", "HFC": "yes" if hfc else "no"}
                for r in ratios:
                    cfg = _replace_config(
                        base, mss_enabled=mss, hfc_enabled=hfc, ratio=r
                    )
                    row[f"{r:.0%}"] = _fmt(mean_val_psnr(cfg))
                rows.append(row)
        return AblationTable(suite=suite, columns=columns, rows=rows)

    ratios = ratios if ratios is not None else [base.ratio]
    columns = ["loss"] + [f"{r:.0%}" for r in ratios]
    rows = []
    for mode, label in (("mse_only", "MSE"), ("total", "MSE + gamma * wavelet")):
        row = {"loss": label}
        for r in ratios:
            cfg = _replace_config(base, loss_mode=mode, ratio=r)
            row[f"{r:.0%}"] = _fmt(mean_val_psnr(cfg))
        rows.append(row)
    return AblationTable(suite=suite, columns=columns, rows=rows)
