"""Command line entry point.

Subcommands: sample, train, eval, reconstruct, ablate, report.  Runs
are configured by an INI file (sections below) with CLI flags taking
precedence; the effective configuration is echoed into every output
directory.  Existing artifacts are never overwritten unless
--overwrite is given.

Config file sections and keys:

    [paths]     dataset, checkpoint, archive
    [data]      split (comma-separated fractions), limit
    [training]  ratio, modules, epochs, batch_size, lr, gamma,
                coupling, rho_mode, lambda_mode, mss, hfc, loss,
                seed, patch_side, channels
    [ablation]  suites, ratios, seeds
    [report]    runs (comma-separated run directories)

The CSUNFOLD_DATA_ROOT environment variable supplies the dataset path
when [paths] dataset is absent.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ToolkitError
from .imaging import extract_patches, load_image
from .sampling import init_whitened, measurement_count, mss_sample
from .serialization import (
    Checkpoint,
    read_measurement_archive,
    record_from_measurement,
    write_measurement_archive,
)
from .training import TrainConfig, evaluate, run_ablation, train

DATA_ROOT_ENV = "CSUNFOLD_DATA_ROOT"

_BOOL = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}

_SCHEMA = {
    "paths": {"dataset": str, "checkpoint": str, "archive": str},
    "data": {"split": str, "limit": int},
    "training": {
        "ratio": float,
        "modules": int,
        "epochs": int,
        "batch_size": int,
        "lr": float,
        "gamma": float,
        "coupling": str,
        "rho_mode": str,
        "lambda_mode": str,
        "mss": "bool",
        "hfc": "bool",
        "loss": str,
        "seed": int,
        "patch_side": int,
        "channels": int,
    },
    "ablation": {"suites": str, "ratios": str, "seeds": str},
    "report": {"runs": str},
}


@dataclass
class RunConfig:
    """Validated settings for one CLI invocation."""

    train: TrainConfig
    dataset: Path | None = None
    checkpoint: Path | None = None
    archive: Path | None = None
    out: Path = Path("csunfold_out")
    overwrite: bool = False
    split: tuple[float, ...] = (0.8, 0.2)
    limit: int | None = None
    suites: list[str] = field(default_factory=lambda: ["independence", "mss_hfc", "loss"])
    ablation_ratios: list[float] | None = None
    ablation_seeds: list[int] | None = None
    report_runs: list[Path] = field(default_factory=list)


def _parse_config_file(path: Path) -> dict:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigurationError(f"config file not found: {path}")
    values: dict = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigurationError(
                f"unknown config section [{section}] (known: {sorted(_SCHEMA)})"
            )
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigurationError(
                    f"unknown key {key!r} in section [{section}] "
                    f"(known: {sorted(_SCHEMA[section])})"
                )
            kind = _SCHEMA[section][key]
            if kind == "bool":
                if raw.lower() not in _BOOL:
                    raise ConfigurationError(
                        f"[{section}] {key}: cannot parse {raw!r} as boolean"
                    )
                values[(section, key)] = _BOOL[raw.lower()]
            else:
                try:
                    values[(section, key)] = kind(raw)
                except ValueError as exc:
                    raise ConfigurationError(
                        f"[{section}] {key}: cannot parse {raw!r}"
                    ) from exc
    return values


def build_run_config(args: argparse.Namespace) -> RunConfig:
    values = _parse_config_file(Path(args.config)) if args.config else {}

    def get(section, key, default=None):
        return values.get((section, key), default)

    train_kwargs = dict(
        ratio=get("training", "ratio", 0.25),
        K=get("training", "modules", 9),
        epochs=get("training", "epochs", 100),
        batch_size=get("training", "batch_size", 64),
        lr=get("training", "lr", 1e-3),
        gamma=get("training", "gamma", 0.01),
        coupling=get("training", "coupling", "detached"),
        rho_mode=get("training", "rho_mode", "per_module"),
        lambda_mode=get("training", "lambda_mode", "per_sample_zero_init"),
        mss_enabled=get("training", "mss", True),
        hfc_enabled=get("training", "hfc", True),
        loss_mode=get("training", "loss", "total"),
        seed=get("training", "seed", 0),
        patch_side=get("training", "patch_side", 33),
        channels=get("training", "channels", 32),
    )
    if args.ratio is not None:
        train_kwargs["ratio"] = args.ratio
    if args.modules is not None:
        train_kwargs["K"] = args.modules
    if args.seed is not None:
        train_kwargs["seed"] = args.seed
    if args.lambda_mode is not None:
        train_kwargs["lambda_mode"] = args.lambda_mode
    if args.coupling is not None:
        train_kwargs["coupling"] = args.coupling

    dataset = get("paths", "dataset") or os.environ.get(DATA_ROOT_ENV)
    checkpoint = get("paths", "checkpoint")
    if args.checkpoint is not None:
        checkpoint = args.checkpoint
    split_raw = get("data", "split", "0.8,0.2")
    try:
        split = tuple(float(v) for v in str(split_raw).split(","))
    except ValueError as exc:
        raise ConfigurationError(f"[data] split: cannot parse {split_raw!r}") from exc

    suites_raw = get("ablation", "suites", "independence,mss_hfc,loss")
    if getattr(args, "suite", None):
        suites_raw = args.suite
    ratios_raw = get("ablation", "ratios")
    seeds_raw = get("ablation", "seeds")
    runs_raw = get("report", "runs", "")

    return RunConfig(
        train=TrainConfig(**train_kwargs),
        dataset=Path(dataset) if dataset else None,
        checkpoint=Path(checkpoint) if checkpoint else None,
        archive=Path(get("paths", "archive")) if get("paths", "archive") else None,
        out=Path(args.out),
        overwrite=args.overwrite,
        split=split,
        limit=get("data", "limit"),
        suites=[s.strip() for s in suites_raw.split(",") if s.strip()],
        ablation_ratios=(
            [float(v) for v in ratios_raw.split(",")] if ratios_raw else None
        ),
        ablation_seeds=([int(v) for v in seeds_raw.split(",")] if seeds_raw else None),
        report_runs=[Path(p.strip()) for p in runs_raw.split(",") if p.strip()],
    )


# ---------------------------------------------------------------------------
# helpers

def _require_dataset(cfg: RunConfig) -> list[tuple[str, np.ndarray]]:
    if cfg.dataset is None:
        raise ConfigurationError(
            f"no dataset configured: set [paths] dataset or ${DATA_ROOT_ENV}"
        )
    if not cfg.dataset.is_dir():
        raise ConfigurationError(f"dataset directory does not exist: {cfg.dataset}")
    files = sorted(
        p for p in cfg.dataset.rglob("*") if p.suffix.lower() in (".png", ".bmp", ".pgm")
    )
    if not files:
        raise ConfigurationError(f"no images under {cfg.dataset}")
    if cfg.limit:
        files = files[: cfg.limit]
    return [(p.stem, load_image(p)) for p in files]


def _prepare_out(cfg: RunConfig, *names: str) -> list[Path]:
    cfg.out.mkdir(parents=True, exist_ok=True)
    paths = [cfg.out / name for name in names]
    for p in paths:
        if p.exists() and not cfg.overwrite:
            raise ConfigurationError(
                f"refusing to overwrite existing {p} (pass --overwrite)"
            )
    return paths


def _echo_effective_config(cfg: RunConfig, command: str) -> None:
    parser = configparser.ConfigParser()
    parser["run"] = {"command": command}
    parser["paths"] = {
        k: str(v)
        for k, v in {
            "dataset": cfg.dataset,
            "checkpoint": cfg.checkpoint,
            "archive": cfg.archive,
        }.items()
        if v is not None
    }
    tk = asdict(cfg.train)
    parser["training"] = {
        "ratio": str(tk["ratio"]),
        "modules": str(tk["K"]),
        "epochs": str(tk["epochs"]),
        "batch_size": str(tk["batch_size"]),
        "lr": str(tk["lr"]),
        "gamma": str(tk["gamma"]),
        "coupling": tk["coupling"],
        "rho_mode": tk["rho_mode"],
        "lambda_mode": tk["lambda_mode"],
        "mss": str(tk["mss_enabled"]).lower(),
        "hfc": str(tk["hfc_enabled"]).lower(),
        "loss": tk["loss_mode"],
        "seed": str(tk["seed"]),
        "patch_side": str(tk["patch_side"]),
        "channels": str(tk["channels"]),
    }
    parser["data"] = {"split": ",".join(str(v) for v in cfg.split)}
    if cfg.limit:
        parser["data"]["limit"] = str(cfg.limit)
    path = cfg.out / "effective.ini"
    with open(path, "w") as fh:
        parser.write(fh)


def _split_images(images: list, split: tuple[float, ...], seed: int):
    if abs(sum(split) - 1.0) > 1e-9:
        raise ConfigurationError(f"split fractions must sum to 1, got {split}")
    order = np.random.default_rng(seed).permutation(len(images))
    shuffled = [images[i] for i in order]
    bounds = np.floor(np.cumsum(np.asarray(split)) * len(images) + 0.5).astype(int)
    bounds[-1] = len(images)
    pieces, start = [], 0
    for stop in bounds:
        pieces.append(shuffled[start:stop])
        start = stop
    return pieces


def _metrics_table(report) -> str:
    lines = ["| image | PSNR (dB) | SSIM |", "|---|---|---|"]
    for row in report.per_image:
        name = row.get("name", str(row["index"]))
        lines.append(f"| {name} | {row['psnr']:.2f} | {row['ssim']:.4f} |")
    lines.append(f"| **mean** | {report.mean_psnr:.2f} | {report.mean_ssim:.4f} |")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# subcommands

def cmd_sample(cfg: RunConfig) -> int:
    named = _require_dataset(cfg)
    (archive_path,) = _prepare_out(cfg, "measurements.bin")
    tc = cfg.train
    n = tc.patch_side * tc.patch_side
    m = measurement_count(tc.ratio, n)
    op = init_whitened(m, n, seed=tc.seed)
    records = []
    for name, img in named:
        grid = extract_patches(img, tc.patch_side)
        meas = mss_sample(op, grid.patches)
        records.append(record_from_measurement(name, grid, meas, m))
    write_measurement_archive(archive_path, records)
    _echo_effective_config(cfg, "sample")
    print(f"wrote {len(records)} measurement records to {archive_path}")
    return 0


def cmd_train(cfg: RunConfig) -> int:
    named = _require_dataset(cfg)
    paths = _prepare_out(
        cfg, "checkpoint.bin", "checkpoint.best.bin", "history.jsonl"
    )
    ckpt_path, best_path, hist_path = paths
    images = [img for _, img in named]
    if len(cfg.split) < 2:
        train_imgs, val_imgs = images, images
    else:
        train_imgs, val_imgs, *_ = _split_images(images, cfg.split, cfg.train.seed)
        if not val_imgs:
            val_imgs = train_imgs
    result = train(cfg.train, train_imgs, val_imgs)
    result.last.save(ckpt_path)
    result.best.save(best_path)
    with open(hist_path, "w") as fh:
        for record in result.history:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    _echo_effective_config(cfg, "train")
    final_val = [h for h in result.history if "val_psnr" in h]
    if final_val:
        print(
            f"trained {cfg.train.epochs} epochs; final val PSNR "
            f"{final_val[-1]['val_psnr']:.2f} dB"
        )
    print(f"checkpoints: {ckpt_path}, {best_path}")
    return 0


def _load_checkpoint(cfg: RunConfig) -> Checkpoint:
    if cfg.checkpoint is None:
        raise ConfigurationError("no checkpoint configured (--checkpoint or [paths])")
    if not cfg.checkpoint.exists():
        raise ConfigurationError(f"checkpoint does not exist: {cfg.checkpoint}")
    return Checkpoint.load(cfg.checkpoint)


def cmd_eval(cfg: RunConfig) -> int:
    named = _require_dataset(cfg)
    (table_path,) = _prepare_out(cfg, "eval.md")
    ckpt = _load_checkpoint(cfg)
    report = evaluate(ckpt, [img for _, img in named])
    for row, (name, _) in zip(report.per_image, named):
        row["name"] = name
    table = _metrics_table(report)
    table_path.write_text(table + "\n")
    _echo_effective_config(cfg, "eval")
    print(table)
    return 0


def cmd_reconstruct(cfg: RunConfig) -> int:
    from PIL import Image as PILImage

    ckpt = _load_checkpoint(cfg)
    pipeline = ckpt.build_pipeline()
    outputs: list[tuple[str, np.ndarray]] = []
    if cfg.archive is not None:
        if not cfg.archive.exists():
            raise ConfigurationError(f"archive does not exist: {cfg.archive}")
        for rec in read_measurement_archive(cfg.archive):
            out = pipeline.reconstruct_from_measurements(rec.y, rec.mean_channel, rec.grid)
            outputs.append((rec.name, out))
    else:
        for name, img in _require_dataset(cfg):
            outputs.append((name, pipeline.reconstruct(img)))
    paths = _prepare_out(cfg, *[f"recon_{name}.png" for name, _ in outputs])
    for path, (_, out) in zip(paths, outputs):
        arr = np.clip(np.round(out * 255.0), 0, 255).astype(np.uint8)
        PILImage.fromarray(arr).save(path)
    _echo_effective_config(cfg, "reconstruct")
    print(f"wrote {len(outputs)} reconstructions to {cfg.out}")
    return 0


def cmd_ablate(cfg: RunConfig) -> int:
    named = _require_dataset(cfg)
    paths = _prepare_out(cfg, *[f"ablation_{suite}.md" for suite in cfg.suites])
    images = [img for _, img in named]
    train_imgs, val_imgs, *_ = (
        _split_images(images, cfg.split, cfg.train.seed)
        if len(cfg.split) >= 2
        else (images, images)
    )
    if not val_imgs:
        val_imgs = train_imgs
    for path, suite in zip(paths, cfg.suites):
        table = run_ablation(
            cfg.train,
            suite,
            train_imgs,
            val_imgs,
            ratios=cfg.ablation_ratios,
            seeds=cfg.ablation_seeds,
        )
        path.write_text(table.to_markdown() + "\n")
        print(f"[{suite}]")
        print(table.to_markdown())
        print()
    _echo_effective_config(cfg, "ablate")
    return 0


def cmd_report(cfg: RunConfig) -> int:
    report_path, plot_path = _prepare_out(cfg, "report.md", "psnr_vs_ratio.png")
    runs = cfg.report_runs
    if not runs:
        raise ConfigurationError("no run directories configured ([report] runs)")
    rows = []
    for run_dir in runs:
        hist_file = run_dir / "history.jsonl"
        eff_file = run_dir / "effective.ini"
        if not hist_file.exists() or not eff_file.exists():
            raise ConfigurationError(
                f"{run_dir} is not a training run directory "
                "(missing history.jsonl or effective.ini)"
            )
        parser = configparser.ConfigParser()
        parser.read(eff_file)
        ratio = float(parser["training"]["ratio"])
        val_records = []
        with open(hist_file) as fh:
            for line in fh:
                record = json.loads(line)
                if "val_psnr" in record:
                    val_records.append(record)
        if not val_records:
            raise ConfigurationError(f"{hist_file} holds no validation records")
        rows.append(
            {
                "run": run_dir.name,
                "ratio": ratio,
                "val_psnr": val_records[-1]["val_psnr"],
                "val_ssim": val_records[-1]["val_ssim"],
            }
        )
    rows.sort(key=lambda r: r["ratio"])
    lines = [
        "| run | ratio | final val PSNR (dB) | final val SSIM |",
        "|---|---|---|---|",
    ]
    for r in rows:
        lines.append(
            f"| {r['run']} | {r['ratio']:.0%} | {r['val_psnr']:.2f} | {r['val_ssim']:.4f} |"
        )
    ablation_files = sorted(
        f for run_dir in runs for f in run_dir.glob("ablation_*.md")
    )
    for f in ablation_files:
        lines.append("")
        lines.append(f"## {f.stem}")
        lines.append(f.read_text().rstrip())
    report_path.write_text("\n".join(lines) + "\n")

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot([r["ratio"] for r in rows], [r["val_psnr"] for r in rows], "o-")
    ax.set_xlabel("compression ratio m/n")
    ax.set_ylabel("validation PSNR (dB)")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(plot_path, dpi=120)
    plt.close(fig)
    _echo_effective_config(cfg, "report")
    print(f"report written to {report_path}")
    return 0


# ---------------------------------------------------------------------------

def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="csunfold",
        description="Compressive-sensing reconstruction with an unfolded "
        "penalty-optimization network.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "sample": "sample a dataset into a measurement archive",
        "train": "train a reconstruction pipeline",
        "eval": "evaluate a checkpoint on a dataset",
        "reconstruct": "write reconstructed images for a dataset or archive",
        "ablate": "run ablation suites",
        "report": "summarize training runs into tables and plots",
    }
    for name, help_text in commands.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="INI config file")
        p.add_argument("--ratio", type=float, help="compression ratio m/n")
        p.add_argument("--modules", type=int, help="number of reconstruction modules K")
        p.add_argument("--seed", type=int, help="global seed")
        p.add_argument("--out", default="csunfold_out", help="output directory")
        p.add_argument("--overwrite", action="store_true", help="replace existing artifacts")
        p.add_argument("--checkpoint", help="checkpoint path")
        p.add_argument(
            "--lambda-mode",
            dest="lambda_mode",
            choices=["buffer_mean", "per_sample_zero_init", "shared"],
        )
        p.add_argument("--coupling", choices=["detached", "end2end"])
        if name == "ablate":
            p.add_argument("--suite", help="comma-separated suite names")
    return parser


_COMMANDS = {
    "sample": cmd_sample,
    "train": cmd_train,
    "eval": cmd_eval,
    "reconstruct": cmd_reconstruct,
    "ablate": cmd_ablate,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        cfg = build_run_config(args)
        return _COMMANDS[args.command](cfg)
    except ToolkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
