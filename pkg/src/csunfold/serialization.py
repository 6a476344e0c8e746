"""Binary containers: training checkpoints and measurement archives.

Both formats are single files with a little-endian fixed header, a
JSON metadata block (sorted keys, compact separators) and raw float64
payloads.  The encodings are fully deterministic, so saving the same
logical state twice produces byte-identical files.  The exact byte
layouts are documented in docs/formats.md.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DimensionError, IngestionError
from .imaging import PatchGrid
from .sampling import Measurement

CHECKPOINT_MAGIC = b"CSUN"
CHECKPOINT_VERSION = 1
ARCHIVE_MAGIC = b"CSMA"
ARCHIVE_VERSION = 1


def _encode_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


@dataclass
class Checkpoint:
    """A complete snapshot of one training run.

    ``tensors`` holds every learnable parameter, every state buffer
    (multiplier vectors, batch-norm running statistics) and the Adam
    moments, all as float64 arrays keyed by their hierarchical names.
    """

    config: "TrainConfig"
    epoch: int
    step: int
    rng_state: dict
    tensors: dict[str, np.ndarray]
    version: int = CHECKPOINT_VERSION

    @classmethod
    def from_training(cls, pipeline, opt, config, epoch, step, rng) -> "Checkpoint":
        tensors: dict[str, np.ndarray] = {}
        for p in pipeline.params():
            tensors[p.name] = p.value.copy()
        for name, arr in pipeline.state_tensors().items():
            tensors[name] = np.array(arr, dtype=float)
        if opt is not None:
            for name, arr in opt.m.items():
                tensors[f"opt.m.{name}"] = np.array(arr, dtype=float)
            for name, arr in opt.v.items():
                tensors[f"opt.v.{name}"] = np.array(arr, dtype=float)
            tensors["opt.step"] = np.array(float(opt.step_count))
        return cls(
            config=config,
            epoch=epoch,
            step=step,
            rng_state=rng.bit_generator.state,
            tensors=tensors,
        )

    def build_pipeline(self):
        """Reconstruct the pipeline with every tensor restored."""
        from .training import pipeline_from_config

        pipeline = pipeline_from_config(self.config)
        for p in pipeline.params():
            if p.name not in self.tensors:
                raise ConfigurationError(f"checkpoint is missing tensor {p.name!r}")
            stored = self.tensors[p.name]
            if stored.shape != p.value.shape:
                raise DimensionError(
                    f"tensor {p.name!r} has shape {stored.shape}, expected {p.value.shape}"
                )
            p.value[...] = stored
        for name, arr in pipeline.state_tensors().items():
            if name in self.tensors:
                arr[...] = self.tensors[name]
        return pipeline

    def build_optimizer(self, pipeline):
        from .training import Adam

        opt = Adam(pipeline.params(), lr=self.config.lr)
        for p in opt.params:
            if f"opt.m.{p.name}" in self.tensors:
                opt.m[p.name][...] = self.tensors[f"opt.m.{p.name}"]
                opt.v[p.name][...] = self.tensors[f"opt.v.{p.name}"]
        if "opt.step" in self.tensors:
            opt.step_count = int(self.tensors["opt.step"])
        return opt

    def restore_rng(self) -> np.random.Generator:
        rng = np.random.default_rng(0)
        rng.bit_generator.state = self.rng_state
        return rng

    # -- on-disk format ----------------------------------------------------

    def save(self, path: str | Path) -> None:
        names = sorted(self.tensors)
        entries = []
        offset = 0
        blobs = []
        for name in names:
            # asarray keeps 0-d shapes; tobytes always yields C-order bytes
            arr = np.asarray(self.tensors[name], dtype="<f8")
            blob = arr.tobytes()
            entries.append(
                {
                    "name": name,
                    "dtype": "<f8",
                    "shape": list(arr.shape),
                    "offset": offset,
                    "nbytes": len(blob),
                }
            )
            blobs.append(blob)
            offset += len(blob)
        header = _encode_json(
            {
                "version": self.version,
                "config": asdict(self.config),
                "epoch": self.epoch,
                "step": self.step,
                "rng_state": self.rng_state,
                "tensors": entries,
            }
        )
        with open(path, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC)
            fh.write(struct.pack("<I", self.version))
            fh.write(struct.pack("<Q", len(header)))
            fh.write(header)
            for blob in blobs:
                fh.write(blob)

    @classmethod
    def load(cls, path: str | Path) -> "Checkpoint":
        from .training import TrainConfig

        path = Path(path)
        try:
            raw = path.read_bytes()
        except OSError as exc:
            raise IngestionError(f"cannot read checkpoint {path}: {exc}") from exc
        if raw[:4] != CHECKPOINT_MAGIC:
            raise IngestionError(f"{path} is not a checkpoint file")
        version = struct.unpack_from("<I", raw, 4)[0]
        if version != CHECKPOINT_VERSION:
            raise IngestionError(f"unsupported checkpoint version {version}")
        header_len = struct.unpack_from("<Q", raw, 8)[0]
        header = json.loads(raw[16 : 16 + header_len].decode("utf-8"))
        payload = raw[16 + header_len :]
        tensors = {}
        for entry in header["tensors"]:
            start, nbytes = entry["offset"], entry["nbytes"]
            arr = np.frombuffer(payload[start : start + nbytes], dtype="<f8")
            tensors[entry["name"]] = arr.reshape(entry["shape"]).copy()
        return cls(
            config=TrainConfig(**header["config"]),
            epoch=header["epoch"],
            step=header["step"],
            rng_state=header["rng_state"],
            tensors=tensors,
            version=version,
        )


# ---------------------------------------------------------------------------
# measurement archive

@dataclass
class MeasurementRecord:
    """Stored sampling result for one image."""

    name: str
    m: int
    n: int
    grid: PatchGrid
    y: np.ndarray  # (patch count, m) mean-subtracted measurements
    mean_channel: np.ndarray  # (patch count,) augmented-row outputs


def write_measurement_archive(path: str | Path, records: list[MeasurementRecord]) -> None:
    with open(path, "wb") as fh:
        fh.write(ARCHIVE_MAGIC)
        fh.write(struct.pack("<I", ARCHIVE_VERSION))
        fh.write(struct.pack("<I", len(records)))
        for rec in records:
            g = rec.grid
            name = rec.name.encode("utf-8")
            fh.write(struct.pack("<I", len(name)))
            fh.write(name)
            fh.write(
                struct.pack(
                    "<8I",
                    rec.n,
                    rec.m,
                    g.rows,
                    g.cols,
                    g.pad_bottom,
                    g.pad_right,
                    g.height,
                    g.width,
                )
            )
            y = np.ascontiguousarray(rec.y, dtype="<f8")
            mc = np.ascontiguousarray(rec.mean_channel, dtype="<f8")
            if y.shape != (g.rows * g.cols, rec.m):
                raise DimensionError(
                    f"record {rec.name!r}: y shape {y.shape} does not match grid"
                )
            fh.write(y.tobytes())
            fh.write(mc.tobytes())


def read_measurement_archive(path: str | Path) -> list[MeasurementRecord]:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != ARCHIVE_MAGIC:
        raise IngestionError(f"{path} is not a measurement archive")
    version = struct.unpack_from("<I", raw, 4)[0]
    if version != ARCHIVE_VERSION:
        raise IngestionError(f"unsupported archive version {version}")
    count = struct.unpack_from("<I", raw, 8)[0]
    pos = 12
    records = []
    for _ in range(count):
        (name_len,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        name = raw[pos : pos + name_len].decode("utf-8")
        pos += name_len
        n, m, rows, cols, pad_b, pad_r, height, width = struct.unpack_from("<8I", raw, pos)
        pos += 32
        patches = rows * cols
        y = np.frombuffer(raw, dtype="<f8", count=patches * m, offset=pos).reshape(
            patches, m
        ).copy()
        pos += patches * m * 8
        mc = np.frombuffer(raw, dtype="<f8", count=patches, offset=pos).copy()
        pos += patches * 8
        side = int(round(np.sqrt(n)))
        grid = PatchGrid(
            patch_side=side,
            rows=rows,
            cols=cols,
            pad_bottom=pad_b,
            pad_right=pad_r,
            height=height,
            width=width,
            patches=np.zeros((patches, n)),
        )
        records.append(
            MeasurementRecord(name=name, m=m, n=n, grid=grid, y=y, mean_channel=mc)
        )
    return records


def record_from_measurement(
    name: str, grid: PatchGrid, meas: Measurement, m: int
) -> MeasurementRecord:
    return MeasurementRecord(
        name=name,
        m=m,
        n=grid.n,
        grid=grid,
        y=np.atleast_2d(meas.y),
        mean_channel=np.atleast_1d(meas.mean_channel),
    )
