import numpy as np
import pytest

from csunfold.errors import IngestionError
from csunfold.imaging import extract_patches
from csunfold.sampling import init_whitened, mss_sample
from csunfold.serialization import (
    Checkpoint,
    MeasurementRecord,
    read_measurement_archive,
    record_from_measurement,
    write_measurement_archive,
)
from csunfold.synthetic import random_smooth_images
from csunfold.training import TrainConfig, evaluate, train


def _trained(tmp_seed=0, **overrides):
    cfg_kwargs = dict(
        ratio=0.5,
        K=1,
        epochs=2,
        batch_size=3,
        lr=1e-3,
        seed=tmp_seed,
        patch_side=4,
        channels=2,
    )
    cfg_kwargs.update(overrides)
    cfg = TrainConfig(**cfg_kwargs)
    imgs = random_smooth_images(5, 12, 12, seed=tmp_seed)
    return train(cfg, imgs, imgs[:2]), imgs


class TestCheckpoint:
    def test_save_load_save_byte_identical(self, tmp_path):
        result, _ = _trained(0)
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        result.last.save(p1)
        Checkpoint.load(p1).save(p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_tensor_round_trip_exact(self, tmp_path):
        result, _ = _trained(1)
        path = tmp_path / "c.ckpt"
        result.last.save(path)
        loaded = Checkpoint.load(path)
        assert set(loaded.tensors) == set(result.last.tensors)
        for name, arr in result.last.tensors.items():
            assert np.array_equal(loaded.tensors[name], arr), name
        assert loaded.config == result.last.config
        assert loaded.epoch == result.last.epoch
        assert loaded.step == result.last.step

    def test_rng_state_round_trip(self, tmp_path):
        result, _ = _trained(2)
        path = tmp_path / "d.ckpt"
        result.last.save(path)
        loaded = Checkpoint.load(path)
        a = loaded.restore_rng().random(5)
        b = result.last.restore_rng().random(5)
        assert np.array_equal(a, b)

    def test_evaluation_identical_after_reload(self, tmp_path):
        result, imgs = _trained(3, lambda_mode="buffer_mean")
        path = tmp_path / "e.ckpt"
        result.last.save(path)
        loaded = Checkpoint.load(path)
        before = evaluate(result.last, imgs)
        after = evaluate(loaded, imgs)
        for r1, r2 in zip(before.per_image, after.per_image):
            assert abs(r1["psnr"] - r2["psnr"]) <= 1e-9
            assert abs(r1["ssim"] - r2["ssim"]) <= 1e-9

    def test_lambda_buffers_preserved_bit_exactly(self, tmp_path):
        result, _ = _trained(4, lambda_mode="buffer_mean")
        path = tmp_path / "f.ckpt"
        result.last.save(path)
        loaded = Checkpoint.load(path)
        pipe = loaded.build_pipeline()
        assert np.array_equal(
            pipe.modules[0].lambda_buf, result.last.tensors["drm00.lambda_buf"]
        )

    def test_optimizer_moments_restored(self, tmp_path):
        result, _ = _trained(5)
        path = tmp_path / "g.ckpt"
        result.last.save(path)
        loaded = Checkpoint.load(path)
        pipe = loaded.build_pipeline()
        opt = loaded.build_optimizer(pipe)
        assert opt.step_count == int(result.last.tensors["opt.step"])
        for name, arr in result.last.tensors.items():
            if name.startswith("opt.m."):
                assert np.array_equal(opt.m[name[len("opt.m."):]], arr)

    def test_not_a_checkpoint(self, tmp_path):
        bad = tmp_path / "junk.ckpt"
        bad.write_bytes(b"definitely not a checkpoint")
        with pytest.raises(IngestionError):
            Checkpoint.load(bad)


class TestMeasurementArchive:
    def test_round_trip(self, tmp_path):
        op = init_whitened(8, 16, seed=0)
        imgs = random_smooth_images(3, 9, 13, seed=1)
        records = []
        for i, img in enumerate(imgs):
            grid = extract_patches(img, 4)
            meas = mss_sample(op, grid.patches)
            records.append(record_from_measurement(f"img{i}", grid, meas, op.m))
        path = tmp_path / "meas.bin"
        write_measurement_archive(path, records)
        loaded = read_measurement_archive(path)
        assert len(loaded) == 3
        for orig, back in zip(records, loaded):
            assert back.name == orig.name
            assert back.m == orig.m and back.n == orig.n
            assert np.array_equal(back.y, orig.y)
            assert np.array_equal(back.mean_channel, orig.mean_channel)
            assert (back.grid.rows, back.grid.cols) == (orig.grid.rows, orig.grid.cols)
            assert (back.grid.height, back.grid.width) == (orig.grid.height, orig.grid.width)

    def test_wrong_magic(self, tmp_path):
        bad = tmp_path / "bad.bin"
        bad.write_bytes(b"XXXX" + b"\x00" * 16)
        with pytest.raises(IngestionError):
            read_measurement_archive(bad)
