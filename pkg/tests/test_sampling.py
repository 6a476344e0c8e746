import numpy as np
import pytest

from csunfold.errors import DimensionError, SingularityError
from csunfold.sampling import (
    SamplingOperator,
    augment,
    init_whitened,
    measurement_count,
    mss_sample,
    whiten,
)


def _inv_sqrt_eig(g):
    """Independent inverse matrix square root via eigendecomposition."""
    w, u = np.linalg.eigh(g)
    return (u * (1.0 / np.sqrt(w))) @ u.T


class TestWhitening:
    def test_init_whitened_orthonormal_rows(self):
        op = init_whitened(4, 8, seed=0)
        gram = op.A @ op.A.T
        assert np.max(np.abs(gram - np.eye(4))) < 1e-8
        assert op.whitened

    def test_identity_rows_fixed_point(self):
        a = np.eye(8)[:3]
        assert np.max(np.abs(whiten(a) - a)) < 1e-12

    def test_scaling_removed(self):
        rows = init_whitened(3, 7, seed=1).A
        assert np.max(np.abs(whiten(2.0 * rows) - rows)) < 1e-10

    def test_matches_eigendecomposition_oracle(self):
        b = np.random.default_rng(2).standard_normal((4, 8))
        expected = _inv_sqrt_eig(b @ b.T) @ b
        assert np.max(np.abs(whiten(b) - expected)) < 1e-8

    def test_matches_svd_form(self):
        a = np.random.default_rng(3).standard_normal((3, 6))
        u, s, vt = np.linalg.svd(a, full_matrices=False)
        expected = u @ np.eye(3) @ vt
        assert np.max(np.abs(whiten(a) - expected)) < 1e-8

    def test_idempotent(self):
        a = np.random.default_rng(4).standard_normal((5, 12))
        once = whiten(a)
        assert np.max(np.abs(whiten(once) - once)) < 1e-8

    def test_row_space_preserved(self):
        a = np.random.default_rng(5).standard_normal((4, 9))
        av = whiten(a)
        projector = a.T @ np.linalg.solve(a @ a.T, a)
        assert np.max(np.abs(av.T @ av - projector)) < 1e-8

    def test_rank_deficient_rejected(self):
        a = np.ones((3, 6))
        with pytest.raises(SingularityError):
            whiten(a)

    def test_bad_dims_rejected(self):
        with pytest.raises(DimensionError):
            init_whitened(8, 4, seed=0)
        with pytest.raises(DimensionError):
            init_whitened(8, 8, seed=0)

    def test_many_sizes(self):
        rng = np.random.default_rng(6)
        for _ in range(25):
            n = int(rng.integers(3, 64))
            m = int(rng.integers(1, n))
            op = init_whitened(m, n, seed=int(rng.integers(0, 1 << 31)))
            assert np.max(np.abs(op.A @ op.A.T - np.eye(m))) < 1e-8


class TestAugment:
    def test_toy_identity(self):
        op = SamplingOperator(np.eye(2))
        expected = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        assert np.array_equal(augment(op), expected)

    def test_ones_row_measures_sum(self):
        op = init_whitened(3, 9, seed=7)
        a_star = augment(op)
        x = np.random.default_rng(8).random(9)
        assert (a_star @ x)[-1] == pytest.approx(x.sum())

    def test_paper_scale_shape(self):
        n = 1089
        m = measurement_count(0.25, n)
        assert m == 272
        op = init_whitened(m, n, seed=0)
        assert augment(op).shape == (273, 1089)


class TestMssSample:
    def test_constant_patch_annihilated(self):
        op = init_whitened(4, 16, seed=9)
        meas = mss_sample(op, np.full(16, 0.8))
        assert np.max(np.abs(meas.y)) < 1e-12
        assert meas.patch_mean == pytest.approx(0.8)
        assert meas.mean_channel == pytest.approx(16 * 0.8)

    def test_equals_direct_algebra(self):
        op = init_whitened(5, 12, seed=10)
        rng = np.random.default_rng(11)
        x = rng.random(12)
        meas = mss_sample(op, x)
        direct = op.A @ (x - x.mean())
        assert np.max(np.abs(meas.y - direct)) < 1e-10
        assert np.max(np.abs(meas.y_raw - op.A @ x)) < 1e-12

    def test_zero_patch(self):
        op = init_whitened(3, 8, seed=12)
        meas = mss_sample(op, np.zeros(8))
        assert np.all(meas.y == 0.0)
        assert meas.mean_channel == 0.0

    def test_batched_matches_loop(self):
        op = init_whitened(4, 9, seed=13)
        xb = np.random.default_rng(14).random((6, 9))
        batched = mss_sample(op, xb)
        for i in range(6):
            single = mss_sample(op, xb[i])
            assert np.allclose(batched.y[i], single.y, atol=1e-14)
            assert batched.patch_mean[i] == pytest.approx(single.patch_mean)

    def test_length_mismatch(self):
        op = init_whitened(3, 8, seed=15)
        with pytest.raises(DimensionError):
            mss_sample(op, np.zeros(7))


class TestMeasurementCount:
    def test_quarter_ratio(self):
        assert measurement_count(0.25, 1089) == 272

    def test_one_percent(self):
        assert measurement_count(0.01, 1089) == 11

    def test_clamped_below_n(self):
        assert measurement_count(1.0, 1089) == 1088

    def test_clamped_above_zero(self):
        assert measurement_count(1e-6, 100) == 1

    def test_bad_ratio(self):
        with pytest.raises(ValueError):
            measurement_count(0.0, 100)
