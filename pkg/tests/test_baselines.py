import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csunfold.baselines import (
    ClassicalConfig,
    augmented_lagrangian_value,
    classical_solve,
    ista_solve,
    soft_threshold,
)
from csunfold.errors import ConfigurationError
from csunfold.sampling import init_whitened


def _sparse_instance(n=32, m=16, k=3, seed=0):
    rng = np.random.default_rng(seed)
    op = init_whitened(m, n, seed=seed)
    x0 = np.zeros(n)
    support = rng.choice(n, size=k, replace=False)
    x0[support] = np.sign(rng.standard_normal(k)) * (1.5 + rng.random(k))
    return op, x0, op.A @ x0, support


class TestSoftThreshold:
    def test_definition(self):
        out = soft_threshold(np.array([2.0, -0.5, 0.0]), 1.0)
        assert np.array_equal(out, np.array([1.0, 0.0, 0.0]))

    def test_zero_threshold_identity(self):
        v = np.random.default_rng(0).standard_normal(10)
        assert np.array_equal(soft_threshold(v, 0.0), v)

    def test_matches_scalar_prox_by_grid_refinement(self):
        rng = np.random.default_rng(1)
        v = rng.standard_normal(5) * 2.0
        t = 0.7
        shrunk = soft_threshold(v, t)
        for vi, si in zip(v, shrunk):
            # brute-force the minimizer of t|z| + 0.5 (z - v)^2
            zs = np.linspace(vi - 3, vi + 3, 20001)
            obj = t * np.abs(zs) + 0.5 * (zs - vi) ** 2
            zbest = zs[int(np.argmin(obj))]
            assert si == pytest.approx(zbest, abs=5e-4)

    @settings(deadline=None, max_examples=30)
    @given(
        seed=st.integers(min_value=0, max_value=2**31),
        t=st.floats(min_value=0.0, max_value=3.0, allow_nan=False),
    )
    def test_shrinkage_properties(self, seed, t):
        v = np.random.default_rng(seed).standard_normal(8)
        out = soft_threshold(v, t)
        assert np.all(np.abs(out) <= np.abs(v) + 1e-15)
        nz = out != 0
        assert np.all(np.sign(out[nz]) == np.sign(v[nz]))
        assert np.allclose(np.abs(v[nz]) - np.abs(out[nz]), t, atol=1e-12)

    def test_negative_threshold_rejected(self):
        with pytest.raises(ValueError):
            soft_threshold(np.ones(3), -0.1)


class TestClassicalSolve:
    def test_sparse_recovery(self):
        op, x0, y, _ = _sparse_instance()
        cfg = ClassicalConfig(rho=0.02, omega=2e-3, iters=200)
        x = classical_solve(op, y, cfg)
        rel = np.linalg.norm(x - x0) / np.linalg.norm(x0)
        assert rel < 1e-2

    def test_vanishing_penalty_gives_consistent_solution(self):
        op, _, y, _ = _sparse_instance(seed=3)
        cfg = ClassicalConfig(rho=1.0, omega=1e-12, iters=300)
        x = classical_solve(op, y, cfg)
        assert np.linalg.norm(op.A @ x - y) < 1e-6

    def test_zero_measurement(self):
        op = init_whitened(8, 24, seed=4)
        cfg = ClassicalConfig(rho=0.5, omega=1e-3, iters=50)
        x = classical_solve(op, np.zeros(8), cfg)
        assert np.allclose(x, 0.0, atol=1e-12)

    def test_lagrangian_history_monotone_after_burn_in(self):
        for seed in range(6):
            op, _, y, _ = _sparse_instance(seed=seed)
            cfg = ClassicalConfig(rho=0.5, omega=1e-4, iters=150)
            _, history = classical_solve(op, y, cfg, return_history=True)
            diffs = np.diff(np.asarray(history)[5:])
            assert np.all(diffs <= 1e-10)

    def test_haar_transform_mode_runs(self):
        op = init_whitened(8, 16, seed=6)
        y = op.A @ np.random.default_rng(7).random(16)
        cfg = ClassicalConfig(rho=1.0, omega=1e-4, iters=60, threshold_transform="haar")
        x = classical_solve(op, y, cfg)
        assert np.all(np.isfinite(x))
        assert np.linalg.norm(op.A @ x - y) < 1e-2

    def test_invalid_config(self):
        with pytest.raises(ConfigurationError):
            ClassicalConfig(iters=0)
        with pytest.raises(ConfigurationError):
            ClassicalConfig(rho=-1.0)
        with pytest.raises(ConfigurationError):
            ClassicalConfig(threshold_transform="dct")


class TestIstaSolve:
    def test_agrees_with_classical_on_support(self):
        op, x0, y, support = _sparse_instance()
        cfg = ClassicalConfig(rho=0.02, omega=2e-3, iters=200)
        x_cl = classical_solve(op, y, cfg)
        x_ista = ista_solve(op, y, step=1.0, t=2e-3, iters=5000)
        tol = 0.05
        supp_cl = set(np.flatnonzero(np.abs(x_cl) > tol))
        supp_ista = set(np.flatnonzero(np.abs(x_ista) > tol))
        assert supp_cl == supp_ista == set(support)

    def test_huge_threshold_keeps_zero(self):
        op, _, y, _ = _sparse_instance(seed=9)
        t = float(np.max(np.abs(op.A.T @ y))) * 2.0
        x = ista_solve(op, y, step=1.0, t=t, iters=20)
        assert np.all(x == 0.0)

    def test_zero_measurement_stays_zero(self):
        op = init_whitened(6, 18, seed=10)
        x = ista_solve(op, np.zeros(6), step=1.0, t=0.1, iters=10)
        assert np.all(x == 0.0)

    def test_objective_monotone(self):
        op, _, y, _ = _sparse_instance(seed=11)
        _, history = ista_solve(op, y, step=0.9, t=1e-3, iters=100, return_history=True)
        assert np.all(np.diff(history) <= 1e-10)

    def test_step_too_large_rejected(self):
        op, _, y, _ = _sparse_instance(seed=12)
        with pytest.raises(ValueError):
            ista_solve(op, y, step=2.5, t=0.1, iters=5)


def test_lagrangian_value_formula():
    op = init_whitened(3, 8, seed=13)
    rng = np.random.default_rng(14)
    y, x, z, lam = rng.random(3), rng.random(8), rng.random(8), rng.random(8)
    val = augmented_lagrangian_value(op, y, x, z, lam, rho=2.0, omega=0.5)
    expected = (
        0.5 * np.sum((y - op.A @ x) ** 2)
        + 0.5 * np.sum(np.abs(z))
        + lam @ (z - x)
        + 1.0 * np.sum((z - x) ** 2)
    )
    assert val == pytest.approx(expected, rel=1e-12)
