import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csunfold.errors import DimensionError
from csunfold.wavelets import haar_dwt, haar_idwt, pad_to_even, pad_to_even_adjoint


def test_constant_image_detail_bands_vanish():
    c = 0.37
    coeffs = haar_dwt(np.full((8, 8), c))
    assert np.allclose(coeffs.LL, 2 * c, atol=1e-14)
    assert np.allclose(coeffs.LH, 0.0, atol=1e-14)
    assert np.allclose(coeffs.HL, 0.0, atol=1e-14)
    assert np.allclose(coeffs.HH, 0.0, atol=1e-14)


def test_hand_computed_2x2_transform():
    a, b, c, d = 1.0, 2.0, 3.0, 5.0
    coeffs = haar_dwt(np.array([[a, b], [c, d]]))
    assert coeffs.LL[0, 0] == pytest.approx((a + b + c + d) / 2)
    assert coeffs.LH[0, 0] == pytest.approx((a - b + c - d) / 2)
    assert coeffs.HL[0, 0] == pytest.approx((a + b - c - d) / 2)
    assert coeffs.HH[0, 0] == pytest.approx((a - b - c + d) / 2)
    # energy conservation pins the normalization
    assert coeffs.energy() == pytest.approx(a * a + b * b + c * c + d * d)


def test_round_trip_even():
    rng = np.random.default_rng(0)
    img = rng.random((12, 20))
    rec = haar_idwt(haar_dwt(img))
    assert np.max(np.abs(rec - img)) < 1e-12


def test_parseval_energy():
    rng = np.random.default_rng(1)
    img = rng.standard_normal((16, 10))
    coeffs = haar_dwt(img)
    assert coeffs.energy() == pytest.approx(float(np.sum(img * img)), abs=1e-10)


@settings(deadline=None, max_examples=40)
@given(
    h=st.integers(min_value=2, max_value=24).filter(lambda v: v % 2 == 0),
    w=st.integers(min_value=2, max_value=24).filter(lambda v: v % 2 == 0),
    seed=st.integers(min_value=0, max_value=2**31),
)
def test_round_trip_property(h, w, seed):
    img = np.random.default_rng(seed).random((h, w))
    assert np.max(np.abs(haar_idwt(haar_dwt(img)) - img)) < 1e-10


def test_odd_input_padded():
    img = np.random.default_rng(2).random((5, 7))
    coeffs = haar_dwt(img)
    assert coeffs.LL.shape == (3, 4)


def test_empty_image_rejected():
    with pytest.raises(DimensionError):
        haar_dwt(np.zeros((0, 4)))


def test_pad_to_even_adjoint_is_true_adjoint():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((5, 7))
    xp, pb, pr = pad_to_even(x)
    y = rng.standard_normal(xp.shape)
    lhs = float(np.sum(xp * y))
    rhs = float(np.sum(x * pad_to_even_adjoint(y, pb, pr)))
    assert lhs == pytest.approx(rhs, rel=1e-12)
