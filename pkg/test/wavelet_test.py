import numpy as np
import pytest
import pywt

from exc.exceptions import InvalidLengthError, UnsupportedBasisError
from ops.wavelet import (
    basis_filters,
    dwt1d,
    dwt2d,
    dwt2d_adjoint,
    idwt1d,
    idwt2d,
    idwt2d_adjoint,
    supports_shape,
    wavedec2,
    waverec2,
    waverec2_adjoint,
)

BASES = ["haar", "db2", "sym2", "coif2"]


@pytest.mark.parametrize("name", BASES)
def test_filters_match_pywavelets(name: str):
    basis = basis_filters(name)
    reference = pywt.Wavelet(name)
    np.testing.assert_allclose(basis.g, reference.rec_lo, atol=1e-9)
    np.testing.assert_allclose(basis.h, reference.rec_hi, atol=1e-9)


@pytest.mark.parametrize("name", BASES)
def test_filter_invariants(name: str):
    basis = basis_filters(name)
    assert basis.g.sum() == pytest.approx(np.sqrt(2.0), abs=1e-6)
    assert basis.h.sum() == pytest.approx(0.0, abs=1e-6)
    assert np.dot(basis.g, basis.g) == pytest.approx(1.0, abs=1e-6)
    assert np.dot(basis.h, basis.h) == pytest.approx(1.0, abs=1e-6)


def test_unknown_basis():
    with pytest.raises(UnsupportedBasisError):
        basis_filters("db7")


def test_haar_oracle_on_a_2x2_block():
    ll, lh, hl, hh = dwt2d(np.array([[1.0, 2.0], [3.0, 4.0]]), "haar")
    assert ll[0, 0] == pytest.approx(5.0)
    assert lh[0, 0] == pytest.approx(-1.0)
    assert hl[0, 0] == pytest.approx(-2.0)
    assert hh[0, 0] == pytest.approx(0.0, abs=1e-12)


def test_haar_1d_matches_pywavelets_periodization(rng: np.random.Generator):
    s = rng.normal(size=16)
    low, high = dwt1d(s, "haar")
    ref_low, ref_high = pywt.dwt(s, "haar", mode="periodization")
    np.testing.assert_allclose(low, ref_low, atol=1e-12)
    np.testing.assert_allclose(high, ref_high, atol=1e-12)


@pytest.mark.parametrize("name", BASES)
def test_1d_round_trip(rng: np.random.Generator, name: str):
    s = rng.normal(size=24)
    low, high = dwt1d(s, name)
    assert low.shape == high.shape == (12,)
    np.testing.assert_allclose(idwt1d(low, high, name), s, atol=1e-10)


def test_1d_length_errors():
    with pytest.raises(InvalidLengthError):
        dwt1d(np.ones(2), "db2")
    with pytest.raises(InvalidLengthError):
        dwt1d(np.ones(7), "haar")


def test_odd_extent_is_rejected():
    with pytest.raises(InvalidLengthError):
        dwt2d(np.ones((6, 5)), "haar")


@pytest.mark.parametrize("name", BASES)
def test_energy_is_preserved(rng: np.random.Generator, name: str):
    x = rng.normal(size=(16, 16))
    bands = dwt2d(x, name)
    assert sum(float(np.sum(b**2)) for b in bands) == pytest.approx(float(np.sum(x**2)), rel=1e-10)


@pytest.mark.parametrize("name", BASES)
@pytest.mark.parametrize("levels", [1, 2])
def test_perfect_reconstruction(rng: np.random.Generator, name: str, levels: int):
    for _ in range(100):
        x = rng.normal(size=(16, 16)).astype(np.float32)
        rec = waverec2(wavedec2(x, name, levels))
        assert rec.dtype == np.float32
        assert np.max(np.abs(rec - x)) <= 1e-5


def test_decomposition_layout():
    sb = wavedec2(np.zeros((16, 8)), "db2", 2)
    ids = [sid for sid, *_ in sb.bands()]
    assert ids == ["ll2", "lh2", "hl2", "hh2", "lh1", "hl1", "hh1"]
    assert sb.low.shape == (4, 2)
    assert sb.band("hh1").shape == (8, 4)
    with pytest.raises(KeyError):
        sb.band("hh3")


def test_batched_input_transforms_the_last_two_axes(rng: np.random.Generator):
    x = rng.normal(size=(3, 2, 8, 8))
    batched = dwt2d(x, "db2")
    single = dwt2d(x[1, 0], "db2")
    for b, s in zip(batched, single):
        np.testing.assert_allclose(b[1, 0], s, atol=1e-12)


def test_divisibility_is_required():
    with pytest.raises(InvalidLengthError):
        wavedec2(np.ones((12, 12)), "haar", 3)
    assert supports_shape((16, 144), "haar", 2)
    assert not supports_shape((16, 9), "haar", 1)


def test_adjoint_identities(rng: np.random.Generator):
    x = rng.normal(size=(8, 8))
    bands = [rng.normal(size=(4, 4)) for _ in range(4)]
    lhs = sum(float(np.sum(a * b)) for a, b in zip(dwt2d(x, "coif2"), bands))
    rhs = float(np.sum(x * dwt2d_adjoint(*bands, "coif2")))
    assert lhs == pytest.approx(rhs, rel=1e-10)

    y = rng.normal(size=(8, 8))
    lhs = float(np.sum(idwt2d(*bands, "db2") * y))
    rhs = sum(float(np.sum(a * b)) for a, b in zip(bands, idwt2d_adjoint(y, "db2")))
    assert lhs == pytest.approx(rhs, rel=1e-10)


def test_waverec2_adjoint_keeps_structure(rng: np.random.Generator):
    like = wavedec2(rng.normal(size=(8, 8)), "haar", 2)
    grad = waverec2_adjoint(np.ones((8, 8)), like)
    assert [sid for sid, *_ in grad.bands()] == [sid for sid, *_ in like.bands()]


def test_map_builds_a_new_set(rng: np.random.Generator):
    sb = wavedec2(rng.normal(size=(8, 8)), "haar", 1)
    zeroed = sb.map(lambda sid, band: band * 0 if sid != "ll1" else band)
    np.testing.assert_allclose(waverec2(zeroed), waverec2(sb.map(lambda sid, b: b if sid == "ll1" else np.zeros_like(b))))
    assert np.any(sb.band("hh1") != 0)


@pytest.mark.parametrize("name", BASES)
def test_gradient_of_the_low_band_sum(rng: np.random.Generator, name: str):
    x = rng.normal(size=(8, 8))
    ll, lh, hl, hh = dwt2d(x, name)
    analytic = dwt2d_adjoint(np.ones_like(ll), np.zeros_like(lh), np.zeros_like(hl), np.zeros_like(hh), name)
    eps = 1e-6
    for idx in [(0, 0), (3, 5), (7, 7), (4, 1)]:
        bump = np.zeros_like(x)
        bump[idx] = eps
        numeric = (np.sum(dwt2d(x + bump, name)[0]) - np.sum(dwt2d(x - bump, name)[0])) / (2 * eps)
        assert analytic[idx] == pytest.approx(numeric, rel=1e-6, abs=1e-9)
    # even and odd taps of an orthonormal low-pass each sum to 1/sqrt(2)
    np.testing.assert_allclose(analytic, np.full_like(x, 0.5), atol=1e-6)
