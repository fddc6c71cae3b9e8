from pydantic import ValidationError
import numpy as np
import pytest

from exc.exceptions import NonFiniteInputError, QuantizerError, UnsupportedBitsError
from ops.quantizer import (
    apot_levels,
    dequantize,
    init_scale,
    quantize,
    quantize_apot,
    quantize_backward,
    quantize_codes,
    round_half_away,
)
from schemas.schemas_quantizer import QuantizerSpec, QuantMode


def test_round_half_away_from_zero():
    np.testing.assert_array_equal(
        round_half_away(np.array([-2.5, -1.5, -0.5, 0.5, 1.5, 2.4])),
        [-3.0, -2.0, -1.0, 1.0, 2.0, 2.0],
    )


def test_signed_levels_and_clipping():
    spec = QuantizerSpec(bits=4, scale=1.0)
    x = np.array([0.5, -0.5, 2.0, -3.0, 0.0], dtype=np.float32)
    np.testing.assert_allclose(quantize(x, spec), [4 / 7, -4 / 7, 1.0, -1.0, 0.0], rtol=1e-6)


def test_unsigned_clamps_negatives():
    spec = QuantizerSpec(bits=2, mode=QuantMode.UNSIGNED, scale=3.0)
    out = quantize(np.array([-1.0, 0.4, 1.6, 9.0]), spec)
    np.testing.assert_allclose(out, [0.0, 0.0, 2.0, 3.0])


def test_quantized_values_take_at_most_2_pow_bits_minus_one_states(rng: np.random.Generator):
    out = quantize(rng.normal(size=1000), QuantizerSpec(bits=3))
    assert len(np.unique(out)) <= 7


def test_codes_times_step_equals_quantize(rng: np.random.Generator):
    spec = QuantizerSpec(bits=5, scale=0.8)
    x = rng.normal(size=50).astype(np.float32)
    codes = quantize_codes(x, spec)
    assert codes.dtype == np.int64
    assert np.abs(codes).max() <= spec.levels
    np.testing.assert_array_equal(dequantize(codes, spec), quantize(x, spec))


def test_full_precision_is_identity(rng: np.random.Generator):
    x = rng.normal(size=10)
    spec = QuantizerSpec(bits=32)
    np.testing.assert_array_equal(quantize(x, spec), x)
    grad, grad_s = quantize_backward(x, np.ones_like(x), spec.with_scale(1.0))
    np.testing.assert_array_equal(grad, np.ones_like(x))
    assert grad_s == 0.0


def test_scale_initialises_from_the_data():
    spec = init_scale(np.array([0.5, -2.0]), QuantizerSpec(bits=4))
    assert spec.scale == 2.0
    assert init_scale(np.zeros(3), QuantizerSpec(bits=4)).scale == 1.0
    assert init_scale(np.ones(3), spec).scale == 2.0


def test_scale_is_stored_at_float32_precision():
    spec = QuantizerSpec(bits=4, scale=0.1)
    assert spec.scale == float(np.float32(0.1))


def test_spec_validation():
    with pytest.raises(ValidationError):
        QuantizerSpec(bits=1)
    with pytest.raises(ValidationError):
        QuantizerSpec(bits=5, mode=QuantMode.APOT)
    with pytest.raises(ValidationError):
        QuantizerSpec(bits=4, scale=-1.0)
    assert QuantizerSpec(bits=1, mode=QuantMode.UNSIGNED).levels == 1


def test_non_finite_input_is_rejected():
    with pytest.raises(NonFiniteInputError):
        quantize(np.array([1.0, np.nan]), QuantizerSpec(bits=4, scale=1.0))


def test_codes_need_a_uniform_quantizer():
    with pytest.raises(QuantizerError):
        quantize_codes(np.ones(3), QuantizerSpec(bits=4, mode=QuantMode.APOT, scale=1.0))


def test_ste_and_pact_gradients():
    spec = QuantizerSpec(bits=4, scale=1.0)
    x = np.array([0.3, -0.2, 1.5, -2.0])
    upstream = np.array([1.0, 2.0, 3.0, 4.0])
    grad_x, grad_s = quantize_backward(x, upstream, spec)
    np.testing.assert_array_equal(grad_x, [1.0, 2.0, 0.0, 0.0])
    assert grad_s == pytest.approx(3.0 - 4.0)


def test_unsigned_scale_gradient_counts_only_the_upper_clip():
    spec = QuantizerSpec(bits=4, mode=QuantMode.UNSIGNED, scale=1.0)
    x = np.array([-0.5, 0.5, 2.0])
    grad_x, grad_s = quantize_backward(x, np.array([1.0, 1.0, 5.0]), spec)
    np.testing.assert_array_equal(grad_x, [0.0, 1.0, 0.0])
    assert grad_s == 5.0


def test_surrogate_gradient_matches_finite_differences(rng: np.random.Generator):
    spec = QuantizerSpec(bits=4, scale=0.9)
    x = rng.uniform(-1.5, 1.5, size=8)
    upstream = rng.normal(size=8)
    _, grad_s = quantize_backward(x, upstream, spec)
    eps = 1e-4

    def loss(s: float) -> float:
        return float(np.sum(quantize(x, spec.with_scale(s), rounding=False) * upstream))

    # The float32 scale rounding limits the precision of the probe
    numeric = (loss(0.9 + eps) - loss(0.9 - eps)) / (2 * eps)
    assert grad_s == pytest.approx(numeric, rel=1e-3, abs=1e-3)


# --------------------------------------------------------------------------


def test_apot_codebooks():
    np.testing.assert_allclose(apot_levels(3), [-1, -0.5, -0.25, 0, 0.25, 0.5, 1])
    four = apot_levels(4)
    assert four.shape == (15,)
    assert four.max() == 1.0
    assert np.all(np.diff(four) > 0)
    np.testing.assert_allclose(four[7:], np.array([0, 0.0625, 0.25, 0.5, 0.5625, 0.75, 1.0, 1.5]) / 1.5)
    with pytest.raises(UnsupportedBitsError):
        apot_levels(5)


def test_apot_projects_onto_the_nearest_level_with_ties_toward_zero():
    spec = QuantizerSpec(bits=3, mode=QuantMode.APOT, scale=2.0)
    x = np.array([0.75, 1.5, -0.9, 3.0, 0.2])
    np.testing.assert_allclose(quantize_apot(x, spec), [0.5, 1.0, -1.0, 2.0, 0.0])
    np.testing.assert_allclose(quantize(x, spec), quantize_apot(x, spec))


# --------------------------------------------------------------------------


@pytest.mark.parametrize("mode", [QuantMode.SIGNED, QuantMode.UNSIGNED])
def test_quantize_is_idempotent_and_monotone(rng: np.random.Generator, mode: QuantMode):
    spec = QuantizerSpec(bits=4, mode=mode, scale=1.25)
    x = np.sort(rng.normal(scale=1.5, size=2000))
    q = quantize(x, spec)
    np.testing.assert_array_equal(quantize(q, spec), q)
    assert np.all(np.diff(q) >= 0)


@pytest.mark.parametrize("factor", [0.25, 2.0, 4.0])
def test_quantize_is_scale_equivariant(rng: np.random.Generator, factor: float):
    x = rng.normal(size=500)
    spec = QuantizerSpec(bits=5, scale=0.75)
    scaled = quantize(factor * x, spec.with_scale(factor * 0.75))
    np.testing.assert_array_equal(scaled, factor * quantize(x, spec))


@pytest.mark.parametrize("mode,lower", [(QuantMode.SIGNED, -1.0), (QuantMode.UNSIGNED, 0.0)])
def test_error_against_the_clamp_is_at_most_half_a_step(rng: np.random.Generator, mode: QuantMode, lower: float):
    spec = QuantizerSpec(bits=3, mode=mode, scale=0.9)
    x = rng.normal(size=5000)
    clamped = np.clip(x, lower * spec.scale, spec.scale)
    assert np.max(np.abs(quantize(x, spec) - clamped)) <= spec.step / 2 + 1e-12


@pytest.mark.parametrize("bits", [3, 4])
def test_apot_matches_an_exhaustive_nearest_level_search(rng: np.random.Generator, bits: int):
    spec = QuantizerSpec(bits=bits, mode=QuantMode.APOT, scale=1.5)
    x = rng.uniform(-2.0, 2.0, size=3000)
    levels = apot_levels(bits)
    u = np.clip(x / 1.5, -1, 1)
    distance = np.abs(u[:, None] - levels[None, :])
    expected = np.empty_like(u)
    for i, row in enumerate(distance):
        tied = levels[row == row.min()]
        expected[i] = tied[np.argmin(np.abs(tied))]
    np.testing.assert_array_equal(quantize_apot(x, spec), expected * 1.5)


@pytest.mark.parametrize("bits", [3, 4])
def test_apot_is_odd_symmetric(rng: np.random.Generator, bits: int):
    spec = QuantizerSpec(bits=bits, mode=QuantMode.APOT, scale=1.0)
    levels = apot_levels(bits)
    midpoints = (levels[:-1] + levels[1:]) / 2
    x = np.concatenate([rng.uniform(-1.5, 1.5, size=1000), midpoints])
    np.testing.assert_array_equal(quantize_apot(-x, spec), -quantize_apot(x, spec))
