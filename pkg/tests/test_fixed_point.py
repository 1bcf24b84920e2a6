import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ivisnav.fixed_point import (
    Q15_16,
    RAW_MAX,
    RAW_MIN,
    Fixed32,
    FixedMatrix,
    OverflowFlags,
    QFormat,
    fx_add,
    fx_mul,
    fx_sub,
    mac_dot,
    raw_from_word,
    raw_hex,
    rne_shift,
    to_fixed,
    to_real,
)

raws = st.integers(RAW_MIN, RAW_MAX)
formats = st.integers(1, 30).map(lambda f: QFormat(31 - f, f))


def fx(raw, fmt=Q15_16):
    return Fixed32(raw, fmt)


class TestQFormat:
    def test_default_is_q15_16(self):
        assert QFormat() == Q15_16
        assert str(Q15_16) == "Q15.16"

    def test_parse(self):
        assert QFormat.parse("Q15.16") == Q15_16
        assert QFormat.parse(" q7.24 ") == QFormat(7, 24)

    @pytest.mark.parametrize("text", ["Q15", "15.16", "Q16.16", "Q0.31", "Q31.0", ""])
    def test_parse_rejects(self, text):
        with pytest.raises(ValueError):
            QFormat.parse(text)

    def test_range(self):
        assert Q15_16.max_real == 2 ** 15 - 2 ** -16
        assert Q15_16.min_real == -(2 ** 15)
        assert Q15_16.lsb == 2 ** -16


def test_to_fixed_examples():
    assert to_fixed(0.5).raw == 32768
    for fmt in (Q15_16, QFormat(1, 30), QFormat(30, 1)):
        assert to_fixed(0.0, fmt).raw == 0
    flags = OverflowFlags()
    assert to_fixed(40000.0, Q15_16, flags).raw == 2 ** 31 - 1
    assert flags.saturated and flags.count == 1


def test_to_real_examples():
    assert to_real(fx(32768)) == 0.5
    assert to_real(fx(-65536)) == -1.0
    assert to_real(fx(1)) == 1.52587890625e-5


def test_add_mul_examples():
    assert fx_add(to_fixed(0.5), to_fixed(0.25)).raw == 49152
    flags = OverflowFlags()
    assert fx_add(fx(RAW_MAX), fx(1), flags).raw == RAW_MAX
    assert flags.saturated
    assert to_real(fx_mul(to_fixed(0.5), to_fixed(0.5))) == 0.25
    assert fx_mul(fx(1), fx(1)).raw == 0


def test_nan_rejected_and_inf_saturates():
    with pytest.raises(ValueError):
        to_fixed(math.nan)
    flags = OverflowFlags()
    assert to_fixed(-math.inf, Q15_16, flags).raw == RAW_MIN
    assert flags.count == 1


def test_mixed_formats_rejected():
    with pytest.raises(ValueError):
        fx_add(fx(1), fx(1, QFormat(7, 24)))


def test_rne_shift_ties_to_even():
    # 0.5, 1.5, 2.5, -0.5, -1.5 in units of the result LSB
    assert [rne_shift(v, 1) for v in (1, 3, 5, -1, -3)] == [0, 2, 2, 0, -2]
    assert rne_shift(7, 2) == 2  # 1.75
    assert rne_shift(5, 2) == 1  # 1.25
    assert rne_shift(3, 0) == 3


def test_bus_word_reinterpretation():
    assert raw_from_word(0xFFFFFFFF) == -1
    assert raw_from_word(0x7FFFFFFF) == RAW_MAX
    assert raw_hex(-1) == "ffffffff"
    assert fx(-65536).hex == "ffff0000"


def test_mac_single_rounding():
    # each product is 0.5 LSB; rounding per product would give 0, one rounding gives 2
    a = [1, 1, 1, 1]
    b = [1 << 15] * 4
    assert mac_dot(a, b, Q15_16) == 2


def test_mac_accumulator_saturates():
    flags = OverflowFlags()
    out = mac_dot([RAW_MAX] * 8, [RAW_MAX] * 8, Q15_16, flags)
    assert out == RAW_MAX and flags.count >= 1


def test_fixed_matrix_layout():
    M = FixedMatrix.from_raw([[1, 2, 3], [4, 5, 6]])
    assert M.shape == (2, 3)
    assert M.row(1) == (4, 5, 6)
    assert M.col(2) == (3, 6)
    assert M[1, 0].raw == 4
    with pytest.raises(ValueError):
        FixedMatrix(2, 2, (0, 0, 0))
    with pytest.raises(ValueError):
        FixedMatrix.from_raw([[1, 2], [3]])
    np.testing.assert_array_equal(FixedMatrix.identity(3).to_numpy(), np.eye(3))


@given(raws, formats)
def test_round_trip_exact(raw, fmt):
    x = to_real(Fixed32(raw, fmt))
    assert to_fixed(x, fmt).raw == raw


@given(st.floats(-32767.0, 32767.0, allow_nan=False))
def test_quantization_bound(x):
    assert abs(to_real(to_fixed(x)) - x) <= 2.0 ** -17


@given(raws, raws)
def test_add_commutes(a, b):
    assert fx_add(fx(a), fx(b)).raw == fx_add(fx(b), fx(a)).raw


@given(raws, raws)
def test_mul_commutes(a, b):
    assert fx_mul(fx(a), fx(b)).raw == fx_mul(fx(b), fx(a)).raw


@given(st.integers(-2 ** 28, 2 ** 28), st.integers(-2 ** 28, 2 ** 28), st.integers(-2 ** 28, 2 ** 28))
def test_add_associative_without_saturation(a, b, c):
    left = fx_add(fx_add(fx(a), fx(b)), fx(c))
    right = fx_add(fx(a), fx_add(fx(b), fx(c)))
    assert left.raw == right.raw


@given(raws)
def test_identities(a):
    assert fx_add(fx(a), fx(0)).raw == a
    assert fx_mul(fx(a), to_fixed(1.0)).raw == a


@given(raws, raws)
def test_saturation_clamps_to_nearest_bound(a, b):
    flags = OverflowFlags()
    exact = a + b
    out = fx_add(fx(a), fx(b), flags).raw
    assert out == min(max(exact, RAW_MIN), RAW_MAX)
    assert flags.saturated == (exact != out)
    out = fx_sub(fx(a), fx(b)).raw
    assert out == min(max(a - b, RAW_MIN), RAW_MAX)


@given(raws, raws)
def test_mul_matches_rounded_rational(a, b):
    # oracle: exact product in units of 2^-32, rounded half-to-even in Python's round()
    from fractions import Fraction
    exact = Fraction(a * b, 2 ** 16)
    expected = min(max(round(exact), RAW_MIN), RAW_MAX)
    assert fx_mul(fx(a), fx(b)).raw == expected
