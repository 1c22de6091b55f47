from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lattice2pc.fixedpoint import (
    EncodingOverflow, FixedPointSpec, decode_2l, decode_l, encode_2l, encode_l, from_mantissas, quantize,
)
from lattice2pc.ring import Modulus, ZqMatrix

M108 = Modulus(108)

# round-half-away of 3.84 * 2^44 and -2.4 * 2^44, by exact rational evaluation
K1_MANTISSA = 67553994410557
K2_MANTISSA = -42221246506598


def round_half_away(fr: Fraction) -> int:
    n = abs(fr)
    whole = n.numerator // n.denominator
    if n - whole >= Fraction(1, 2):
        whole += 1
    return whole if fr >= 0 else -whole


def test_spec_ranges():
    s = FixedPointSpec(8, 1)
    assert (s.lo, s.hi, s.step) == (-128, 127, Fraction(1, 2))
    with pytest.raises(ValueError):
        FixedPointSpec(64, 1)


def test_quantize_examples():
    s = FixedPointSpec(8, 1)
    assert quantize(0.0, s).mantissas.tolist() == [[0]]
    assert quantize(1.5, s).mantissas.tolist() == [[3]]
    big = quantize(2.0 ** (8 - 1 - 1) + 1, s)
    assert big.mantissas.tolist() == [[127]] and big.saturated == 1
    assert quantize(-1000.0, s).mantissas.tolist() == [[-128]]
    assert quantize([[0.25, -0.25, 0.75]], s).mantissas.tolist() == [[1, -1, 2]]
    with pytest.raises(ValueError):
        quantize(float("nan"), s)


def test_gain_mantissas():
    K = quantize([[3.84, -2.4]], FixedPointSpec(53, 44))
    assert K.mantissas.tolist() == [[K1_MANTISSA, K2_MANTISSA]]
    assert encode_l(K, M108).to_ints().tolist() == [[K1_MANTISSA, K2_MANTISSA]]


@given(st.floats(-1e6, 1e6, allow_nan=False), st.integers(0, 40))
def test_quantize_matches_rational_rounding(x, l):
    s = FixedPointSpec(63, l)
    want = max(s.lo, min(s.hi, round_half_away(Fraction(x) * (1 << l))))
    assert quantize(x, s).mantissas[0, 0] == want


@given(st.lists(st.integers(-(2**52), 2**52 - 1), min_size=1, max_size=6))
def test_encode_round_trips(vals):
    s = FixedPointSpec(53, 44)
    m = from_mantissas([vals], s)
    assert np.array_equal(decode_l(encode_l(m, M108), s).mantissas, m.mantissas)
    assert encode_2l(m, M108) == encode_l(m, M108).shift_left(44)
    exact = decode_2l(encode_2l(m, M108), s, exact=True)
    assert list(exact.ravel()) == [Fraction(v, 1 << 44) for v in vals]


def test_encode_small_examples():
    s = FixedPointSpec(8, 2)
    m = Modulus(16)
    one = quantize(1.0, s)
    assert one.mantissas.tolist() == [[4]]
    assert encode_2l(one, m).to_ints().tolist() == [[16]]
    z = from_mantissas([[0, 0]], s)
    assert encode_l(z, m) == ZqMatrix.zeros(1, 2, m) == encode_2l(z, m)


def test_decode_2l_examples():
    s = FixedPointSpec(8, 3)
    m = Modulus(32)
    assert decode_2l(ZqMatrix.from_ints([[1 << 6]], m), s).tolist() == [[1.0]]
    assert decode_2l(ZqMatrix.zeros(1, 1, m), s).tolist() == [[0.0]]


def test_noiseless_product_decodes_exactly():
    s = FixedPointSpec(12, 4)
    m = Modulus(40)
    X = quantize([[1.5, -0.25], [3.0, 0.0625]], s)
    Y = quantize([[2.0], [-4.5]], s)
    Z = decode_2l(encode_l(X, m) @ encode_l(Y, m), s, exact=True)
    assert (Z == X.values().dot(Y.values())).all()


def test_overflow_detected():
    s = FixedPointSpec(20, 10)
    with pytest.raises(EncodingOverflow):
        encode_2l(from_mantissas([[1 << 18]], s), Modulus(24))
