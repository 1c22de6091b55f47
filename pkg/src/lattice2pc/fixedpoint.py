"""k-bit fixed-point numbers with l fractional bits, and their Z_q encodings.

A value v in Q_{k,l} is stored by its mantissa z = v * 2**l, an integer in
[-2**(k-1), 2**(k-1) - 1].  Inputs to the protocol are embedded in Z_q at scale
2**l; products (and the additive offset in the control variant) come back at
scale 2**(2l).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .ring import Modulus, ZqMatrix


class EncodingOverflow(ValueError):
    """A mantissa does not fit the centered range of the modulus."""


@dataclass(frozen=True)
class FixedPointSpec:
    k: int
    l: int

    def __post_init__(self):
        # the window constraints (6 <= k, l < k) are reported by params.validate
        if not 1 <= self.k <= 63 or self.l < 0:
            raise ValueError(f"need 1 <= k <= 63 and l >= 0, got k={self.k}, l={self.l}")

    @property
    def lo(self) -> int:
        return -(1 << (self.k - 1))

    @property
    def hi(self) -> int:
        return (1 << (self.k - 1)) - 1

    @property
    def step(self) -> Fraction:
        return Fraction(1, 1 << self.l)


@dataclass(frozen=True)
class FixedPointMatrix:
    spec: FixedPointSpec
    mantissas: np.ndarray
    saturated: int = 0

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.mantissas, dtype=np.int64))
        if m.size and (m.min() < self.spec.lo or m.max() > self.spec.hi):
            raise ValueError("mantissa outside the k-bit range")
        m.setflags(write=False)
        object.__setattr__(self, "mantissas", m)

    @property
    def shape(self):
        return self.mantissas.shape

    def values(self) -> np.ndarray:
        """Exact values as an object array of Fractions."""
        scale = 1 << self.spec.l
        return np.vectorize(lambda z: Fraction(int(z), scale), otypes=[object])(self.mantissas)

    def to_float(self) -> np.ndarray:
        return np.ldexp(self.mantissas.astype(np.float64), -self.spec.l)


def quantize(x, spec: FixedPointSpec) -> FixedPointMatrix:
    """Mid-tread quantizer: round(x * 2**l) half away from zero, clamped to k bits."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if not np.all(np.isfinite(x)):
        raise ValueError("cannot quantize non-finite values")
    y = np.ldexp(x, spec.l)
    whole = np.trunc(y)
    # y - trunc(y) is exact in binary floating point, so the tie test is exact
    z = whole + np.sign(y) * (np.abs(y - whole) >= 0.5)
    # clip in float to a safe int64 range first; the k-bit clamp is done on integers
    wide = np.clip(z, -(2.0**62), 2.0**62).astype(np.int64)
    clipped = np.clip(wide, spec.lo, spec.hi)
    saturated = int(np.count_nonzero((clipped != wide) | (np.abs(z) > 2.0**62)))
    return FixedPointMatrix(spec, clipped, saturated)


def from_mantissas(z, spec: FixedPointSpec) -> FixedPointMatrix:
    return FixedPointMatrix(spec, np.asarray(z, dtype=np.int64))


def _embed(m: FixedPointMatrix, modulus: Modulus, extra_bits: int) -> ZqMatrix:
    if m.mantissas.size:
        low = int(m.mantissas.min()) << extra_bits
        high = int(m.mantissas.max()) << extra_bits
        if low < -modulus.half or high >= modulus.half:
            raise EncodingOverflow(
                f"mantissas scaled by 2^{extra_bits} leave the centered range of q=2^{modulus.q_bits}"
            )
    return ZqMatrix.from_ints(m.mantissas, modulus).shift_left(extra_bits)


def encode_l(m: FixedPointMatrix, modulus: Modulus) -> ZqMatrix:
    """2**l * X as centered residues (the mantissas themselves)."""
    return _embed(m, modulus, 0)


def encode_2l(m: FixedPointMatrix, modulus: Modulus) -> ZqMatrix:
    """2**(2l) * X: the mantissas shifted up by a further l bits."""
    return _embed(m, modulus, m.spec.l)


def decode_l(Xbar: ZqMatrix, spec: FixedPointSpec) -> FixedPointMatrix:
    return FixedPointMatrix(spec, np.array(Xbar.to_ints(), dtype=np.int64))


def decode_2l(Zbar: ZqMatrix, spec: FixedPointSpec, exact: bool = False) -> np.ndarray:
    """2**(-2l) * centered(Zbar), as floats or (``exact=True``) Fractions."""
    ints = Zbar.to_ints()
    scale = 1 << (2 * spec.l)
    if exact:
        return np.vectorize(lambda v: Fraction(int(v), scale), otypes=[object])(ints)
    return np.vectorize(lambda v: float(Fraction(int(v), scale)), otypes=[np.float64])(ints)
