"""Centered integer and dense matrix arithmetic over Z_q with q = 2**b, b <= 127.

A matrix entry is stored as the b-bit two's-complement pattern of its centered
representative, split across two ``uint64`` words (``lo`` holds bits 0..63,
``hi`` bits 64..127).  Addition is carry-propagating word arithmetic; products
go through an exact limb kernel: wide operands are cut into limbs narrow enough
that a float64 BLAS product over a chunk of the inner dimension stays below
2**53, and every partial product is folded back into the accumulator mod q.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

U64 = np.uint64
_ONES = U64(0xFFFFFFFFFFFFFFFF)
_EXACT_BITS = 52
_SHORT_BITS = 21
_CHUNK = 4096

HEADER = struct.Struct("<IIH")
ENTRY_BYTES = 16


class DimensionError(ValueError):
    """Raised when operand shapes or moduli do not agree."""


@dataclass(frozen=True)
class Modulus:
    q_bits: int

    def __post_init__(self):
        if not 2 <= self.q_bits <= 127:
            raise ValueError(f"q_bits must be in [2, 127], got {self.q_bits}")

    @property
    def q(self) -> int:
        return 1 << self.q_bits

    @property
    def half(self) -> int:
        return 1 << (self.q_bits - 1)

    def __str__(self):
        return f"2^{self.q_bits}"


def reduce(x: int, m) -> int:
    """Centered residue x - floor((x + q/2) / q) * q, in [-q/2, q/2).

    ``m`` is a :class:`Modulus` or a plain integer q >= 2 (any q, not only
    powers of two, so the textbook definition can be checked directly).
    """
    q = m.q if isinstance(m, Modulus) else int(m)
    return x - ((2 * x + q) // (2 * q)) * q


# -- two-word helpers -------------------------------------------------------

def _mask(lo, hi, bits):
    if bits < 64:
        return lo & U64((1 << bits) - 1), np.zeros_like(hi)
    if bits == 64:
        return lo, np.zeros_like(hi)
    if bits < 128:
        return lo, hi & U64((1 << (bits - 64)) - 1)
    return lo, hi


def _add(alo, ahi, blo, bhi):
    lo = alo + blo
    carry = (lo < alo).astype(U64)
    return lo, ahi + bhi + carry


def _neg(lo, hi):
    nlo = ~lo + U64(1)
    carry = (nlo == 0).astype(U64)
    return nlo, ~hi + carry


def _shl(lo, hi, s):
    if s == 0:
        return lo, hi
    if s >= 64:
        return np.zeros_like(lo), lo << U64(s - 64)
    return lo << U64(s), (hi << U64(s)) | (lo >> U64(64 - s))


def _from_int64(a):
    a = np.asarray(a, dtype=np.int64)
    return a.astype(U64), np.where(a < 0, _ONES, U64(0))


def _bits(lo, hi, start, width):
    """Bits [start, start + width) of each 128-bit word pair, as uint64."""
    mask = U64((1 << width) - 1)
    if start >= 64:
        return (hi >> U64(start - 64)) & mask
    if start + width <= 64:
        return (lo >> U64(start)) & mask
    low = lo >> U64(start) if start else lo
    return (low | (hi << U64(64 - start))) & mask


def _ceil_log2(n: int) -> int:
    return max(n - 1, 0).bit_length()


class ZqMatrix:
    """Immutable dense matrix over Z_q (q a power of two)."""

    __slots__ = ("lo", "hi", "modulus", "_cache")

    def __init__(self, lo, hi, modulus: Modulus):
        lo = np.asarray(lo, dtype=U64)
        hi = np.asarray(hi, dtype=U64)
        if lo.ndim != 2 or lo.shape != hi.shape:
            raise DimensionError("lo/hi words must be equal-shape 2-D arrays")
        lo, hi = _mask(lo, hi, modulus.q_bits)
        lo.setflags(write=False)
        hi.setflags(write=False)
        self.lo = lo
        self.hi = hi
        self.modulus = modulus
        self._cache = {}

    # -- constructors --------------------------------------------------------

    @classmethod
    def from_ints(cls, values, modulus: Modulus) -> "ZqMatrix":
        arr = np.asarray(values)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.dtype.kind in "iub" and arr.dtype.itemsize <= 8 and arr.dtype != U64:
            lo, hi = _from_int64(arr.astype(np.int64))
            return cls(lo, hi, modulus)
        obj = np.asarray(values, dtype=object)
        if obj.ndim == 1:
            obj = obj.reshape(1, -1)
        r = obj % modulus.q
        lo = (r & 0xFFFFFFFFFFFFFFFF).astype(U64)
        hi = (r >> 64).astype(U64)
        return cls(lo, hi, modulus)

    @classmethod
    def zeros(cls, rows: int, cols: int, modulus: Modulus) -> "ZqMatrix":
        z = np.zeros((rows, cols), dtype=U64)
        return cls(z, z, modulus)

    @classmethod
    def identity(cls, size: int, modulus: Modulus) -> "ZqMatrix":
        return cls.from_ints(np.eye(size, dtype=np.int64), modulus)

    # -- views ---------------------------------------------------------------

    @property
    def shape(self) -> tuple[int, int]:
        return self.lo.shape

    @property
    def rows(self) -> int:
        return self.lo.shape[0]

    @property
    def cols(self) -> int:
        return self.lo.shape[1]

    def _sign(self):
        b = self.modulus.q_bits - 1
        if b >= 64:
            return (self.hi >> U64(b - 64)) & U64(1)
        return (self.lo >> U64(b)) & U64(1)

    def to_ints(self) -> np.ndarray:
        """Centered representatives as an object array of Python ints."""
        r = self.lo.astype(object) + (self.hi.astype(object) << 64)
        neg = self._sign().astype(bool)
        r[neg] -= self.modulus.q
        return r

    @property
    def entries(self) -> list[int]:
        return [int(v) for v in self.to_ints().ravel()]

    def small_values(self, bits: int = _SHORT_BITS):
        """Centered entries as int64 if every |entry| <= 2**bits, else None."""
        key = ("small", bits)
        if key not in self._cache:
            head = ZqMatrix(self.lo.ravel()[:64].reshape(1, -1), self.hi.ravel()[:64].reshape(1, -1),
                            self.modulus) if self.lo.size > 4096 else None
            if head is not None and head.small_values(bits) is None:
                self._cache[key] = None
                return None
            neg = self._sign().astype(bool)
            nlo, nhi = _mask(*_neg(self.lo, self.hi), self.modulus.q_bits)
            mlo = np.where(neg, nlo, self.lo)
            mhi = np.where(neg, nhi, self.hi)
            limit = U64(1 << bits)
            if np.all(mhi == 0) and np.all(mlo <= limit):
                mag = mlo.astype(np.int64)
                self._cache[key] = np.where(neg, -mag, mag)
            else:
                self._cache[key] = None
        return self._cache[key]

    def __getitem__(self, key) -> "ZqMatrix":
        if not (isinstance(key, tuple) and len(key) == 2):
            key = (key, slice(None))
        if not all(isinstance(k, slice) for k in key):
            raise TypeError("ZqMatrix supports 2-D slice indexing only")
        return ZqMatrix(self.lo[key], self.hi[key], self.modulus)

    def max_abs(self) -> int:
        vals = self.to_ints()
        return int(max((abs(v) for v in vals.ravel()), default=0))

    @property
    def T(self) -> "ZqMatrix":
        if "T" not in self._cache:
            t = ZqMatrix(self.lo.T.copy(), self.hi.T.copy(), self.modulus)
            t._cache["T"] = self
            self._cache["T"] = t
        return self._cache["T"]

    def limbs(self, width: int) -> list[tuple[np.ndarray, int]]:
        """Residues cut into ``width``-bit float64 limbs as (limb, shift) pairs."""
        key = ("limbs", width)
        if key not in self._cache:
            b = self.modulus.q_bits
            self._cache[key] = [
                (_bits(self.lo, self.hi, s, min(width, b - s)).astype(np.float64), s)
                for s in range(0, b, width)
            ]
        return self._cache[key]

    # -- arithmetic ------------------------------------------------------------

    def _check(self, other: "ZqMatrix"):
        if self.modulus != other.modulus:
            raise DimensionError(f"modulus mismatch: {self.modulus} vs {other.modulus}")

    def __add__(self, other):
        return mat_add(self, other)

    def __sub__(self, other):
        return mat_sub(self, other)

    def __neg__(self):
        return mat_neg(self)

    def __matmul__(self, other):
        return mat_mul(self, other)

    def shift_left(self, s: int) -> "ZqMatrix":
        """Multiply every entry by 2**s mod q."""
        if s >= 128:
            return ZqMatrix.zeros(self.rows, self.cols, self.modulus)
        return ZqMatrix(*_shl(self.lo, self.hi, s), self.modulus)

    def __eq__(self, other):
        if not isinstance(other, ZqMatrix):
            return NotImplemented
        return (
            self.modulus == other.modulus
            and self.shape == other.shape
            and np.array_equal(self.lo, other.lo)
            and np.array_equal(self.hi, other.hi)
        )

    __hash__ = None

    def __repr__(self):
        if self.lo.size <= 16:
            body = self.to_ints().tolist()
        else:
            body = f"<{self.rows}x{self.cols}>"
        return f"ZqMatrix({body}, q=2^{self.modulus.q_bits})"

    # -- wire format -----------------------------------------------------------

    def to_bytes(self) -> bytes:
        b = self.modulus.q_bits
        neg = self._sign().astype(bool)
        lo, hi = self.lo, self.hi
        if b < 64:
            lo = np.where(neg, lo | U64(~((1 << b) - 1) & 0xFFFFFFFFFFFFFFFF), lo)
            hi = np.where(neg, _ONES, hi)
        elif b == 64:
            hi = np.where(neg, _ONES, hi)
        elif b < 128:
            hi = np.where(neg, hi | U64(~((1 << (b - 64)) - 1) & 0xFFFFFFFFFFFFFFFF), hi)
        words = np.empty((lo.size, 2), dtype="<u8")
        words[:, 0] = lo.ravel()
        words[:, 1] = hi.ravel()
        return HEADER.pack(self.rows, self.cols, b) + words.tobytes()

    @classmethod
    def from_bytes(cls, data, offset: int = 0) -> tuple["ZqMatrix", int]:
        """Parse one matrix at ``offset``; return it with the offset just past it."""
        if len(data) - offset < HEADER.size:
            raise ValueError("truncated matrix header")
        rows, cols, b = HEADER.unpack_from(data, offset)
        modulus = Modulus(b)
        start = offset + HEADER.size
        end = start + rows * cols * ENTRY_BYTES
        if end > len(data):
            raise ValueError("truncated matrix body")
        words = np.frombuffer(data, dtype="<u8", count=2 * rows * cols, offset=start)
        words = words.reshape(rows * cols, 2).astype(U64)
        lo = words[:, 0].reshape(rows, cols)
        hi = words[:, 1].reshape(rows, cols)
        m = cls(lo, hi, modulus)
        if not np.array_equal(m.to_bytes()[HEADER.size:], bytes(data[start:end])):
            raise ValueError("entry outside the centered interval for its modulus")
        return m, end


def _require_same(X: ZqMatrix, Y: ZqMatrix):
    X._check(Y)
    if X.shape != Y.shape:
        raise DimensionError(f"shape mismatch: {X.shape} vs {Y.shape}")


def mat_add(X: ZqMatrix, Y: ZqMatrix) -> ZqMatrix:
    _require_same(X, Y)
    return ZqMatrix(*_add(X.lo, X.hi, Y.lo, Y.hi), X.modulus)


def mat_neg(X: ZqMatrix) -> ZqMatrix:
    return ZqMatrix(*_neg(X.lo, X.hi), X.modulus)


def mat_sub(X: ZqMatrix, Y: ZqMatrix) -> ZqMatrix:
    _require_same(X, Y)
    nlo, nhi = _neg(Y.lo, Y.hi)
    return ZqMatrix(*_add(X.lo, X.hi, nlo, nhi), X.modulus)


def mat_transpose(X: ZqMatrix) -> ZqMatrix:
    return X.T


def _short_part(M: ZqMatrix):
    small = M.small_values()
    if small is None:
        return None, 0
    bits = int(np.abs(small).max(initial=0)).bit_length()
    return [(small.astype(np.float64), 0)], bits


def mat_mul(X: ZqMatrix, Y: ZqMatrix) -> ZqMatrix:
    """Exact product X @ Y mod q, reduced once per output entry."""
    X._check(Y)
    if X.cols != Y.rows:
        raise DimensionError(f"inner dimension mismatch: {X.shape} @ {Y.shape}")
    b = X.modulus.q_bits
    inner = X.cols
    chunk = min(max(inner, 1), _CHUNK)
    lc = _ceil_log2(chunk)

    xp, xbits = _short_part(X)
    yp, ybits = _short_part(Y)
    xshort, yshort = xp is not None, yp is not None
    if xshort and yshort:
        while xbits + ybits + lc > _EXACT_BITS:
            chunk //= 2
            lc = _ceil_log2(chunk)
    elif xshort:
        yp = Y.limbs(_EXACT_BITS - xbits - lc)
    elif yshort:
        xp = X.limbs(_EXACT_BITS - ybits - lc)
    else:
        w = (_EXACT_BITS - lc) // 2
        xp, yp = X.limbs(w), Y.limbs(w)

    acc_lo = np.zeros((X.rows, Y.cols), dtype=U64)
    acc_hi = np.zeros_like(acc_lo)
    for i0 in range(0, inner, chunk):
        i1 = i0 + chunk
        for xl, sx in xp:
            xs = xl[:, i0:i1]
            for yl, sy in yp:
                s = sx + sy
                if s >= b:
                    continue
                prod = (xs @ yl[i0:i1, :]).astype(np.int64)
                plo, phi = _shl(*_from_int64(prod), s)
                acc_lo, acc_hi = _add(acc_lo, acc_hi, plo, phi)
    return ZqMatrix(acc_lo, acc_hi, X.modulus)


def vstack(blocks) -> ZqMatrix:
    blocks = list(blocks)
    for b in blocks[1:]:
        blocks[0]._check(b)
    return ZqMatrix(np.vstack([b.lo for b in blocks]), np.vstack([b.hi for b in blocks]), blocks[0].modulus)


def hstack(blocks) -> ZqMatrix:
    blocks = list(blocks)
    for b in blocks[1:]:
        blocks[0]._check(b)
    return ZqMatrix(np.hstack([b.lo for b in blocks]), np.hstack([b.hi for b in blocks]), blocks[0].modulus)
