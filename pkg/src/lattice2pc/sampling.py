"""Deterministic, seedable sampling of uniform Z_q, bounded Gaussian and Z_3 matrices.

Every random object in the protocol is drawn from an :class:`RngStream`, a
ChaCha20 keystream keyed by SHA-256(seed || stream_id).  Stream ids are 64-bit
tags laid out as::

    bits 56..63  role      (SETUP, CLIENT, OPERATOR, PARTY0, PARTY1)
    bits 48..55  phase     (SETUP, OFFLINE, ONLINE)
    bits 32..47  object    (A, B tile, S, E, E', share masks, R, ...)
    bits  0..31  index     (time step, tile number, ...)

so two objects never share keystream, and any object can be regenerated in
isolation from (seed, stream_id) alone.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from enum import IntEnum
from functools import lru_cache

import mpmath
import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms

from .ring import Modulus, ZqMatrix, U64

SEED_BYTES = 32


class Role(IntEnum):
    SETUP = 0
    CLIENT = 1
    OPERATOR = 2
    PARTY0 = 3
    PARTY1 = 4


class Phase(IntEnum):
    SETUP = 1
    OFFLINE = 2
    ONLINE = 3


class Tag(IntEnum):
    A = 1
    B_TILE = 2
    S = 3
    E = 4
    E_PRIME = 5
    S_SHARE = 6
    Y_SHARE = 7
    V_SHARE = 8
    R = 9
    SESSION = 10
    TEST = 0xFFFF


def stream_id(role: int, phase: int, tag: int, index: int = 0) -> int:
    if not 0 <= index < 1 << 32:
        raise ValueError("stream index must fit in 32 bits")
    return (int(role) << 56) | (int(phase) << 48) | (int(tag) << 32) | index


def parse_seed(text: str) -> bytes:
    """Decode a 64-hex-character seed."""
    text = text.strip().lower()
    if len(text) != 2 * SEED_BYTES:
        raise ValueError(f"seed must be {2 * SEED_BYTES} hex characters")
    return bytes.fromhex(text)


def derive_seed(master: bytes, label: str) -> bytes:
    """Independent per-role seed from a master seed."""
    return hashlib.sha256(b"lattice2pc/seed/" + label.encode() + b"/" + master).digest()


class RngStream:
    """Sequential ChaCha20 keystream for one (seed, stream_id) pair."""

    def __init__(self, seed: bytes, stream_id: int):
        if len(seed) != SEED_BYTES:
            raise ValueError(f"seed must be {SEED_BYTES} bytes")
        self.seed = bytes(seed)
        self.stream_id = stream_id
        self.counter = 0
        key = hashlib.sha256(
            b"lattice2pc/rng" + self.seed + stream_id.to_bytes(8, "little")
        ).digest()
        self._enc = Cipher(algorithms.ChaCha20(key, bytes(16)), mode=None).encryptor()

    def read(self, nbytes: int) -> bytes:
        self.counter += nbytes
        return self._enc.update(bytes(nbytes))

    def uint64(self, count: int) -> np.ndarray:
        return np.frombuffer(self.read(8 * count), dtype="<u8").astype(U64)

    def uint8(self, count: int) -> np.ndarray:
        return np.frombuffer(self.read(count), dtype=np.uint8)

    def __repr__(self):
        return f"RngStream(stream_id={self.stream_id:#018x}, counter={self.counter})"


def sample_uniform_zq(rng: RngStream, rows: int, cols: int, m: Modulus) -> ZqMatrix:
    """i.i.d. uniform entries of Z_q; each consumes 16 bytes of keystream."""
    words = rng.uint64(2 * rows * cols).reshape(rows * cols, 2)
    return ZqMatrix(words[:, 0].reshape(rows, cols), words[:, 1].reshape(rows, cols), m)


def z3_values(rng: RngStream, count: int) -> np.ndarray:
    """Uniform draws from {-1, 0, 1} by rejection on bytes (byte 255 is discarded)."""
    out = np.empty(0, dtype=np.int64)
    while out.size < count:
        need = count - out.size
        raw = rng.uint8(need + need // 64 + 16)
        raw = raw[raw < 255]
        out = np.concatenate([out, (raw % 3).astype(np.int64) - 1])
    return out[:count]


def sample_z3(rng: RngStream, rows: int, cols: int, m: Modulus) -> ZqMatrix:
    return ZqMatrix.from_ints(z3_values(rng, rows * cols).reshape(rows, cols), m)


@dataclass(frozen=True)
class GaussianSpec:
    """Discrete Gaussian with weights exp(-pi x^2 / sigma^2), truncated to [-bound, bound]."""

    sigma: float
    bound: int
    _thresholds: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.bound < 1:
            raise ValueError("bound must be at least 1")
        object.__setattr__(self, "_thresholds", _cdt(self.sigma, self.bound))

    @classmethod
    def from_sigma(cls, sigma: float = 3.2) -> "GaussianSpec":
        """Bound B = ceil(10 sigma); sigma = 3.2 gives B = 32."""
        return cls(sigma, math.ceil(round(10 * sigma, 9)))

    def pmf(self) -> dict[int, float]:
        """Exact truncated probabilities rho(x) / sum rho over [-bound, bound]."""
        return dict(zip(range(-self.bound, self.bound + 1), _exact_pmf(self.sigma, self.bound)))

    def sampler_pmf(self) -> dict[int, float]:
        """Probabilities realised by the 64-bit cumulative table."""
        edges = [0, *self._thresholds, 1 << 64]
        probs = [(b - a) / 2**64 for a, b in zip(edges, edges[1:])]
        probs += [0.0] * (2 * self.bound + 1 - len(probs))
        return dict(zip(range(-self.bound, self.bound + 1), probs))

    def variance(self) -> float:
        return sum(p * x * x for x, p in self.pmf().items())


@lru_cache(maxsize=None)
def _exact_pmf(sigma: float, bound: int) -> tuple:
    with mpmath.workprec(160):
        s = mpmath.mpf(sigma)
        rho = [mpmath.exp(-mpmath.pi * x * x / (s * s)) for x in range(-bound, bound + 1)]
        total = mpmath.fsum(rho)
        return tuple(r / total for r in rho)


@lru_cache(maxsize=None)
def _cdt(sigma: float, bound: int) -> tuple:
    # thresholds T_i = round(2^64 * CDF(-bound + i)); once a threshold reaches
    # 2^64 every larger value has zero mass and is dropped from the table
    with mpmath.workprec(160):
        acc = mpmath.mpf(0)
        out = []
        for p in _exact_pmf(sigma, bound)[:-1]:
            acc += p
            t = int(mpmath.nint(acc * 2**64))
            if t >= 1 << 64:
                break
            out.append(t)
        return tuple(out)


def gaussian_values(rng: RngStream, count: int, spec: GaussianSpec) -> np.ndarray:
    """int64 samples by inverse CDF over the precomputed table."""
    table = np.array(spec._thresholds, dtype=U64)
    u = rng.uint64(count)
    return np.searchsorted(table, u, side="right").astype(np.int64) - spec.bound


def sample_gaussian(rng: RngStream, rows: int, cols: int, spec: GaussianSpec, m: Modulus) -> ZqMatrix:
    return ZqMatrix.from_ints(gaussian_values(rng, rows * cols, spec).reshape(rows, cols), m)
