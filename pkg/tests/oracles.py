"""Independent reference implementations used only by the tests.

Everything here works on plain Python integers (or floats for the Gaussian
weights) and shares no code with the package.
"""

import math
import struct


def centered(x: int, q: int) -> int:
    r = x % q
    return r - q if r >= q // 2 else r


def matmul(A, B, q):
    n, k, m = len(A), len(B), len(B[0])
    return [[centered(sum(A[i][j] * B[j][c] for j in range(k)), q) for c in range(m)] for i in range(n)]


def matadd(A, B, q):
    return [[centered(a + b, q) for a, b in zip(ra, rb)] for ra, rb in zip(A, B)]


def matsub(A, B, q):
    return [[centered(a - b, q) for a, b in zip(ra, rb)] for ra, rb in zip(A, B)]


def transpose(A):
    return [list(r) for r in zip(*A)]


def as_lists(arr):
    return [[int(v) for v in row] for row in arr]


# ChaCha20 block function, written from the RFC 8439 description

def _rotl(v, c):
    return ((v << c) & 0xFFFFFFFF) | (v >> (32 - c))


def _qr(s, a, b, c, d):
    s[a] = (s[a] + s[b]) & 0xFFFFFFFF; s[d] = _rotl(s[d] ^ s[a], 16)
    s[c] = (s[c] + s[d]) & 0xFFFFFFFF; s[b] = _rotl(s[b] ^ s[c], 12)
    s[a] = (s[a] + s[b]) & 0xFFFFFFFF; s[d] = _rotl(s[d] ^ s[a], 8)
    s[c] = (s[c] + s[d]) & 0xFFFFFFFF; s[b] = _rotl(s[b] ^ s[c], 7)


def chacha20_block(key: bytes, counter: int, nonce: bytes) -> bytes:
    const = [0x61707865, 0x3320646E, 0x79622D32, 0x6B206574]
    state = const + list(struct.unpack("<8I", key)) + [counter] + list(struct.unpack("<3I", nonce))
    w = list(state)
    for _ in range(10):
        _qr(w, 0, 4, 8, 12); _qr(w, 1, 5, 9, 13); _qr(w, 2, 6, 10, 14); _qr(w, 3, 7, 11, 15)
        _qr(w, 0, 5, 10, 15); _qr(w, 1, 6, 11, 12); _qr(w, 2, 7, 8, 13); _qr(w, 3, 4, 9, 14)
    return struct.pack("<16I", *[(a + b) & 0xFFFFFFFF for a, b in zip(w, state)])


def chacha20_keystream(key: bytes, nbytes: int, counter: int = 0, nonce: bytes = bytes(12)) -> bytes:
    out = b""
    while len(out) < nbytes:
        out += chacha20_block(key, counter, nonce)
        counter += 1
    return out[:nbytes]


def gaussian_pmf_float(sigma: float, bound: int) -> dict:
    """Truncated exp(-pi x^2 / sigma^2) weights in double precision."""
    w = {x: math.exp(-math.pi * x * x / (sigma * sigma)) for x in range(-bound, bound + 1)}
    total = math.fsum(w.values())
    return {x: v / total for x, v in w.items()}
