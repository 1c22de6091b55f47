"""Bit-length windows that keep the protocol free of wrap-around and within epsilon.

Two constraints bound the fixed-point format for LWE/SIS parameters (n, q, t)
and inner dimension d2, with Gaussian bound B = 32:

* overflow:  6 <= k  and  2**(2k) * d2 < q - 128 t
* precision: 2**(2l - k - 4) * eps > d2 + t

The real-valued forms (``k_upper_bound``, ``l_lower_bound``) are evaluated with
mpmath at 160 bits; accept/reject decisions use the integer forms above so that
candidates sitting close to a window edge are never misclassified.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Callable

import mpmath

from .fixedpoint import FixedPointSpec
from .lattice import LweParams, SisParams
from .ring import Modulus
from .sampling import GaussianSpec

_PREC = 160
ASSUMED_BOUND = 32


class InfeasibleParameters(ValueError):
    """q <= 128 t: no bit length avoids wrap-around."""


@dataclass(frozen=True)
class ProtocolParams:
    lwe: LweParams
    sis: SisParams
    dims: tuple[int, int, int]
    fp: FixedPointSpec
    epsilon: float

    @classmethod
    def create(cls, *, n: int, q_bits: int, k: int, l: int, epsilon: float,
               t: int | None = None, dims=(1, 2, 1), sigma: float = 3.2) -> "ProtocolParams":
        modulus = Modulus(q_bits)
        if t is None:
            t = standard_t(n, modulus)
        return cls(LweParams(n, modulus, sigma), SisParams(t), tuple(dims), FixedPointSpec(k, l), epsilon)

    @property
    def n(self) -> int:
        return self.lwe.n

    @property
    def modulus(self) -> Modulus:
        return self.lwe.modulus

    @property
    def t(self) -> int:
        return self.sis.t

    @property
    def gaussian(self) -> GaussianSpec:
        return GaussianSpec.from_sigma(self.lwe.sigma)

    def with_dims(self, d1: int, d2: int, d3: int) -> "ProtocolParams":
        return replace(self, dims=(d1, d2, d3))

    def with_bits(self, k: int, l: int) -> "ProtocolParams":
        return replace(self, fp=FixedPointSpec(k, l))

    def summary(self) -> str:
        d1, d2, d3 = self.dims
        return (f"n={self.n} q=2^{self.modulus.q_bits} sigma={self.lwe.sigma} t={self.t} "
                f"dims=({d1},{d2},{d3}) k={self.fp.k} l={self.fp.l} eps=2^{math.log2(self.epsilon):g}")


def standard_t(n: int, m: Modulus) -> int:
    """SIS width t = 2 n log2 q."""
    return 2 * n * m.q_bits


def k_upper_bound(m: Modulus, t: int, d2: int) -> float:
    """1/2 log2((q - 128 t) / d2)."""
    room = m.q - 128 * t
    if room <= 0:
        raise InfeasibleParameters(f"q = 2^{m.q_bits} <= 128 t = {128 * t}")
    with mpmath.workprec(_PREC):
        return float(mpmath.log(mpmath.mpf(room) / d2, 2) / 2)


def l_lower_bound(k: float, d2: int, t: int, eps: float) -> float:
    """1/2 [k + 4 + log2((d2 + t) / eps)]."""
    if not eps > 0:
        raise ValueError("epsilon must be positive")
    with mpmath.workprec(_PREC):
        return float((mpmath.mpf(k) + 4 + mpmath.log(mpmath.mpf(d2 + t) / mpmath.mpf(eps), 2)) / 2)


def k_admissible(k: int, m: Modulus, t: int, d2: int) -> bool:
    return k >= 6 and (1 << (2 * k)) * d2 < m.q - 128 * t


def l_admissible(l: int, k: int, d2: int, t: int, eps: float) -> bool:
    return Fraction(2) ** (2 * l - k - 4) * Fraction(eps) > d2 + t


@dataclass(frozen=True)
class Window:
    k_max: float
    l_min: Callable[[float], float]
    ok: bool
    pairs: tuple[tuple[int, int], ...]

    def describe(self) -> str:
        """Window as "l_min < l < k < k_max", l_min taken at the k_max edge.

        l_min is rounded up and k_max to nearest, both to one decimal.
        """
        if not math.isfinite(self.k_max):
            return "infeasible (q <= 128 t)"
        return f"{_ceil1(self.l_min(self.k_max)):.1f} < l < k < {round(self.k_max, 1):.1f}"

    def best(self) -> tuple[int, int] | None:
        """Largest admissible k, with the smallest admissible l for it."""
        if not self.pairs:
            return None
        k = max(p[0] for p in self.pairs)
        return k, min(l for kk, l in self.pairs if kk == k)


def _ceil1(x: float) -> float:
    with mpmath.workprec(_PREC):
        return float(mpmath.ceil(mpmath.mpf(x) * 10 - mpmath.mpf("1e-9")) / 10)


def feasible_window(lwe: LweParams, t: int, dims, eps: float) -> Window:
    d2 = dims[1]
    try:
        k_max = k_upper_bound(lwe.modulus, t, d2)
    except InfeasibleParameters:
        return Window(-math.inf, lambda k: l_lower_bound(k, d2, t, eps), False, ())
    pairs = []
    for k in range(6, min(int(k_max) + 1, 63) + 1):
        if not k_admissible(k, lwe.modulus, t, d2):
            continue
        pairs += [(k, l) for l in range(0, k) if l_admissible(l, k, d2, t, eps)]
    return Window(k_max, lambda k: l_lower_bound(k, d2, t, eps), bool(pairs), tuple(pairs))


def validate(p: ProtocolParams) -> list[str]:
    """Named violations of the parameter invariants; empty when the set is usable."""
    problems = []
    d1, d2, d3 = p.dims
    k, l = p.fp.k, p.fp.l
    if min(p.dims) < 1:
        problems.append("matrix dimensions must be positive")
    if p.gaussian.bound > ASSUMED_BOUND:
        problems.append(f"Gaussian bound {p.gaussian.bound} exceeds the assumed B = {ASSUMED_BOUND}")
    if not p.epsilon > 0:
        problems.append("epsilon must be positive")
    if k < 6:
        problems.append("k below 6")
    if p.modulus.q <= 128 * p.t:
        problems.append("q <= 128 t: overflow bound unsatisfiable")
    elif (1 << (2 * k)) * max(d2, 1) >= p.modulus.q - 128 * p.t:
        problems.append(f"k = {k} breaks the overflow bound (k < {k_upper_bound(p.modulus, p.t, d2):.3f})")
    if l >= k:
        problems.append("l must be < k")
    if p.epsilon > 0 and not l_admissible(l, k, max(d2, 1), p.t, p.epsilon):
        problems.append(
            f"l = {l} misses the precision bound (l > {l_lower_bound(k, max(d2, 1), p.t, p.epsilon):.3f})"
        )
    return problems


def full_preset(dims=(1, 2, 1)) -> ProtocolParams:
    """n = 2^12, q = 2^108, sigma = 3.2, t = 2 n log2 q, (k, l) = (53, 44), eps = 2^-10."""
    return ProtocolParams.create(n=4096, q_bits=108, k=53, l=44, epsilon=2.0**-10, dims=dims)


def ci_preset(dims=(1, 2, 1)) -> ProtocolParams:
    """Reduced n = 512, q = 2^64, t = 2048 with (k, l) taken from the recomputed window."""
    eps = 2.0**-10
    lwe = LweParams(512, Modulus(64))
    k, l = feasible_window(lwe, 2048, dims, eps).best()
    return ProtocolParams.create(n=512, q_bits=64, t=2048, k=k, l=l, epsilon=eps, dims=dims)


PRESETS = {"paper-sec128": full_preset, "ci": ci_preset}
