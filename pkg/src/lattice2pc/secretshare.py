"""Two-party additive secret sharing over Z_q and its local share algebra.

Every operation here is a componentwise map: part 0 of the result depends only
on part 0 of the inputs, and likewise for part 1, so each party can apply it to
the share it holds without interaction.
"""

from __future__ import annotations

from dataclasses import dataclass

from .ring import DimensionError, ZqMatrix
from .sampling import RngStream, sample_uniform_zq


@dataclass(frozen=True)
class SharePair:
    part0: ZqMatrix
    part1: ZqMatrix

    def __post_init__(self):
        if self.part0.shape != self.part1.shape or self.part0.modulus != self.part1.modulus:
            raise DimensionError("share parts disagree in shape or modulus")

    @classmethod
    def from_parts(cls, part0: ZqMatrix, part1: ZqMatrix) -> "SharePair":
        """Distributed sharing: each part was sampled locally by its holder.

        This is how the online randomness R is formed (each party draws its own
        Z_3 part); the secret R = part0 + part1 has entries in {-2, ..., 2} and
        is never assembled by an honest party.
        """
        return cls(part0, part1)

    @property
    def shape(self):
        return self.part0.shape

    def __getitem__(self, i: int) -> ZqMatrix:
        return (self.part0, self.part1)[i]

    def __add__(self, other):
        return share_add(self, other)

    def __sub__(self, other):
        return share_sub(self, other)


def share(X: ZqMatrix, rng: RngStream | None = None, *, mask: ZqMatrix | None = None) -> SharePair:
    """(R, X - R) with R uniform; ``mask`` fixes R (test hook)."""
    if mask is None:
        if rng is None:
            raise ValueError("share needs an rng or an explicit mask")
        mask = sample_uniform_zq(rng, X.rows, X.cols, X.modulus)
    return SharePair(mask, X - mask)


def reconst(s: SharePair) -> ZqMatrix:
    return s.part0 + s.part1


def share_add(a: SharePair, b: SharePair) -> SharePair:
    return SharePair(a.part0 + b.part0, a.part1 + b.part1)


def share_sub(a: SharePair, b: SharePair) -> SharePair:
    return SharePair(a.part0 - b.part0, a.part1 - b.part1)


def share_mul_left(X: ZqMatrix, s: SharePair) -> SharePair:
    """Public X times shared Y: (X [Y]_0, X [Y]_1)."""
    return SharePair(X @ s.part0, X @ s.part1)


def share_mul_right(s: SharePair, Y: ZqMatrix) -> SharePair:
    return SharePair(s.part0 @ Y, s.part1 @ Y)


def share_transpose(s: SharePair) -> SharePair:
    return SharePair(s.part0.T, s.part1.T)
