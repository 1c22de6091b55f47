"""LWE matrix encryption and SIS matrix commitment.

Both take their noise and randomness as explicit arguments so that callers
(and tests) control exactly which E and R enter the computation.  ``A``/``B``
may be any object supporting ``.T`` and ``@`` against a :class:`ZqMatrix`,
which lets the protocol pass a seed-expanded B that is never materialised.
"""

from __future__ import annotations

from dataclasses import dataclass

from .ring import DimensionError, Modulus, ZqMatrix


@dataclass(frozen=True)
class LweParams:
    n: int
    modulus: Modulus
    sigma: float = 3.2

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("LWE dimension n must be >= 1")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


@dataclass(frozen=True)
class SisParams:
    t: int

    def __post_init__(self):
        if self.t < 1:
            raise ValueError("SIS dimension t must be >= 1")


def lwe_encrypt(A, S: ZqMatrix, M: ZqMatrix, E: ZqMatrix) -> ZqMatrix:
    """A^T S + M + E mod q, column i encrypting M[:, i] under key S[:, i]."""
    if A.shape[0] != S.rows:
        raise DimensionError(f"A is {A.shape} but S is {S.shape}")
    return (A.T @ S) + M + E


def sis_commit(A, B, M: ZqMatrix, R: ZqMatrix) -> ZqMatrix:
    """A M + B R mod q, committing column-wise to M with short randomness R."""
    if A.shape[0] != B.shape[0]:
        raise DimensionError(f"A is {A.shape} but B is {B.shape}")
    return (A @ M) + (B @ R)
