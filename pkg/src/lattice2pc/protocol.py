"""One-round two-party approximate matrix multiplication over fixed-point inputs.

Roles:

* :class:`Client` owns X and Y.  It draws the CRS seed, encrypts X once
  (offline), then per evaluation shares Y and reconstructs the result.
* :class:`Party` (two of them) holds a share of the LWE key S and, per step, a
  share of Y; the parties exchange one message each (their share of the SIS
  commitment H) and return shares of the scaled product.
* :class:`Operator` optionally contributes shares of an additive offset
  (scale 2**(2l)), used by the control loop for the reference input.

The public matrix B (n x t) is never stored: :class:`ExpandedMatrix` regenerates
it tile by tile from the CRS seed whenever it is multiplied.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable

import numpy as np

from .fixedpoint import FixedPointMatrix, FixedPointSpec, decode_2l, encode_2l, encode_l
from .lattice import lwe_encrypt, sis_commit
from .params import ProtocolParams, validate
from .ring import DimensionError, Modulus, ZqMatrix, vstack
from .sampling import (
    GaussianSpec, Phase, RngStream, Role, Tag, derive_seed, sample_gaussian,
    sample_uniform_zq, stream_id, z3_values,
)
from .secretshare import SharePair, reconst, share

EXPANDER_TILE = 1024
DEFAULT_BLOCK = 4096


class ProtocolError(RuntimeError):
    """A role received input it cannot accept (wrong phase, session or step)."""


class InvalidParameters(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


class MsgType(IntEnum):
    HELLO = 0
    YSHARE = 1
    VSHARE = 2
    HSHARE = 3
    ZSHARE = 4
    SETUP = 5
    OFFLINE = 6


OFFLINE_KINDS = frozenset({MsgType.HELLO, MsgType.SETUP, MsgType.OFFLINE})


@dataclass(frozen=True)
class Message:
    kind: MsgType
    session: int
    step: int
    body: object = None


# -- common reference string -----------------------------------------------------

class ExpandedMatrix:
    """Uniform rows x cols matrix over Z_q defined by a seed, generated on demand.

    Columns come in tiles of ``EXPANDER_TILE``; tile j is drawn from its own
    stream, so any block of columns can be rebuilt independently and the
    matrix does not depend on ``block_cols`` or ``workers``.
    """

    def __init__(self, seed: bytes, rows: int, cols: int, modulus: Modulus,
                 block_cols: int = DEFAULT_BLOCK, workers: int = 1):
        self.seed = seed
        self.shape = (rows, cols)
        self.modulus = modulus
        self.tiles_per_block = max(1, block_cols // EXPANDER_TILE)
        self.workers = workers

    @property
    def rows(self):
        return self.shape[0]

    @property
    def cols(self):
        return self.shape[1]

    def tile_t(self, j: int) -> ZqMatrix:
        """Transpose of tile j: a (tile width) x rows matrix."""
        c0 = j * EXPANDER_TILE
        width = min(EXPANDER_TILE, self.cols - c0)
        rng = RngStream(self.seed, stream_id(Role.SETUP, Phase.SETUP, Tag.B_TILE, j))
        return sample_uniform_zq(rng, width, self.rows, self.modulus)

    def _blocks(self):
        ntiles = -(-self.cols // EXPANDER_TILE)
        step = self.tiles_per_block
        for j0 in range(0, ntiles, step):
            yield range(j0, min(j0 + step, ntiles))

    def _block_t(self, tiles) -> tuple[int, int, ZqMatrix]:
        parts = [self.tile_t(j) for j in tiles]
        c0 = tiles[0] * EXPANDER_TILE
        block = parts[0] if len(parts) == 1 else vstack(parts)
        return c0, c0 + block.rows, block

    def _map(self, fn):
        blocks = list(self._blocks())
        if self.workers > 1:
            with ThreadPoolExecutor(self.workers) as pool:
                return list(pool.map(fn, blocks))
        return [fn(b) for b in blocks]

    def materialize(self) -> ZqMatrix:
        return vstack(self._block_t(b)[2] for b in self._blocks()).T

    def __matmul__(self, R) -> ZqMatrix:
        """B @ R for R a ZqMatrix or an integer array of short entries."""
        if R.shape[0] != self.cols:
            raise DimensionError(f"B is {self.shape} but right operand is {R.shape}")
        small = isinstance(R, np.ndarray)

        def partial(tiles):
            c0, c1, bt = self._block_t(tiles)
            r = ZqMatrix.from_ints(R[c0:c1], self.modulus) if small else R[c0:c1]
            return r.T @ bt

        acc = None
        for p in self._map(partial):
            acc = p if acc is None else acc + p
        return acc.T

    @property
    def T(self) -> "_TransposedExpanded":
        return _TransposedExpanded(self)


class _TransposedExpanded:
    def __init__(self, base: ExpandedMatrix):
        self.base = base
        self.shape = base.shape[::-1]

    @property
    def T(self):
        return self.base

    def __matmul__(self, S: ZqMatrix) -> ZqMatrix:
        if S.rows != self.base.rows:
            raise DimensionError(f"B^T is {self.shape} but right operand is {S.shape}")

        def partial(tiles):
            return self.base._block_t(tiles)[2] @ S

        return vstack(self.base._map(partial))


@dataclass(frozen=True)
class SetupInfo:
    """Public parameters a party needs to rebuild the CRS."""

    seed: bytes
    n: int
    q_bits: int
    t: int
    dims: tuple[int, int, int]

    LAYOUT = struct.Struct("<32sIHQIII")

    def to_bytes(self) -> bytes:
        return self.LAYOUT.pack(self.seed, self.n, self.q_bits, self.t, *self.dims)

    @classmethod
    def from_bytes(cls, data: bytes) -> "SetupInfo":
        seed, n, q_bits, t, d1, d2, d3 = cls.LAYOUT.unpack(data)
        return cls(seed, n, q_bits, t, (d1, d2, d3))


@dataclass
class Crs:
    seed: bytes
    A: ZqMatrix
    B: ExpandedMatrix
    dims: tuple[int, int, int]

    @property
    def modulus(self) -> Modulus:
        return self.A.modulus

    @property
    def n(self) -> int:
        return self.A.rows

    @property
    def t(self) -> int:
        return self.B.cols

    def info(self) -> SetupInfo:
        return SetupInfo(self.seed, self.n, self.modulus.q_bits, self.t, self.dims)

    @classmethod
    def expand(cls, info: SetupInfo, block_cols: int = DEFAULT_BLOCK, workers: int = 1) -> "Crs":
        m = Modulus(info.q_bits)
        rng = RngStream(info.seed, stream_id(Role.SETUP, Phase.SETUP, Tag.A))
        A = sample_uniform_zq(rng, info.n, info.dims[1], m)
        B = ExpandedMatrix(info.seed, info.n, info.t, m, block_cols, workers)
        return cls(info.seed, A, B, info.dims)


def setup(params: ProtocolParams, seed: bytes, *, block_cols: int = DEFAULT_BLOCK,
          workers: int = 1, check: bool = True) -> Crs:
    """A uniform n x d2 and (virtual) B uniform n x t, both expanded from ``seed``."""
    if check:
        problems = validate(params)
        if problems:
            raise InvalidParameters(problems)
    info = SetupInfo(seed, params.n, params.modulus.q_bits, params.t, params.dims)
    return Crs.expand(info, block_cols, workers)


# -- offline phase ------------------------------------------------------------------

@dataclass(frozen=True)
class OfflineMaterial:
    C: ZqMatrix        # d2 x d1
    C_prime: ZqMatrix  # t x d1
    S_share: ZqMatrix  # n x d1, this party's part only

    def to_bytes(self) -> bytes:
        return self.C.to_bytes() + self.C_prime.to_bytes() + self.S_share.to_bytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "OfflineMaterial":
        C, off = ZqMatrix.from_bytes(data)
        Cp, off = ZqMatrix.from_bytes(data, off)
        S, off = ZqMatrix.from_bytes(data, off)
        if off != len(data):
            raise ValueError("trailing bytes after offline material")
        return cls(C, Cp, S)


@dataclass(frozen=True)
class OfflineSecrets:
    """Test-mode view of the offline randomness."""

    S: ZqMatrix
    E: ZqMatrix
    E_prime: ZqMatrix


def offline(crs: Crs, X: FixedPointMatrix, seed: bytes, gaussian: GaussianSpec | None = None,
            *, expose: bool = False, noiseless: bool = False):
    """Encrypt X under a fresh Gaussian key S and share S between the parties.

    Returns (material for P0, material for P1); with ``expose=True`` a third
    element carries (S, E, E').  ``noiseless=True`` forces S, E, E' to zero and
    exists only for tests.
    """
    gaussian = gaussian or GaussianSpec.from_sigma(3.2)
    d1, d2 = X.shape
    if d2 != crs.A.cols:
        raise DimensionError(f"X has {d2} columns but the CRS was built for d2 = {crs.A.cols}")
    m, n, t = crs.modulus, crs.n, crs.t

    def draw(tag, rows, cols):
        if noiseless:
            return ZqMatrix.zeros(rows, cols, m)
        rng = RngStream(seed, stream_id(Role.CLIENT, Phase.OFFLINE, tag))
        return sample_gaussian(rng, rows, cols, gaussian, m)

    S = draw(Tag.S, n, d1)
    E = draw(Tag.E, d2, d1)
    E_prime = draw(Tag.E_PRIME, t, d1)
    Xbar = encode_l(X, m)
    C = lwe_encrypt(crs.A, S, Xbar.T, E)
    C_prime = lwe_encrypt(crs.B, S, ZqMatrix.zeros(t, d1, m), E_prime)
    S_sh = share(S, RngStream(seed, stream_id(Role.CLIENT, Phase.OFFLINE, Tag.S_SHARE)))
    out = (OfflineMaterial(C, C_prime, S_sh.part0), OfflineMaterial(C, C_prime, S_sh.part1))
    if expose:
        return out + (OfflineSecrets(S, E, E_prime),)
    return out


# -- online phase -------------------------------------------------------------------

class Client:
    """Holds the inputs; does O(size of Y + size of Z) work per online step."""

    def __init__(self, params: ProtocolParams, seed: bytes, session: int = 0):
        self.params = params
        self.seed = seed
        self.session = session
        self._open: set[int] = set()

    @property
    def crs_seed(self) -> bytes:
        return derive_seed(self.seed, "crs")

    def setup(self, **kw) -> Crs:
        return setup(self.params, self.crs_seed, **kw)

    def offline(self, crs: Crs, X: FixedPointMatrix, **kw):
        return offline(crs, X, self.seed, self.params.gaussian, **kw)

    def online_begin(self, Y: FixedPointMatrix, step: int) -> tuple[Message, Message]:
        """Encode Y at scale 2**l and split it into one share per party."""
        if Y.shape[0] != self.params.dims[1]:
            raise DimensionError(f"Y has {Y.shape[0]} rows, expected d2 = {self.params.dims[1]}")
        Ybar = encode_l(Y, self.params.modulus)
        rng = RngStream(self.seed, stream_id(Role.CLIENT, Phase.ONLINE, Tag.Y_SHARE, step))
        sh = share(Ybar, rng)
        self._open.add(step)
        return (Message(MsgType.YSHARE, self.session, step, sh.part0),
                Message(MsgType.YSHARE, self.session, step, sh.part1))

    def online_finish(self, z0: Message, z1: Message, exact: bool = False) -> np.ndarray:
        """2**(-2l) * Reconst of the two returned shares."""
        for z in (z0, z1):
            if z.kind != MsgType.ZSHARE or z.session != self.session:
                raise ProtocolError(f"unexpected {z.kind.name} for session {z.session}")
        if z0.step != z1.step or z0.step not in self._open:
            raise ProtocolError(f"result shares for steps {z0.step}/{z1.step} do not match an open step")
        self._open.discard(z0.step)
        Zbar = reconst(SharePair(z0.body, z1.body))
        return decode_2l(Zbar, self.params.fp, exact=exact)


class Operator:
    """Shares an additive offset v at scale 2**(2l); never receives anything."""

    def __init__(self, spec: FixedPointSpec, modulus: Modulus, seed: bytes, session: int = 0):
        self.spec = spec
        self.modulus = modulus
        self.seed = seed
        self.session = session

    def shares(self, v: FixedPointMatrix, step: int) -> tuple[Message, Message]:
        vbar = encode_2l(v, self.modulus)
        rng = RngStream(self.seed, stream_id(Role.OPERATOR, Phase.ONLINE, Tag.V_SHARE, step))
        sh = share(vbar, rng)
        return (Message(MsgType.VSHARE, self.session, step, sh.part0),
                Message(MsgType.VSHARE, self.session, step, sh.part1))


@dataclass
class _Step:
    y: ZqMatrix
    v: ZqMatrix | None
    r: ZqMatrix
    h: ZqMatrix


class Party:
    """One computing party.  Holds exactly one part of every shared value."""

    def __init__(self, role: int, seed: bytes, session: int = 0, *, keep_randomness: bool = False):
        if role not in (0, 1):
            raise ValueError("party role must be 0 or 1")
        self.role = role
        self.seed = seed
        self.session = session
        self.crs: Crs | None = None
        self.material: OfflineMaterial | None = None
        self._pending: dict[int, _Step] = {}
        self._done: set[int] = set()
        self._br: dict[int, ZqMatrix] = {}
        self._keep = keep_randomness
        self.randomness: dict[int, ZqMatrix] = {}

    @property
    def rng_role(self) -> Role:
        return Role.PARTY0 if self.role == 0 else Role.PARTY1

    def load(self, crs: Crs, material: OfflineMaterial):
        d1 = crs.dims[0]
        if material.C.shape != (crs.A.cols, d1) or material.C_prime.shape != (crs.t, d1) \
                or material.S_share.shape != (crs.n, d1):
            raise DimensionError("offline material does not match the CRS dimensions")
        self.crs = crs
        self.material = material

    def _r_values(self, step: int, d3: int) -> np.ndarray:
        rng = RngStream(self.seed, stream_id(self.rng_role, Phase.ONLINE, Tag.R, step))
        return z3_values(rng, self.crs.t * d3).reshape(self.crs.t, d3)

    def precompute(self, steps: Iterable[int], d3: int):
        """B [R]_i for future steps in a single pass over B.

        The randomness [R]_i does not depend on any input, so it can be drawn
        and committed ahead of time; phase1 then only adds A [Y]_i.  Results
        are bit-identical to computing B [R]_i inside phase1.
        """
        self._need_material()
        steps = [s for s in steps if s not in self._done and s not in self._br]
        if not steps:
            return
        R = np.hstack([self._r_values(s, d3) for s in steps]).astype(np.int8)
        BR = self.crs.B @ R
        for i, s in enumerate(steps):
            self._br[s] = BR[:, i * d3:(i + 1) * d3]

    def _need_material(self):
        if self.crs is None or self.material is None:
            raise ProtocolError(f"party {self.role} has no offline material")

    def _check(self, msg: Message, kind: MsgType):
        if msg.kind != kind:
            raise ProtocolError(f"party {self.role} expected {kind.name}, got {msg.kind.name}")
        if msg.session != self.session:
            raise ProtocolError(f"party {self.role}: session {msg.session} != {self.session}")

    def phase1(self, y: Message, v: Message | None = None) -> Message:
        """Draw [R]_i from Z_3 and return [H]_i = A [Y]_i + B [R]_i for the peer."""
        self._need_material()
        self._check(y, MsgType.YSHARE)
        step = y.step
        if step in self._done or step in self._pending:
            raise ProtocolError(f"party {self.role}: step {step} already processed")
        if v is not None:
            self._check(v, MsgType.VSHARE)
            if v.step != step:
                raise ProtocolError(f"offset share for step {v.step} paired with step {step}")
        Y = y.body
        if Y.rows != self.crs.A.cols:
            raise DimensionError(f"Y share is {Y.shape}, expected {self.crs.A.cols} rows")
        r_vals = self._r_values(step, Y.cols)
        R = ZqMatrix.from_ints(r_vals, self.crs.modulus)
        br = self._br.pop(step, None)
        if br is not None and br.cols == Y.cols:
            H = (self.crs.A @ Y) + br
        else:
            H = sis_commit(self.crs.A, self.crs.B, Y, R)
        if self._keep:
            self.randomness[step] = R
        self._pending[step] = _Step(Y, None if v is None else v.body, R, H)
        return Message(MsgType.HSHARE, self.session, step, H)

    def phase2(self, other: Message) -> Message:
        """Open H and return [Z]_i = C^T [Y]_i + C'^T [R]_i - [S]_i^T H (+ [v]_i)."""
        self._check(other, MsgType.HSHARE)
        st = self._pending.pop(other.step, None)
        if st is None:
            raise ProtocolError(f"party {self.role}: no phase1 state for step {other.step}")
        mat = self.material
        H = st.h + other.body
        Z = (mat.C.T @ st.y) + (mat.C_prime.T @ st.r) - (mat.S_share.T @ H)
        if st.v is not None:
            Z = Z + st.v
        self._done.add(other.step)
        return Message(MsgType.ZSHARE, self.session, other.step, Z)


# -- role loops over a transport ----------------------------------------------------

def party_loop(party: Party, ep, steps: int, *, with_operator: bool = False,
               precompute: bool = True, block_cols: int = DEFAULT_BLOCK, workers: int = 1):
    """Receive setup and offline material, then serve ``steps`` online evaluations."""
    me = Role.PARTY0 if party.role == 0 else Role.PARTY1
    peer = Role.PARTY1 if party.role == 0 else Role.PARTY0
    info = _expect(ep.recv(Role.CLIENT), MsgType.SETUP).body
    material = _expect(ep.recv(Role.CLIENT), MsgType.OFFLINE).body
    party.load(Crs.expand(info, block_cols, workers), material)
    if precompute and steps > 0:
        party.precompute(range(steps), info.dims[2])
    for _ in range(steps):
        y = ep.recv(Role.CLIENT)
        v = ep.recv(Role.OPERATOR) if with_operator else None
        h = party.phase1(y, v)
        ep.send(peer, h)
        z = party.phase2(ep.recv(peer))
        ep.send(Role.CLIENT, z)
    return me


def _expect(msg: Message, kind: MsgType) -> Message:
    if msg.kind != kind:
        raise ProtocolError(f"expected {kind.name}, got {msg.kind.name}")
    return msg


def client_offline(client: Client, ep, X: FixedPointMatrix, *, block_cols: int = DEFAULT_BLOCK,
                   workers: int = 1, **kw):
    """Run setup + offline on the client and ship (crs info, material_i) to each party."""
    crs = client.setup(block_cols=block_cols, workers=workers)
    res = client.offline(crs, X, **kw)
    for role, mat in ((Role.PARTY0, res[0]), (Role.PARTY1, res[1])):
        ep.send(role, Message(MsgType.SETUP, client.session, 0, crs.info()))
        ep.send(role, Message(MsgType.OFFLINE, client.session, 0, mat))
    return crs, res


def run_mult(params: ProtocolParams, X: FixedPointMatrix, Y: FixedPointMatrix, *,
             transport: str = "inproc", seed: bytes = bytes(32), session: int = 1,
             exact: bool = False, block_cols: int = DEFAULT_BLOCK, timeout: float = 60.0):
    """Full Setup/Offline/Online for one product; returns (Z, transcript)."""
    from .transport import run_session

    params = params.with_dims(X.shape[0], X.shape[1], Y.shape[1])
    problems = validate(params)
    if problems:
        raise InvalidParameters(problems)
    client = Client(params, derive_seed(seed, "client"), session)

    def client_role(ep):
        client_offline(client, ep, X, block_cols=block_cols)
        y0, y1 = client.online_begin(Y, 0)
        ep.send(Role.PARTY0, y0)
        ep.send(Role.PARTY1, y1)
        return client.online_finish(ep.recv(Role.PARTY0), ep.recv(Role.PARTY1), exact=exact)

    def party_role(i):
        p = Party(i, derive_seed(seed, f"party{i}"), session)
        return lambda ep: party_loop(p, ep, 1, precompute=False, block_cols=block_cols)

    results, transcript = run_session(
        {Role.CLIENT: client_role, Role.PARTY0: party_role(0), Role.PARTY1: party_role(1)},
        transport=transport, session=session, timeout=timeout,
    )
    return results[Role.CLIENT], transcript
