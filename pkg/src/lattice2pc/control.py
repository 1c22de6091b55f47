"""Encrypted static state feedback u = K x + v over the two-party protocol.

The client owns the plant state; K is encrypted once in the offline phase and
each step the client shares x(tau), the operator shares the reference v(tau)
and the parties return shares of K x + v at scale 2**(2l).  The client applies
the recovered input to the plant.

Three control laws are tracked on the same trajectory:

* ``u``      the real law K x + v in double precision,
* ``u_quant`` the quantized law K~ x~ + v~ evaluated exactly,
* ``u_enc``  the protocol output.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .fixedpoint import FixedPointMatrix, FixedPointSpec, quantize
from .params import ProtocolParams, validate
from .protocol import (
    DEFAULT_BLOCK, Client, InvalidParameters, Operator, Party, client_offline, party_loop,
)
from .sampling import Role, derive_seed


@dataclass(frozen=True)
class PlantModel:
    A: np.ndarray
    B: np.ndarray
    x0: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        B = np.asarray(self.B, dtype=np.float64).reshape(A.shape[0], -1)
        x0 = np.asarray(self.x0, dtype=np.float64).ravel()
        if A.shape[0] != A.shape[1] or x0.size != A.shape[0]:
            raise ValueError(f"inconsistent plant dimensions A{A.shape}, B{B.shape}, x0({x0.size})")
        for a in (A, B, x0):
            a.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "x0", x0)

    @property
    def nx(self) -> int:
        return self.A.shape[0]

    @property
    def nu(self) -> int:
        return self.B.shape[1]


def reference_signal(tau: int, amplitude: float = 10.0) -> np.ndarray:
    """v(tau) = amplitude * sin(0.2 pi tau)."""
    return np.array([amplitude * math.sin(0.2 * math.pi * tau)])


def zero_reference(tau: int) -> np.ndarray:
    return np.zeros(1)


@dataclass(frozen=True)
class ControllerSpec:
    K: np.ndarray
    reference: Callable[[int], np.ndarray] = reference_signal

    def __post_init__(self):
        K = np.atleast_2d(np.asarray(self.K, dtype=np.float64))
        if not np.all(np.isfinite(K)):
            raise ValueError("gain must be finite")
        K.setflags(write=False)
        object.__setattr__(self, "K", K)

    def v(self, tau: int) -> np.ndarray:
        return np.asarray(self.reference(tau), dtype=np.float64).reshape(self.K.shape[0])


def example_plant() -> PlantModel:
    return PlantModel(A=[[1.1, -0.5], [0.0, 0.1]], B=[[0.0], [0.5]], x0=[1.0, -1.0])


def example_controller(reference=reference_signal) -> ControllerSpec:
    return ControllerSpec(K=[[3.84, -2.4]], reference=reference)


def plant_step(m: PlantModel, x, u) -> np.ndarray:
    return m.A @ np.asarray(x, dtype=np.float64) + m.B @ np.asarray(u, dtype=np.float64).ravel()


def true_control(c: ControllerSpec, x, tau: int) -> np.ndarray:
    return c.K @ np.asarray(x, dtype=np.float64) + c.v(tau)


@dataclass(frozen=True)
class QuantizedLaw:
    K: FixedPointMatrix
    x: FixedPointMatrix
    v: FixedPointMatrix
    u: np.ndarray  # Fractions

    @property
    def saturated(self) -> int:
        return self.K.saturated + self.x.saturated + self.v.saturated


def quantized_control(c: ControllerSpec, x, tau: int, spec: FixedPointSpec) -> QuantizedLaw:
    """K~ x~ + v~ with every operand quantized to Q_{k,l}, evaluated exactly."""
    Kq = quantize(c.K, spec)
    xq = quantize(np.asarray(x, dtype=np.float64).reshape(-1, 1), spec)
    vq = quantize(c.v(tau).reshape(-1, 1), spec)
    u = (Kq.values().dot(xq.values()) + vq.values()).ravel()
    return QuantizedLaw(Kq, xq, vq, u)


def quantization_bound(c: ControllerSpec, x, spec: FixedPointSpec) -> Fraction:
    """A priori bound on max |u - u~| when nothing saturates.

    Each operand is off by at most half a step h = 2**(-l-1), so per output
    |K x - K~ x~| <= h * sum|x| + h * sum|K~| and |v - v~| <= h.
    """
    h = Fraction(1, 1 << (spec.l + 1))
    xs = sum(Fraction(abs(float(e))) for e in np.ravel(x))
    Kq = quantize(c.K, spec).values()
    rows = [sum(abs(e) for e in row) for row in Kq]
    return h * xs + h * max(rows) + h


@dataclass
class LoopRecord:
    tau: int
    x: np.ndarray
    v: np.ndarray
    u_true: np.ndarray
    u_quant: np.ndarray  # Fractions
    u_enc: np.ndarray    # Fractions
    err_quant: Fraction
    err_true: Fraction
    saturated: int = 0


def _max_abs(a, b) -> Fraction:
    return max(abs(Fraction(p) - Fraction(q)) for p, q in zip(np.ravel(a), np.ravel(b)))


@dataclass
class LoopTrace:
    records: list[LoopRecord] = field(default_factory=list)
    transcript: object = None

    def __len__(self):
        return len(self.records)

    @property
    def max_err_quant(self) -> Fraction:
        return max(r.err_quant for r in self.records)

    @property
    def max_err_true(self) -> Fraction:
        return max(r.err_true for r in self.records)

    @property
    def saturated(self) -> int:
        return sum(r.saturated for r in self.records)

    def header(self) -> list[str]:
        r = self.records[0]

        def names(base, n):
            return [base] if n == 1 else [f"{base}{i + 1}" for i in range(n)]

        nx, nu = len(r.x), len(r.u_true)
        return ["tau", *[f"x{i + 1}" for i in range(nx)], *names("v", nu), *names("u_true", nu),
                *names("u_quant", nu), *names("u_enc", nu), "err_quant", "err_true"]

    def rows(self):
        f = lambda v: format(float(v), ".17g")
        for r in self.records:
            yield [str(r.tau), *map(f, r.x), *map(f, r.v), *map(f, r.u_true),
                   *map(f, r.u_quant), *map(f, r.u_enc), f(r.err_quant), f(r.err_true)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header())
        w.writerows(self.rows())
        return buf.getvalue()

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())


class EncryptedLoop:
    """Role functions of one closed-loop session; each takes an endpoint.

    The same object drives an in-process session (all roles on threads) or a
    single role of a multi-process TCP deployment.
    """

    def __init__(self, params: ProtocolParams, plant: PlantModel, controller: ControllerSpec,
                 steps: int = 50, *, seed: bytes = bytes(32), session: int = 1,
                 noiseless: bool = False, precompute: bool = True,
                 block_cols: int = DEFAULT_BLOCK, workers: int = 1):
        nu, nx = controller.K.shape
        if nx != plant.nx or nu != plant.nu:
            raise ValueError(f"gain {controller.K.shape} does not match plant ({plant.nx} states, {plant.nu} inputs)")
        params = params.with_dims(nu, nx, 1)
        problems = validate(params)
        if problems:
            raise InvalidParameters(problems)
        self.params = params
        self.plant = plant
        self.controller = controller
        self.n_eval = steps + 1
        self.seed = seed
        self.session = session
        self.noiseless = noiseless
        self.precompute = precompute
        self.block_cols = block_cols
        self.workers = workers

    def client_role(self, ep):
        spec = self.params.fp
        client = Client(self.params, derive_seed(self.seed, "client"), self.session)
        client_offline(client, ep, quantize(self.controller.K, spec), block_cols=self.block_cols,
                       workers=self.workers, noiseless=self.noiseless)
        x = self.plant.x0.copy()
        out = []
        for tau in range(self.n_eval):
            xq = quantize(x.reshape(-1, 1), spec)
            y0, y1 = client.online_begin(xq, tau)
            ep.send(Role.PARTY0, y0)
            ep.send(Role.PARTY1, y1)
            u_hat = client.online_finish(ep.recv(Role.PARTY0), ep.recv(Role.PARTY1), exact=True).ravel()
            out.append((x, u_hat))
            x = plant_step(self.plant, x, np.array([float(u) for u in u_hat]))
        return out

    def operator_role(self, ep):
        spec = self.params.fp
        operator = Operator(spec, self.params.modulus, derive_seed(self.seed, "operator"), self.session)
        for tau in range(self.n_eval):
            vq = quantize(self.controller.v(tau).reshape(-1, 1), spec)
            v0, v1 = operator.shares(vq, tau)
            ep.send(Role.PARTY0, v0)
            ep.send(Role.PARTY1, v1)

    def party_role(self, i: int):
        def run(ep):
            p = Party(i, derive_seed(self.seed, f"party{i}"), self.session)
            return party_loop(p, ep, self.n_eval, with_operator=True, precompute=self.precompute,
                              block_cols=self.block_cols, workers=self.workers)
        return run

    def roles(self) -> dict:
        return {Role.CLIENT: self.client_role, Role.OPERATOR: self.operator_role,
                Role.PARTY0: self.party_role(0), Role.PARTY1: self.party_role(1)}

    def trace(self, client_result, transcript=None) -> LoopTrace:
        """Evaluate u and u~ on the recorded states and pair them with u_enc."""
        trace = LoopTrace(transcript=transcript)
        for tau, (x, u_hat) in enumerate(client_result):
            u = true_control(self.controller, x, tau)
            law = quantized_control(self.controller, x, tau, self.params.fp)
            trace.records.append(LoopRecord(
                tau=tau, x=x, v=self.controller.v(tau), u_true=u, u_quant=law.u, u_enc=u_hat,
                err_quant=_max_abs(law.u, u_hat), err_true=_max_abs(u, u_hat), saturated=law.saturated,
            ))
        return trace


def run_encrypted_loop(params: ProtocolParams, plant: PlantModel, controller: ControllerSpec,
                       steps: int = 50, *, transport: str = "inproc", seed: bytes = bytes(32),
                       session: int = 1, timeout: float = 60.0, **kw) -> LoopTrace:
    """Closed loop over tau = 0..steps with the plant driven by the protocol output."""
    from .transport import run_session

    loop = EncryptedLoop(params, plant, controller, steps, seed=seed, session=session, **kw)
    results, transcript = run_session(loop.roles(), transport=transport, session=session, timeout=timeout)
    return loop.trace(results[Role.CLIENT], transcript)


def plaintext_loop(plant: PlantModel, controller: ControllerSpec, steps: int,
                   spec: FixedPointSpec | None = None) -> np.ndarray:
    """State trajectory driven by u (spec=None) or by the quantized law u~."""
    x = plant.x0.copy()
    xs = [x]
    for tau in range(steps):
        if spec is None:
            u = true_control(controller, x, tau)
        else:
            u = np.array([float(e) for e in quantized_control(controller, x, tau, spec).u])
        x = plant_step(plant, x, u)
        xs.append(x)
    return np.array(xs)
