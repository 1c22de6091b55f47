"""Command-line interface.

    lattice2pc params        feasible (k, l) window and validity of the chosen pair
    lattice2pc mult          encrypted product of two CSV matrices
    lattice2pc demo          encrypted control loop, trace written as CSV
    lattice2pc serve-party   host one computing party of a TCP deployment
    lattice2pc serve-operator  host the reference-input operator of a TCP deployment
    lattice2pc bench         per-phase timings over a range of t
    lattice2pc vectors       deterministic test vectors as JSON

Settings are resolved in the order: built-in defaults, ``--config`` JSON file,
``L2PC_*`` environment variables (e.g. ``L2PC_PRESET=ci``, ``L2PC_Q_BITS=64``),
then command-line flags.

Exit codes: 0 success, 2 usage, 3 invalid parameters, 4 transport failure,
5 acceptance violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from fractions import Fraction

import numpy as np

from . import control, params as P
from .fixedpoint import quantize
from .lattice import LweParams
from .protocol import (
    Client, InvalidParameters, Party, ProtocolError, offline, party_loop, run_mult, setup,
)
from .ring import Modulus
from .sampling import Role, derive_seed, parse_seed
from .transport import TcpEndpoint, TransportError, transcript_round_count

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PARAMS = 3
EXIT_TRANSPORT = 4
EXIT_ACCEPTANCE = 5

ENV_PREFIX = "L2PC_"

# option name -> (type, default); shared by every subcommand
SETTINGS = {
    "preset": (str, None),
    "n": (int, None),
    "q_bits": (int, None),
    "t": (int, None),
    "k": (int, None),
    "l": (int, None),
    "epsilon": (float, None),
    "sigma": (float, 3.2),
    "steps": (int, 50),
    "seed": (str, "0"),
    "session": (int, 1),
    "transport": (str, "inproc"),
    "listen": (str, None),
    "peer": (list, []),
    "out": (str, None),
    "timeout": (float, 60.0),
    "workers": (int, 1),
}

log = logging.getLogger("lattice2pc")


class UsageError(ValueError):
    pass


def _epsilon(text: str) -> float:
    """Accept 0.0009765625, 1e-3 or 2^-10."""
    text = text.strip()
    if text.startswith("2^"):
        return 2.0 ** float(text[2:])
    return float(text)


def _common(p: argparse.ArgumentParser):
    g = p.add_argument_group("parameters")
    g.add_argument("--preset", choices=sorted(P.PRESETS), default=None)
    g.add_argument("--n", type=int, default=None, help="LWE dimension")
    g.add_argument("--q-bits", dest="q_bits", type=int, default=None, help="q = 2^q_bits")
    g.add_argument("--t", type=int, default=None, help="SIS width (default 2 n q_bits)")
    g.add_argument("--k", type=int, default=None, help="fixed-point word length")
    g.add_argument("--l", type=int, default=None, help="fractional bits")
    g.add_argument("--epsilon", type=_epsilon, default=None, help="precision target, e.g. 2^-10")
    g.add_argument("--sigma", type=float, default=None)
    r = p.add_argument_group("run")
    r.add_argument("--steps", type=int, default=None, help="control horizon T")
    r.add_argument("--seed", default=None, help="64 hex characters or a decimal integer")
    r.add_argument("--session", type=int, default=None)
    r.add_argument("--transport", choices=["inproc", "tcp"], default=None)
    r.add_argument("--listen", default=None, help="host:port this process binds (tcp)")
    r.add_argument("--peer", action="append", default=None, metavar="ROLE=HOST:PORT",
                   help="address of another role; repeatable")
    r.add_argument("--out", default=None)
    r.add_argument("--timeout", type=float, default=None, help="seconds per receive")
    r.add_argument("--workers", type=int, default=None, help="threads for expanding B")
    r.add_argument("--config", default=None, help="JSON file of settings")
    r.add_argument("-v", "--verbose", action="store_true")


def _from_env(name: str, typ):
    raw = os.environ.get(ENV_PREFIX + name.upper())
    if raw is None:
        return None
    if typ is list:
        return [s for s in raw.split(",") if s]
    if name == "epsilon":
        return _epsilon(raw)
    return typ(raw)


def resolve(ns: argparse.Namespace) -> argparse.Namespace:
    """Merge defaults, config file, environment and flags (later wins)."""
    merged = {k: d for k, (_, d) in SETTINGS.items()}
    if getattr(ns, "config", None):
        with open(ns.config) as fh:
            cfg = json.load(fh)
        unknown = set(cfg) - set(SETTINGS)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        if "epsilon" in cfg and isinstance(cfg["epsilon"], str):
            cfg["epsilon"] = _epsilon(cfg["epsilon"])
        merged.update(cfg)
    for name, (typ, _) in SETTINGS.items():
        val = _from_env(name, typ)
        if val is not None:
            merged[name] = val
    for name in SETTINGS:
        val = getattr(ns, name, None)
        if val is not None:
            merged[name] = val
    out = argparse.Namespace(**vars(ns))
    for k, v in merged.items():
        setattr(out, k, v)
    return out


def seed_bytes(text) -> bytes:
    text = str(text).strip()
    if len(text) == 64:
        return parse_seed(text)
    try:
        value = int(text, 0)
    except ValueError:
        raise UsageError("seed must be 64 hex characters or an integer") from None
    if not 0 <= value < 1 << 256:
        raise UsageError("seed out of range")
    return value.to_bytes(32, "little")


def build_params(cfg, dims=(1, 2, 1)) -> P.ProtocolParams:
    """Preset (default ci) with any explicit flag overriding its field.

    When n, q_bits, t or epsilon differ from the preset and k/l are not
    given, (k, l) is taken from the recomputed window.
    """
    explicit = any(getattr(cfg, f) is not None for f in ("n", "q_bits", "t", "epsilon"))
    base = P.PRESETS[cfg.preset or "ci"](dims)
    if explicit or cfg.sigma != base.lwe.sigma:
        n = cfg.n or base.n
        q_bits = cfg.q_bits or base.modulus.q_bits
        eps = cfg.epsilon if cfg.epsilon is not None else base.epsilon
        m = Modulus(q_bits)
        if cfg.t is not None:
            t = cfg.t
        elif cfg.n is None and cfg.q_bits is None:
            t = base.t
        else:
            t = P.standard_t(n, m)
        k, l = cfg.k, cfg.l
        if k is None or l is None:
            best = P.feasible_window(LweParams(n, m, cfg.sigma), t, dims, eps).best()
            if best is None:
                best = (base.fp.k, base.fp.l)
            if k is None and l is None:
                k, l = best
            elif k is None:
                k = best[0]
            else:
                cands = [ll for kk, ll in P.feasible_window(LweParams(n, m, cfg.sigma), t, dims, eps).pairs
                         if kk == k]
                l = min(cands) if cands else max(k - 1, 0)
        return P.ProtocolParams.create(n=n, q_bits=q_bits, t=t, k=k, l=l, epsilon=eps,
                                       dims=dims, sigma=cfg.sigma)
    if cfg.k is not None or cfg.l is not None:
        return base.with_bits(cfg.k if cfg.k is not None else base.fp.k,
                              cfg.l if cfg.l is not None else base.fp.l)
    return base


def _parse_peers(items) -> dict:
    peers = {}
    for item in items or []:
        try:
            name, addr = item.split("=", 1)
            host, port = addr.rsplit(":", 1)
            peers[Role[name.strip().upper()]] = (host, int(port))
        except (ValueError, KeyError):
            raise UsageError(f"bad --peer {item!r}; expected ROLE=HOST:PORT with ROLE in "
                             f"client, operator, party0, party1") from None
    return peers


def _parse_addr(text: str):
    host, port = text.rsplit(":", 1)
    return host, int(port)


def _ratio(x: float) -> str:
    e = math.log2(x)
    return f"2^{e:g}" if e == int(e) else f"{x:g}"


# -- subcommands ------------------------------------------------------------------

def cmd_params(cfg) -> int:
    p = build_params(cfg)
    d2 = p.dims[1]
    print(p.summary())
    w = P.feasible_window(p.lwe, p.t, p.dims, p.epsilon)
    if not math.isfinite(w.k_max):
        print("window: infeasible (q <= 128 t, no k avoids wrap-around)")
        return EXIT_PARAMS
    print(f"window: {w.describe()}")
    print(f"k_max = {w.k_max:.6f}")
    print(f"l_min(k_max) = {w.l_min(w.k_max):.6f}")
    print(f"l_min(k={p.fp.k}) = {P.l_lower_bound(p.fp.k, d2, p.t, p.epsilon):.6f}")
    best = w.best()
    print(f"admissible integer pairs: {len(w.pairs)}; largest k: {best}")
    problems = P.validate(p)
    verdict = "valid" if not problems else "invalid"
    print(f"(k, l) = ({p.fp.k}, {p.fp.l}) {verdict}")
    for msg in problems:
        print(f"  - {msg}")
    return EXIT_OK if w.ok and not problems else EXIT_PARAMS


def read_matrix(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row and not row[0].startswith("#")]
    if not rows or len({len(r) for r in rows}) != 1:
        raise UsageError(f"{path}: expected a non-empty rectangular CSV of numbers")
    return np.array(rows)


def write_matrix(M, fh):
    w = csv.writer(fh, lineterminator="\n")
    for row in np.atleast_2d(M):
        w.writerow(format(float(v), ".17g") for v in row)


def cmd_mult(cfg) -> int:
    X, Y = read_matrix(cfg.x), read_matrix(cfg.y)
    if X.shape[1] != Y.shape[0]:
        raise UsageError(f"cannot multiply {X.shape} by {Y.shape}")
    dims = (X.shape[0], X.shape[1], Y.shape[1])
    p = build_params(cfg, dims)
    Xq, Yq = quantize(X, p.fp), quantize(Y, p.fp)
    if Xq.saturated or Yq.saturated:
        log.warning("%d entries saturated at k = %d", Xq.saturated + Yq.saturated, p.fp.k)
    Z, transcript = run_mult(p, Xq, Yq, transport=cfg.transport, seed=seed_bytes(cfg.seed),
                             session=cfg.session, exact=True, timeout=cfg.timeout)
    if cfg.out:
        with open(cfg.out, "w", newline="") as fh:
            write_matrix(Z, fh)
    else:
        write_matrix(Z, sys.stdout)
    exact = Xq.values().dot(Yq.values())
    err = max(abs(a - b) for a, b in zip(exact.ravel(), Z.ravel()))
    rounds = transcript_round_count(transcript, step=0)
    print(f"rounds: {rounds}", file=sys.stderr)
    for kind, size in sorted(transcript.bytes_by_kind().items()):
        print(f"bytes {kind}: {size}", file=sys.stderr)
    print(f"max |X~Y~ - Z| = {float(err):.3e} (epsilon {_ratio(p.epsilon)})", file=sys.stderr)
    return EXIT_OK if err < Fraction(p.epsilon) else EXIT_ACCEPTANCE


def _loop(cfg) -> control.EncryptedLoop:
    p = build_params(cfg)
    ref = control.zero_reference if getattr(cfg, "zero_reference", False) else control.reference_signal
    return control.EncryptedLoop(p, control.example_plant(), control.example_controller(ref), cfg.steps,
                                 seed=seed_bytes(cfg.seed), session=cfg.session, workers=cfg.workers)


def _tcp_endpoint(cfg, role: Role) -> TcpEndpoint:
    if not cfg.listen:
        raise UsageError("--listen is required for a tcp role")
    return TcpEndpoint(role, cfg.session, _parse_addr(cfg.listen), _parse_peers(cfg.peer),
                       timeout=cfg.timeout)


def cmd_demo(cfg) -> int:
    from .transport import run_session

    loop = _loop(cfg)
    t0 = time.monotonic()
    if cfg.transport == "tcp" and cfg.peer:
        # this process is the client; the other roles run elsewhere
        ep = _tcp_endpoint(cfg, Role.CLIENT)
        try:
            result = loop.client_role(ep)
        finally:
            ep.close()
        trace = loop.trace(result, ep.transcript)
    else:
        results, transcript = run_session(loop.roles(), transport=cfg.transport,
                                          session=cfg.session, timeout=cfg.timeout)
        trace = loop.trace(results[Role.CLIENT], transcript)
    out = cfg.out or "loop_trace.csv"
    trace.write_csv(out)
    eps = Fraction(loop.params.epsilon)
    ok = trace.max_err_quant < eps
    print(loop.params.summary())
    print(f"steps: {len(trace)} in {time.monotonic() - t0:.1f}s, trace written to {out}")
    if trace.saturated:
        print(f"warning: {trace.saturated} quantized operands saturated at k = {loop.params.fp.k}")
    print(f"max err_quant = {float(trace.max_err_quant):.6e}")
    print(f"max err_true  = {float(trace.max_err_true):.6e}")
    print(f"max err_quant < {_ratio(loop.params.epsilon)}: {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_ACCEPTANCE


def cmd_serve_party(cfg) -> int:
    role = Role.PARTY0 if cfg.role == 0 else Role.PARTY1
    loop = _loop(cfg) if not cfg.no_operator else None
    steps = loop.n_eval if loop else cfg.steps
    ep = _tcp_endpoint(cfg, role)
    try:
        if loop:
            loop.party_role(cfg.role)(ep)
        else:
            party = Party(cfg.role, derive_seed(seed_bytes(cfg.seed), f"party{cfg.role}"), cfg.session)
            party_loop(party, ep, steps, with_operator=False, workers=cfg.workers)
    finally:
        ep.close()
    print(f"{role.name}: served {steps} steps")
    return EXIT_OK


def cmd_serve_operator(cfg) -> int:
    loop = _loop(cfg)
    ep = _tcp_endpoint(cfg, Role.OPERATOR)
    try:
        loop.operator_role(ep)
        # keep the connections open until the parties have read everything
        time.sleep(cfg.linger)
    finally:
        ep.close()
    print(f"OPERATOR: sent {loop.n_eval} offsets")
    return EXIT_OK


def cmd_bench(cfg) -> int:
    base = build_params(cfg)
    n, m, eps = base.n, base.modulus, base.epsilon
    seed = seed_bytes(cfg.seed)
    ts = cfg.t_values or [2**11, 2**13, 2**15]
    cols = ["t", "setup+offline", "client share", "client reconst", "phase1", "phase2", "H bytes"]
    print(f"n={n} q=2^{m.q_bits} dims={base.dims} repeats={cfg.repeats}")
    print(" | ".join(f"{c:>14}" for c in cols))
    for t in ts:
        p = P.ProtocolParams.create(n=n, q_bits=m.q_bits, t=t, k=base.fp.k, l=base.fp.l,
                                    epsilon=eps, dims=base.dims, sigma=base.lwe.sigma)
        best = P.feasible_window(p.lwe, t, p.dims, eps).best()
        if best:
            p = p.with_bits(*best)
        client = Client(p, derive_seed(seed, "client"))
        rng = np.random.default_rng(0)
        X = quantize(rng.uniform(-1, 1, (p.dims[0], p.dims[1])), p.fp)
        Y = quantize(rng.uniform(-1, 1, (p.dims[1], p.dims[2])), p.fp)
        t0 = time.perf_counter()
        crs = setup(p, client.crs_seed, check=False, workers=cfg.workers)
        mats = offline(crs, X, client.seed, p.gaussian)
        t_off = time.perf_counter() - t0
        parties = [Party(i, derive_seed(seed, f"party{i}")) for i in (0, 1)]
        for party, mat in zip(parties, mats):
            party.load(crs, mat)
        share_t = rec_t = ph1 = ph2 = 0.0
        hbytes = 0
        for step in range(cfg.repeats):
            t0 = time.perf_counter()
            ys = client.online_begin(Y, step)
            share_t += time.perf_counter() - t0
            t0 = time.perf_counter()
            hs = [pt.phase1(y) for pt, y in zip(parties, ys)]
            ph1 += (time.perf_counter() - t0) / 2
            t0 = time.perf_counter()
            zs = [parties[0].phase2(hs[1]), parties[1].phase2(hs[0])]
            ph2 += (time.perf_counter() - t0) / 2
            t0 = time.perf_counter()
            client.online_finish(*zs)
            rec_t += time.perf_counter() - t0
            from .transport import encode_frame
            hbytes = len(encode_frame(hs[0]))
        r = cfg.repeats
        vals = [t, t_off, share_t / r, rec_t / r, ph1 / r, ph2 / r]
        print(" | ".join([f"{t:>14d}", *(f"{v:>13.4f}s" for v in vals[1:]), f"{hbytes:>14d}"]))
    print(f"H frame = n*d3*16 + 40 = {n * base.dims[2] * 16 + 40} bytes")
    return EXIT_OK


def cmd_vectors(cfg) -> int:
    """Deterministic vectors: sampler outputs and one small product."""
    from .sampling import GaussianSpec, Phase, RngStream, Tag, gaussian_values, stream_id, z3_values

    seed = seed_bytes(cfg.seed)
    sid = stream_id(Role.SETUP, Phase.SETUP, Tag.TEST)
    g = gaussian_values(RngStream(seed, sid), 32, GaussianSpec.from_sigma(3.2))
    z = z3_values(RngStream(seed, sid), 32)
    p = P.ProtocolParams.create(n=64, q_bits=40, t=256, k=12, l=9, epsilon=2.0**-4, dims=(2, 2, 2))
    best = P.feasible_window(p.lwe, p.t, p.dims, p.epsilon).best()
    p = p.with_bits(*best)
    X = quantize([[0.5, -1.25], [2.0, 0.75]], p.fp)
    Y = quantize([[1.5, 0.25], [-0.5, 1.0]], p.fp)
    Z, _ = run_mult(p, X, Y, seed=seed, exact=True)
    doc = {
        "seed": seed.hex(),
        "gaussian_sigma_3.2": g.tolist(),
        "z3": z.tolist(),
        "mult": {"params": p.summary(), "X": X.mantissas.tolist(), "Y": Y.mantissas.tolist(),
                 "Z_2l": [[int(v * (1 << (2 * p.fp.l))) for v in row] for row in Z]},
    }
    text = json.dumps(doc, indent=2)
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lattice2pc", description="Two-party encrypted matrix products and control.")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("params", help="feasible (k, l) window")
    _common(sp)
    sp.set_defaults(fn=cmd_params)

    sp = sub.add_parser("mult", help="encrypted product of two CSV matrices")
    _common(sp)
    sp.add_argument("x", help="CSV file for X")
    sp.add_argument("y", help="CSV file for Y")
    sp.set_defaults(fn=cmd_mult)

    sp = sub.add_parser("demo", help="encrypted control loop")
    _common(sp)
    sp.add_argument("--zero-reference", action="store_true", help="use v = 0")
    sp.set_defaults(fn=cmd_demo)

    sp = sub.add_parser("serve-party", help="host one party over tcp")
    _common(sp)
    sp.add_argument("--role", type=int, choices=[0, 1], required=True)
    sp.add_argument("--no-operator", action="store_true", help="serve plain products (no offset input)")
    sp.add_argument("--zero-reference", action="store_true")
    sp.set_defaults(fn=cmd_serve_party)

    sp = sub.add_parser("serve-operator", help="host the operator over tcp")
    _common(sp)
    sp.add_argument("--zero-reference", action="store_true")
    sp.add_argument("--linger", type=float, default=1.0, help="seconds to keep connections open after sending")
    sp.set_defaults(fn=cmd_serve_operator)

    sp = sub.add_parser("bench", help="per-phase timings")
    _common(sp)
    sp.add_argument("--t-values", type=lambda s: [int(v) for v in s.split(",")], default=None,
                    help="comma-separated t values")
    sp.add_argument("--repeats", type=int, default=3)
    sp.set_defaults(fn=cmd_bench)

    sp = sub.add_parser("vectors", help="emit deterministic test vectors")
    _common(sp)
    sp.set_defaults(fn=cmd_vectors)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    ns = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(ns)
        return ns.fn(cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InvalidParameters, P.InfeasibleParameters) as exc:
        print(f"invalid parameters: {exc}", file=sys.stderr)
        return EXIT_PARAMS
    except (TransportError, ConnectionError, ProtocolError) as exc:
        print(f"transport failure: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT


if __name__ == "__main__":
    sys.exit(main())
