import struct
import time

import numpy as np
import pytest

from lattice2pc.params import ci_preset
from lattice2pc.protocol import Message, MsgType, OfflineMaterial, SetupInfo, run_mult
from lattice2pc.ring import Modulus, ZqMatrix
from lattice2pc.sampling import RngStream, Role, sample_uniform_zq
from lattice2pc.transport import (
    FRAME, MAGIC, FrameError, InProcNetwork, SessionMismatch, TcpEndpoint, Transcript, TransportTimeout,
    bind_local, decode_frame, encode_frame, run_session, transcript_round_count,
)
from harness import random_inputs

SEED = bytes(32)


def rand(sid, r, c, b):
    return sample_uniform_zq(RngStream(SEED, sid), r, c, Modulus(b))


def test_frame_layout():
    M = rand(1, 2, 3, 64)
    f = encode_frame(Message(MsgType.HSHARE, 7, 9, M))
    magic, ver, kind, session, step, size = FRAME.unpack(f[:FRAME.size])
    assert (magic, ver, kind, session, step) == (b"L2PC", 1, 3, 7, 9)
    assert size == len(f) - 30 == 10 + 16 * 6


def test_each_message_kind_round_trips():
    M = rand(1, 3, 2, 108)
    info = SetupInfo(bytes(range(32)), 64, 40, 256, (1, 2, 3))
    mat = OfflineMaterial(rand(2, 2, 1, 40), rand(3, 256, 1, 40), rand(4, 64, 1, 40))
    for msg in [Message(k, 5, 11, M) for k in (MsgType.YSHARE, MsgType.VSHARE, MsgType.HSHARE, MsgType.ZSHARE)] + [
            Message(MsgType.SETUP, 5, 0, info), Message(MsgType.OFFLINE, 5, 0, mat),
            Message(MsgType.HELLO, 5, 3, None)]:
        assert decode_frame(encode_frame(msg)) == msg


def test_random_matrices_survive_the_wire():
    rng = np.random.default_rng(0)
    for i in range(10_000):
        b = int(rng.integers(2, 128))
        r, c = (int(v) for v in rng.integers(1, 4, size=2))
        M = rand(i, r, c, b)
        assert decode_frame(encode_frame(Message(MsgType.ZSHARE, 1, i, M))).body == M


def test_malformed_frames_rejected():
    f = bytearray(encode_frame(Message(MsgType.YSHARE, 1, 0, rand(1, 1, 1, 8))))
    bad = bytes(b"XXXX" + f[4:])
    with pytest.raises(FrameError):
        decode_frame(bad)
    g = bytearray(f)
    g[5] = 200
    with pytest.raises(FrameError):
        decode_frame(bytes(g))
    g = bytearray(f)
    g[4] = 2
    with pytest.raises(FrameError):
        decode_frame(bytes(g))
    with pytest.raises(FrameError):
        decode_frame(bytes(f[:-1]))
    with pytest.raises(FrameError):
        decode_frame(bytes(f) + b"\x00")
    with pytest.raises(FrameError):
        decode_frame(bytes(f[:10]))


@pytest.mark.parametrize("kind", ["inproc", "tcp"])
def test_ordering_under_pipelined_sends(kind):
    mats = [rand(i, 2, 2, 40) for i in range(50)]

    def sender(ep):
        for i, M in enumerate(mats):
            ep.send(Role.PARTY1, Message(MsgType.HSHARE, 3, i, M))

    def receiver(ep):
        return [ep.recv(Role.PARTY0) for _ in mats]

    res, tr = run_session({Role.PARTY0: sender, Role.PARTY1: receiver}, transport=kind, session=3)
    got = res[Role.PARTY1]
    assert [m.step for m in got] == list(range(50))
    assert all(m.body == M for m, M in zip(got, mats))
    assert len(tr.entries) == 50


def test_timeout_without_peer():
    net = InProcNetwork(1, timeout=0.2)
    ep = net.endpoint(Role.PARTY0)
    t0 = time.monotonic()
    with pytest.raises(TransportTimeout):
        ep.recv(Role.PARTY1)
    assert time.monotonic() - t0 < 2


def test_tcp_timeout_and_unreachable_peer():
    socks = bind_local([Role.PARTY0, Role.PARTY1])
    addr1 = socks[Role.PARTY1].getsockname()[:2]
    socks[Role.PARTY1].close()
    ep = TcpEndpoint(Role.PARTY0, 1, socks[Role.PARTY0], {Role.PARTY1: addr1}, timeout=0.3)
    try:
        with pytest.raises(TransportTimeout):
            ep.recv(Role.PARTY1)
        with pytest.raises(TransportTimeout):
            ep.send(Role.PARTY1, Message(MsgType.HSHARE, 1, 0, rand(1, 1, 1, 8)))
    finally:
        ep.close()


def test_tcp_session_mismatch():
    socks = bind_local([Role.PARTY0, Role.PARTY1])
    addrs = {r: s.getsockname()[:2] for r, s in socks.items()}
    a = TcpEndpoint(Role.PARTY0, 1, socks[Role.PARTY0], addrs, timeout=2)
    b = TcpEndpoint(Role.PARTY1, 2, socks[Role.PARTY1], addrs, timeout=2)
    try:
        a.send(Role.PARTY1, Message(MsgType.HSHARE, 1, 0, rand(1, 1, 1, 8)))
        with pytest.raises(SessionMismatch):
            b.recv(Role.PARTY0)
    finally:
        a.close()
        b.close()


def test_inproc_session_mismatch():
    net = InProcNetwork(1)
    a, b = net.endpoint(Role.PARTY0), net.endpoint(Role.PARTY1)
    a.send(Role.PARTY1, Message(MsgType.HSHARE, 2, 0, rand(1, 1, 1, 8)))
    with pytest.raises(SessionMismatch):
        b.recv(Role.PARTY0)


def test_round_count_examples():
    t = Transcript()
    P0, P1, C = Role.PARTY0, Role.PARTY1, Role.CLIENT
    t.record(C, P0, MsgType.OFFLINE, 100, 0)
    t.record(C, P0, MsgType.SETUP, 10, 0)
    assert transcript_round_count(t, step=0) == 0
    for step in (0, 1):
        t.record(C, P0, MsgType.YSHARE, 10, step)
        t.record(P0, P1, MsgType.HSHARE, 10, step)
        t.record(P1, P0, MsgType.HSHARE, 10, step)
    assert transcript_round_count(t, step=0) == 1
    assert transcript_round_count(t, step=1) == 1
    t.record(P0, P1, MsgType.HSHARE, 10, 1)
    assert transcript_round_count(t, step=1) == 2


def test_transports_give_identical_transcripts():
    p = ci_preset((2, 2, 2))
    X, Y = random_inputs(p, np.random.default_rng(0), scale=1.0)
    Za, ta = run_mult(p, X, Y, transport="inproc", exact=True)
    Zb, tb = run_mult(p, X, Y, transport="tcp", exact=True)
    assert (Za == Zb).all()
    assert ta.canonical() == tb.canonical()
    for tr in (ta, tb):
        assert transcript_round_count(tr, step=0) == 1


def test_failure_in_one_role_aborts_session():
    def bad(ep):
        raise RuntimeError("boom")

    def waiting(ep):
        return ep.recv(Role.PARTY0, timeout=30)

    t0 = time.monotonic()
    with pytest.raises(RuntimeError, match="boom"):
        run_session({Role.PARTY0: bad, Role.PARTY1: waiting})
    assert time.monotonic() - t0 < 5
