"""Message transport between protocol roles, with transcript capture.

Wire frame (little-endian)::

    offset  size  field
    0       4     magic "L2PC"
    4       1     version (1)
    5       1     msg_type (MsgType)
    6       8     session id (u64)
    14      8     step (u64)
    22      8     payload_len (u64)
    30      ...   payload

Matrix payloads use the ZqMatrix layout: {rows u32, cols u32, q_bits u16}
followed by rows*cols 16-byte signed two's-complement entries.  OFFLINE frames
carry three such matrices back to back (C, C', [S]_i); SETUP frames carry the
32-byte CRS seed and the public dimensions.  A TCP connection opens with a
HELLO frame whose step field names the sending role.

Both transports push the exact frame bytes through, so the in-process
transport exercises the same codec as TCP and yields identical transcripts.
"""

from __future__ import annotations

import logging
import queue
import socket
import struct
import threading
import time
from collections import defaultdict
from dataclasses import dataclass, field

from .protocol import OFFLINE_KINDS, Message, MsgType, OfflineMaterial, SetupInfo
from .ring import ZqMatrix
from .sampling import Role

log = logging.getLogger(__name__)

MAGIC = b"L2PC"
VERSION = 1
FRAME = struct.Struct("<4sBBQQQ")
DEFAULT_TIMEOUT = 60.0
MAX_PAYLOAD = 1 << 34


class TransportError(RuntimeError):
    pass


class TransportTimeout(TransportError):
    pass


class SessionMismatch(TransportError):
    pass


class FrameError(ValueError):
    pass


# -- codec -------------------------------------------------------------------

def _payload(msg: Message) -> bytes:
    if msg.kind == MsgType.HELLO:
        return b""
    if msg.kind == MsgType.SETUP:
        return msg.body.to_bytes()
    if msg.kind == MsgType.OFFLINE:
        return msg.body.to_bytes()
    return msg.body.to_bytes()


def encode_frame(msg: Message) -> bytes:
    body = _payload(msg)
    return FRAME.pack(MAGIC, VERSION, int(msg.kind), msg.session, msg.step, len(body)) + body


def decode_header(header: bytes) -> tuple[MsgType, int, int, int]:
    magic, version, kind, session, step, size = FRAME.unpack(header)
    if magic != MAGIC:
        raise FrameError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FrameError(f"unsupported frame version {version}")
    try:
        kind = MsgType(kind)
    except ValueError:
        raise FrameError(f"unknown msg_type {kind}") from None
    if size > MAX_PAYLOAD:
        raise FrameError(f"payload of {size} bytes exceeds limit")
    return kind, session, step, size


def decode_frame(data: bytes) -> Message:
    if len(data) < FRAME.size:
        raise FrameError("truncated frame header")
    kind, session, step, size = decode_header(data[:FRAME.size])
    payload = data[FRAME.size:]
    if len(payload) != size:
        raise FrameError(f"payload_len {size} but {len(payload)} bytes present")
    if kind == MsgType.HELLO:
        body = None
    elif kind == MsgType.SETUP:
        body = SetupInfo.from_bytes(payload)
    elif kind == MsgType.OFFLINE:
        body = OfflineMaterial.from_bytes(payload)
    else:
        body, end = ZqMatrix.from_bytes(payload)
        if end != len(payload):
            raise FrameError("trailing bytes after matrix payload")
    return Message(kind, session, step, body)


# -- transcript ----------------------------------------------------------------

@dataclass(frozen=True)
class TranscriptEntry:
    time: float
    src: Role
    dst: Role
    kind: MsgType
    size: int
    step: int

    @property
    def phase(self) -> str:
        return "offline" if self.kind in OFFLINE_KINDS else "online"

    def key(self):
        """Everything except the timestamp."""
        return (self.src, self.dst, self.kind, self.size, self.step)


@dataclass
class Transcript:
    entries: list[TranscriptEntry] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def record(self, src, dst, kind, size, step):
        with self._lock:
            self.entries.append(TranscriptEntry(time.monotonic(), Role(src), Role(dst), kind, size, step))

    def online(self):
        return [e for e in self.entries if e.phase == "online"]

    def canonical(self):
        """Timestamp-free entries in a delivery-independent order."""
        return sorted(e.key() for e in self.entries)

    def bytes_by_kind(self) -> dict[str, int]:
        out = defaultdict(int)
        for e in self.entries:
            out[e.kind.name] += e.size
        return dict(out)

    def count(self, src, dst, kind=None, step=None) -> int:
        return sum(1 for e in self.entries
                   if e.src == src and e.dst == dst
                   and (kind is None or e.kind == kind) and (step is None or e.step == step))


def transcript_round_count(t: Transcript, step: int | None = None, phase: str = "online",
                           pair=(Role.PARTY0, Role.PARTY1)) -> int:
    """Communication rounds between the two parties within one step.

    Within a round each party sends at most one message to the other, all sent
    simultaneously; so the number of rounds is the larger per-direction count.
    """
    a, b = pair
    es = [e for e in t.entries if e.phase == phase and (step is None or e.step == step)]
    ab = sum(1 for e in es if e.src == a and e.dst == b)
    ba = sum(1 for e in es if e.src == b and e.dst == a)
    return max(ab, ba)


# -- endpoints -----------------------------------------------------------------

_CLOSED = object()


class Endpoint:
    """One role's view of the network: ordered, reliable per directed pair."""

    def __init__(self, role: Role, session: int, transcript: Transcript | None = None,
                 timeout: float = DEFAULT_TIMEOUT):
        self.role = Role(role)
        self.session = session
        self.transcript = transcript if transcript is not None else Transcript()
        self.timeout = timeout
        self._inbox: dict[Role, queue.Queue] = defaultdict(queue.Queue)
        self._inbox_lock = threading.Lock()

    def _queue(self, src: Role) -> queue.Queue:
        with self._inbox_lock:
            return self._inbox[Role(src)]

    def _deliver(self, src: Role, item):
        self._queue(src).put(item)

    def send(self, dst: Role, msg: Message):
        frame = encode_frame(msg)
        self._send_frame(Role(dst), frame)
        self.transcript.record(self.role, dst, msg.kind, len(frame), msg.step)

    def recv(self, src: Role, timeout: float | None = None) -> Message:
        timeout = self.timeout if timeout is None else timeout
        try:
            item = self._queue(src).get(timeout=timeout)
        except queue.Empty:
            raise TransportTimeout(f"{self.role.name}: nothing from {Role(src).name} in {timeout}s") from None
        if item is _CLOSED:
            raise TransportError(f"{self.role.name}: channel from {Role(src).name} closed")
        if isinstance(item, Exception):
            raise item
        msg = decode_frame(item)
        if msg.session != self.session:
            raise SessionMismatch(f"{self.role.name}: frame for session {msg.session}, expected {self.session}")
        return msg

    def _send_frame(self, dst: Role, frame: bytes):
        raise NotImplementedError

    def abort(self):
        with self._inbox_lock:
            roles = list(Role)
        for r in roles:
            self._deliver(r, _CLOSED)

    def close(self):
        pass


class InProcNetwork:
    """Queues between endpoints living in one process."""

    def __init__(self, session: int, transcript: Transcript | None = None, timeout: float = DEFAULT_TIMEOUT):
        self.session = session
        self.transcript = transcript if transcript is not None else Transcript()
        self.timeout = timeout
        self.endpoints: dict[Role, InProcEndpoint] = {}

    def endpoint(self, role: Role) -> "InProcEndpoint":
        ep = InProcEndpoint(self, role)
        self.endpoints[Role(role)] = ep
        return ep


class InProcEndpoint(Endpoint):
    def __init__(self, net: InProcNetwork, role: Role):
        super().__init__(role, net.session, net.transcript, net.timeout)
        self.net = net

    def _send_frame(self, dst, frame):
        peer = self.net.endpoints.get(dst)
        if peer is None:
            raise TransportError(f"no endpoint for {dst.name}")
        peer._deliver(self.role, bytes(frame))


def _read_exact(sock: socket.socket, n: int) -> bytes | None:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(min(n - len(buf), 1 << 20))
        if not chunk:
            return None
        buf += chunk
    return bytes(buf)


class TcpEndpoint(Endpoint):
    """Listens on its own address; opens one outgoing connection per peer it sends to."""

    def __init__(self, role: Role, session: int, listen, peers: dict, *,
                 transcript: Transcript | None = None, timeout: float = DEFAULT_TIMEOUT,
                 connect_timeout: float | None = None):
        super().__init__(role, session, transcript, timeout)
        if isinstance(listen, socket.socket):
            self._server = listen
        else:
            self._server = socket.create_server(tuple(listen))
        self.address = self._server.getsockname()[:2]
        self.peers = {Role(r): tuple(a) for r, a in peers.items()}
        self.connect_timeout = timeout if connect_timeout is None else connect_timeout
        self._out: dict[Role, socket.socket] = {}
        self._conns: list[socket.socket] = []
        self._closed = False
        threading.Thread(target=self._accept_loop, daemon=True, name=f"accept-{self.role.name}").start()

    def _accept_loop(self):
        while not self._closed:
            try:
                conn, _ = self._server.accept()
            except OSError:
                return
            self._conns.append(conn)
            threading.Thread(target=self._reader, args=(conn,), daemon=True).start()

    def _reader(self, conn: socket.socket):
        src = None
        try:
            header = _read_exact(conn, FRAME.size)
            if header is None:
                return
            kind, session, step, size = decode_header(header)
            if kind != MsgType.HELLO or size:
                raise FrameError("connection must open with an empty HELLO frame")
            src = Role(step)
            if session != self.session:
                self._deliver(src, SessionMismatch(
                    f"{self.role.name}: {src.name} joined session {session}, expected {self.session}"))
                return
            while True:
                header = _read_exact(conn, FRAME.size)
                if header is None:
                    break
                kind, session, step, size = decode_header(header)
                payload = _read_exact(conn, size) if size else b""
                if payload is None:
                    raise TransportError("connection closed mid-frame")
                self._deliver(src, header + payload)
        except (OSError, ValueError, TransportError) as exc:
            if src is not None and not self._closed:
                self._deliver(src, exc if isinstance(exc, TransportError) else TransportError(str(exc)))
            log.debug("%s reader stopped: %s", self.role.name, exc)
        finally:
            if src is not None:
                self._deliver(src, _CLOSED)
            conn.close()

    def _connection(self, dst: Role) -> socket.socket:
        sock = self._out.get(dst)
        if sock is not None:
            return sock
        if dst not in self.peers:
            raise TransportError(f"{self.role.name}: no address for {dst.name}")
        deadline = time.monotonic() + self.connect_timeout
        while True:
            try:
                sock = socket.create_connection(self.peers[dst], timeout=self.timeout)
                break
            except OSError as exc:
                if time.monotonic() > deadline:
                    raise TransportTimeout(f"{self.role.name}: cannot reach {dst.name}: {exc}") from None
                time.sleep(0.05)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        sock.sendall(FRAME.pack(MAGIC, VERSION, int(MsgType.HELLO), self.session, int(self.role), 0))
        self._out[dst] = sock
        return sock

    def _send_frame(self, dst, frame):
        try:
            self._connection(dst).sendall(frame)
        except OSError as exc:
            raise TransportError(f"{self.role.name} -> {dst.name}: {exc}") from None

    def close(self):
        self._closed = True
        for s in [*self._out.values(), *self._conns, self._server]:
            try:
                s.close()
            except OSError:
                pass


def bind_local(roles, host: str = "127.0.0.1") -> dict:
    """Pre-bound listening sockets on ephemeral ports, one per role."""
    return {Role(r): socket.create_server((host, 0)) for r in roles}


# -- session harness -------------------------------------------------------------

def run_session(roles: dict, *, transport: str = "inproc", session: int = 0,
                timeout: float = DEFAULT_TIMEOUT, host: str = "127.0.0.1"):
    """Run each role function ``fn(endpoint)`` on its own thread.

    Returns ({role: return value}, transcript).  If any role fails, all
    endpoints are aborted so no role is left blocked, and the first failure is
    re-raised.
    """
    transcript = Transcript()
    if transport == "inproc":
        net = InProcNetwork(session, transcript, timeout)
        eps = {r: net.endpoint(r) for r in roles}
    elif transport == "tcp":
        socks = bind_local(roles, host)
        addrs = {r: s.getsockname()[:2] for r, s in socks.items()}
        eps = {r: TcpEndpoint(r, session, socks[r], addrs, transcript=transcript, timeout=timeout)
               for r in roles}
    else:
        raise ValueError(f"unknown transport {transport!r}")

    results, errors = {}, []

    def run(role, fn):
        try:
            results[role] = fn(eps[role])
        except BaseException as exc:  # noqa: BLE001 - re-raised below
            errors.append(exc)
            for ep in eps.values():
                ep.abort()

    threads = [threading.Thread(target=run, args=(r, fn), name=Role(r).name) for r, fn in roles.items()]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    for ep in eps.values():
        ep.close()
    if errors:
        primary = [e for e in errors if not isinstance(e, TransportError)]
        raise (primary or errors)[0]
    return results, transcript
