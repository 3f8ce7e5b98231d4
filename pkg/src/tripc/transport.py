"""Party identities, framed point-to-point messaging and round metering.

Wire frame (little-endian)::

    magic "TPC1" | session id u64 | sequence u64 | length u32 | payload

The payload carries a small header (message kind, round stamp, operation
sequence number, common-coin counter) followed by a list of typed arrays.

Round convention: a message is stamped with the sender's round clock plus
one, relative to the innermost metered operation; a receiver moves its clock
to the largest stamp it has seen.  Sending does not advance the sender's
clock, so messages with no dependency between them share a round.  Every
metered operation starts as a barrier and, on exit, adds its round count to
the enclosing operation.
"""

from __future__ import annotations

import enum
import queue
import socket
import struct
import threading
import time
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"TPC1"
FRAME_HEADER = struct.Struct("<4sQQI")
PAYLOAD_HEADER = struct.Struct("<BIIQH")
CHUNK = 1 << 20


class PartyRole(enum.IntEnum):
    P0 = 0
    P1 = 1
    HELPER = 2

    @property
    def is_proxy(self) -> bool:
        return self != PartyRole.HELPER

    @classmethod
    def parse(cls, text: str) -> "PartyRole":
        names = {"p0": cls.P0, "p1": cls.P1, "p2": cls.HELPER, "helper": cls.HELPER}
        try:
            return names[text.lower()]
        except KeyError:
            raise SetupError(f"unknown role {text!r}; expected p0, p1 or p2") from None


class Kind(enum.IntEnum):
    """Message taxonomy; used for transcript checks."""

    SETUP = 1
    TRIPLE = 2
    MOC_RAND = 3
    OPEN = 4
    PC = 5
    PC_RESULT = 6
    MSB_A = 7
    SHARES = 8
    MUX_MASK = 9
    INVSQRT_G = 10
    INVSQRT_EIG = 11
    INVSQRT_U = 12
    ABORT = 13
    DATA = 14


# Kinds a helper may legitimately receive from a proxy.
HELPER_BOUND = frozenset({Kind.PC, Kind.MSB_A, Kind.MUX_MASK, Kind.INVSQRT_G, Kind.ABORT})


class TransportError(RuntimeError):
    pass


class SetupError(TransportError):
    pass


class PeerDisconnected(TransportError):
    pass


class PeerTimeout(TransportError):
    pass


class FrameError(TransportError):
    pass


class CoinDesyncError(TransportError):
    pass


# ---------------------------------------------------------------- payloads

_DTYPES = {0: np.dtype("u1"), 1: np.dtype("<u8"), 2: np.dtype("<i8"), 3: np.dtype("<f8")}
_CODES = {np.dtype(np.uint8): 0, np.dtype(np.uint64): 1, np.dtype(np.int64): 2, np.dtype(np.float64): 3}


@dataclass
class Message:
    kind: Kind
    depth: int
    op_seq: int
    coin: int
    arrays: list[np.ndarray]


def encode_payload(msg: Message) -> bytes:
    parts = [PAYLOAD_HEADER.pack(int(msg.kind), msg.depth, msg.op_seq, msg.coin, len(msg.arrays))]
    for a in msg.arrays:
        a = np.asarray(a)
        code = _CODES.get(a.dtype)
        if code is None:
            raise FrameError(f"unsupported dtype {a.dtype}")
        parts.append(struct.pack("<BB", code, a.ndim))
        parts.append(struct.pack(f"<{a.ndim}Q", *a.shape))
        parts.append(np.ascontiguousarray(a, dtype=_DTYPES[code]).tobytes())
    return b"".join(parts)


def decode_payload(data: bytes) -> Message:
    try:
        kind, depth, op_seq, coin, count = PAYLOAD_HEADER.unpack_from(data, 0)
        pos = PAYLOAD_HEADER.size
        arrays = []
        for _ in range(count):
            code, ndim = struct.unpack_from("<BB", data, pos)
            pos += 2
            shape = struct.unpack_from(f"<{ndim}Q", data, pos)
            pos += 8 * ndim
            dt = _DTYPES[code]
            nbytes = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
            if pos + nbytes > len(data):
                raise FrameError("truncated array in payload")
            arr = np.frombuffer(data, dtype=dt, count=nbytes // dt.itemsize, offset=pos)
            arrays.append(arr.astype(dt.newbyteorder("=")).reshape(shape))
            pos += nbytes
        if pos != len(data):
            raise FrameError("trailing bytes in payload")
        return Message(Kind(kind), depth, op_seq, coin, arrays)
    except (struct.error, KeyError, ValueError) as exc:
        raise FrameError(f"malformed payload: {exc}") from exc


def encode_frame(session_id: int, seq: int, payload: bytes) -> bytes:
    return FRAME_HEADER.pack(MAGIC, session_id, seq, len(payload)) + payload


def decode_frame(frame: bytes) -> tuple[int, int, bytes]:
    if len(frame) < FRAME_HEADER.size:
        raise FrameError("short frame")
    magic, session_id, seq, length = FRAME_HEADER.unpack_from(frame, 0)
    if magic != MAGIC:
        raise FrameError(f"bad magic {magic!r}")
    payload = frame[FRAME_HEADER.size:]
    if len(payload) != length:
        raise FrameError(f"length prefix {length} != payload size {len(payload)}")
    return session_id, seq, payload


# ---------------------------------------------------------------- endpoints

_CLOSED = object()


class QueueEndpoint:
    """One end of an in-process duplex pipe."""

    def __init__(self, outbox: queue.Queue, inbox: queue.Queue, timeout: float):
        self.outbox = outbox
        self.inbox = inbox
        self.timeout = timeout

    def send_frame(self, frame: bytes) -> None:
        self.outbox.put(frame)

    def recv_frame(self) -> bytes:
        try:
            item = self.inbox.get(timeout=self.timeout)
        except queue.Empty:
            raise PeerTimeout(f"no message within {self.timeout}s") from None
        if item is _CLOSED:
            self.inbox.put(_CLOSED)
            raise PeerDisconnected("peer closed the channel")
        return item

    def close(self) -> None:
        # wake both directions so blocked readers on either side give up
        self.outbox.put(_CLOSED)
        self.inbox.put(_CLOSED)


def queue_pair(timeout: float = 600.0) -> tuple[QueueEndpoint, QueueEndpoint]:
    a, b = queue.Queue(), queue.Queue()
    return QueueEndpoint(a, b, timeout), QueueEndpoint(b, a, timeout)


class SocketEndpoint:
    def __init__(self, sock: socket.socket, timeout: float):
        self.sock = sock
        self.sock.settimeout(timeout)
        self.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    def send_frame(self, frame: bytes) -> None:
        view = memoryview(frame)
        try:
            for start in range(0, len(view), CHUNK):
                self.sock.sendall(view[start:start + CHUNK])
        except OSError as exc:
            raise PeerDisconnected(str(exc)) from exc

    def _read_exact(self, n: int) -> bytes:
        buf = bytearray(n)
        view = memoryview(buf)
        got = 0
        while got < n:
            try:
                k = self.sock.recv_into(view[got:], min(CHUNK, n - got))
            except socket.timeout:
                raise PeerTimeout("socket read timed out") from None
            except OSError as exc:
                raise PeerDisconnected(str(exc)) from exc
            if k == 0:
                raise PeerDisconnected("peer closed the connection")
            got += k
        return bytes(buf)

    def recv_frame(self) -> bytes:
        head = self._read_exact(FRAME_HEADER.size)
        magic, _, _, length = FRAME_HEADER.unpack(head)
        if magic != MAGIC:
            raise FrameError(f"bad magic {magic!r}")
        return head + self._read_exact(length)

    def close(self) -> None:
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


class Link:
    """Ordered, framed channel to one peer within a session."""

    def __init__(self, endpoint, session_id: int):
        self.endpoint = endpoint
        self.session_id = session_id
        self.sent = 0
        self.received = 0

    def send(self, payload: bytes) -> int:
        frame = encode_frame(self.session_id, self.sent, payload)
        self.endpoint.send_frame(frame)
        self.sent += 1
        return len(frame)

    def recv(self) -> tuple[bytes, int]:
        frame = self.endpoint.recv_frame()
        session_id, seq, payload = decode_frame(frame)
        if session_id != self.session_id:
            raise FrameError(f"frame for session {session_id}, expected {self.session_id}")
        if seq != self.received:
            raise FrameError(f"out-of-order frame {seq}, expected {self.received}")
        self.received += 1
        return payload, len(frame)

    def close(self) -> None:
        self.endpoint.close()


def in_process_links(session_id: int, timeout: float = 600.0) -> dict[PartyRole, dict[PartyRole, Link]]:
    """Fully connected trio of in-process links, keyed ``links[me][peer]``."""
    links: dict[PartyRole, dict[PartyRole, Link]] = {r: {} for r in PartyRole}
    for a, b in ((PartyRole.P0, PartyRole.P1), (PartyRole.P0, PartyRole.HELPER), (PartyRole.P1, PartyRole.HELPER)):
        ea, eb = queue_pair(timeout)
        links[a][b] = Link(ea, session_id)
        links[b][a] = Link(eb, session_id)
    return links


# ---------------------------------------------------------------- sockets

_HELLO = struct.Struct("<4sBQ")


def parse_endpoint(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise SetupError(f"endpoint must be host:port, got {text!r}")
    return host, int(port)


def connect_sockets(
    role: PartyRole,
    listen: tuple[str, int] | None,
    peers: dict[PartyRole, tuple[str, int]],
    session_id: int,
    timeout: float = 30.0,
    io_timeout: float = 600.0,
) -> dict[PartyRole, Link]:
    """Establish the P0-P1, P0-P2, P1-P2 links for one party.

    The lower-numbered party of each pair listens and the higher one dials.
    Each dialer announces its role; a duplicate or unexpected role aborts
    setup with :class:`SetupError`.
    """
    expected_in = {r for r in PartyRole if r < role}
    to_accept = {r for r in PartyRole if r > role}
    links: dict[PartyRole, Link] = {}
    server = None
    if to_accept:
        if listen is None:
            raise SetupError(f"{role.name} must listen for {sorted(r.name for r in to_accept)}")
        server = socket.create_server(listen, reuse_port=False)
        server.settimeout(timeout)
    try:
        for peer in sorted(expected_in):
            if peer not in peers:
                raise SetupError(f"no address for {peer.name}")
            sock = _dial(peers[peer], timeout)
            sock.sendall(_HELLO.pack(MAGIC, int(role), session_id))
            ack = _recv_exact(sock, _HELLO.size, timeout)
            magic, their_role, their_session = _HELLO.unpack(ack)
            if magic != MAGIC or their_role != peer or their_session != session_id:
                sock.close()
                raise SetupError(f"handshake with {peer.name} failed")
            links[peer] = Link(SocketEndpoint(sock, io_timeout), session_id)
        seen: set[PartyRole] = set()
        while seen != to_accept:
            try:
                sock, _ = server.accept()
            except socket.timeout:
                missing = sorted(r.name for r in to_accept - seen)
                raise PeerTimeout(f"timed out waiting for {missing}") from None
            magic, their_role, their_session = _HELLO.unpack(_recv_exact(sock, _HELLO.size, timeout))
            if magic != MAGIC or their_session != session_id:
                sock.close()
                raise SetupError("handshake from unknown session")
            their = PartyRole(their_role)
            if their in seen or their not in to_accept:
                sock.close()
                raise SetupError(f"role collision: second connection claiming {their.name}")
            seen.add(their)
            sock.sendall(_HELLO.pack(MAGIC, int(role), session_id))
            links[their] = Link(SocketEndpoint(sock, io_timeout), session_id)
    except BaseException:
        for link in links.values():
            link.close()
        raise
    finally:
        if server is not None:
            server.close()
    return links


def _dial(addr: tuple[str, int], timeout: float) -> socket.socket:
    deadline = time.monotonic() + timeout
    while True:
        try:
            return socket.create_connection(addr, timeout=max(0.1, deadline - time.monotonic()))
        except OSError:
            if time.monotonic() >= deadline:
                raise PeerTimeout(f"could not reach {addr[0]}:{addr[1]} within {timeout}s") from None
            time.sleep(0.05)


def _recv_exact(sock: socket.socket, n: int, timeout: float) -> bytes:
    sock.settimeout(timeout)
    buf = b""
    while len(buf) < n:
        try:
            chunk = sock.recv(n - len(buf))
        except socket.timeout:
            raise PeerTimeout("handshake timed out") from None
        if not chunk:
            raise SetupError("peer closed during handshake")
        buf += chunk
    return buf


# ---------------------------------------------------------------- metering

@dataclass
class OpRecord:
    label: str
    path: str
    level: int
    rounds: int
    bytes_sent: int
    bytes_received: int
    messages: int


@dataclass
class _Scope:
    label: str
    path: str
    clock: int = 0
    bytes_sent: int = 0
    bytes_received: int = 0
    messages: int = 0


@dataclass
class Meter:
    """Per-party record of rounds and bytes for every metered operation."""

    records: list[OpRecord] = field(default_factory=list)
    op_seq: int = 0
    _stack: list[_Scope] = field(default_factory=lambda: [_Scope("SESSION", "")])
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def current(self) -> _Scope:
        return self._stack[-1]

    @property
    def total_rounds(self) -> int:
        return self._stack[0].clock

    @property
    def total_bytes_sent(self) -> int:
        return self._stack[0].bytes_sent

    def enter(self, label: str) -> None:
        parent = self.current
        path = f"{parent.path}/{label}" if parent.path else label
        self._stack.append(_Scope(label, path))
        self.op_seq += 1

    def exit(self) -> OpRecord:
        scope = self._stack.pop()
        parent = self.current
        parent.clock += scope.clock
        parent.bytes_sent += scope.bytes_sent
        parent.bytes_received += scope.bytes_received
        parent.messages += scope.messages
        rec = OpRecord(scope.label, scope.path, len(self._stack) - 1, scope.clock,
                       scope.bytes_sent, scope.bytes_received, scope.messages)
        self.records.append(rec)
        return rec

    def stamp(self, nbytes: int) -> None:
        scope = self.current
        scope.bytes_sent += nbytes
        scope.messages += 1

    def next_depth(self) -> int:
        return self.current.clock + 1

    def observe(self, depth: int, nbytes: int) -> None:
        scope = self.current
        scope.clock = max(scope.clock, depth)
        scope.bytes_received += nbytes

    def barrier(self) -> None:
        """Count one round without a message (scripted protocols, tests)."""
        self.current.clock += 1


def merge_meters(meters) -> list[OpRecord]:
    """Combine the three parties' views: rounds = max, bytes = totals."""
    meters = list(meters)
    lengths = {len(m.records) for m in meters}
    if len(lengths) != 1:
        raise ValueError("party meters recorded different operation sequences")
    merged = []
    for recs in zip(*(m.records for m in meters)):
        if len({r.path for r in recs}) != 1:
            raise ValueError(f"operation mismatch across parties: {[r.path for r in recs]}")
        r0 = recs[0]
        merged.append(OpRecord(
            r0.label, r0.path, r0.level,
            max(r.rounds for r in recs),
            sum(r.bytes_sent for r in recs),
            sum(r.bytes_received for r in recs),
            sum(r.messages for r in recs),
        ))
    return merged


def summarize(records: list[OpRecord]) -> list[dict]:
    """Aggregate records by operation label for reports."""
    rows: dict[str, dict] = {}
    for r in records:
        row = rows.setdefault(r.label, {"op": r.label, "calls": 0, "rounds": set(), "bytes": 0})
        row["calls"] += 1
        row["rounds"].add(r.rounds)
        row["bytes"] += r.bytes_sent
    out = []
    for row in rows.values():
        rounds = sorted(row["rounds"])
        out.append({
            "op": row["op"],
            "calls": row["calls"],
            "rounds_per_call": rounds[0] if len(rounds) == 1 else f"{rounds[0]}-{rounds[-1]}",
            "bytes": row["bytes"],
        })
    return out
