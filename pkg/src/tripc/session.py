"""Per-party protocol context and the in-process three-party session."""

from __future__ import annotations

import contextlib
import hashlib
import itertools
import os
import threading
from dataclasses import dataclass

import numpy as np

from .numfmt import DEFAULT, FixedPointConfig, U64
from .prg import Prg, derive_key
from .rings import Ring
from .transport import (
    CoinDesyncError,
    FrameError,
    Kind,
    Link,
    Message,
    Meter,
    PartyRole,
    TransportError,
    decode_payload,
    encode_payload,
    in_process_links,
    merge_meters,
)

_session_ids = itertools.count(1)


@dataclass
class TranscriptEntry:
    direction: str  # "send" or "recv"
    peer: PartyRole
    kind: Kind
    path: str
    arrays: list[np.ndarray]


class ProtocolContext:
    """Everything one party needs to run protocols within a session.

    Proxies hold ``coin``, a stream shared with the other proxy only.  The
    helper runs the same protocol functions but holds no shares: wherever a
    proxy would use a share, the helper sees a zero placeholder of the same
    shape.
    """

    def __init__(
        self,
        role: PartyRole,
        links: dict[PartyRole, Link],
        cfg: FixedPointConfig = DEFAULT,
        rng: Prg | None = None,
        record: bool = False,
        triple_store=None,
    ):
        self.role = PartyRole(role)
        self.links = links
        self.cfg = cfg
        self.rng = rng if rng is not None else Prg()
        self.meter = Meter()
        self.coin: Prg | None = None
        self.record = record
        self.transcript: list[TranscriptEntry] = []
        self.triple_store = triple_store
        self.ring = Ring.full(cfg)
        self.half = Ring.half(cfg)

    # -- identity
    @property
    def i(self) -> int:
        return int(self.role)

    @property
    def is_helper(self) -> bool:
        return self.role == PartyRole.HELPER

    @property
    def other(self) -> PartyRole:
        if self.is_helper:
            raise ValueError("the helper has no proxy peer")
        return PartyRole(1 - self.i)

    def placeholder(self, shape) -> np.ndarray:
        return np.zeros(shape, dtype=U64)

    def public(self, code) -> np.ndarray:
        """This party's share of a public constant (P0 holds it, P1 holds 0)."""
        code = np.asarray(code, dtype=U64)
        return code if self.role == PartyRole.P0 else np.zeros_like(code)

    # -- metering
    @contextlib.contextmanager
    def op(self, label: str):
        self.meter.enter(label)
        try:
            yield
        finally:
            self.meter.exit()

    # -- messaging
    def _coin_counter(self, peer: PartyRole) -> int:
        if self.coin is not None and peer != PartyRole.HELPER and not self.is_helper:
            return self.coin.drawn
        return 0

    def send(self, peer: PartyRole, kind: Kind, *arrays) -> None:
        arrays = [np.asarray(a) for a in arrays]
        msg = Message(kind, self.meter.next_depth(), self.meter.op_seq, self._coin_counter(peer), arrays)
        nbytes = self.links[peer].send(encode_payload(msg))
        self.meter.stamp(nbytes)
        if self.record:
            self.transcript.append(TranscriptEntry("send", peer, kind, self.meter.current.path,
                                                   [a.copy() for a in arrays]))

    def recv(self, peer: PartyRole, kind: Kind) -> list[np.ndarray]:
        payload, nbytes = self.links[peer].recv()
        msg = decode_payload(payload)
        if msg.kind != kind:
            raise FrameError(f"{self.role.name} expected {kind.name} from {peer.name}, got {msg.kind.name}")
        if msg.op_seq != self.meter.op_seq:
            raise FrameError(f"{self.role.name} and {peer.name} are in different operations")
        mine = self._coin_counter(peer)
        if peer != PartyRole.HELPER and not self.is_helper and msg.coin != mine:
            raise CoinDesyncError(f"common coin counters differ: mine {mine}, peer {msg.coin}")
        self.meter.observe(msg.depth, nbytes)
        if self.record:
            self.transcript.append(TranscriptEntry("recv", peer, kind, self.meter.current.path, msg.arrays))
        return msg.arrays

    def exchange(self, peer: PartyRole, kind: Kind, *arrays) -> list[np.ndarray]:
        self.send(peer, kind, *arrays)
        return self.recv(peer, kind)

    # -- setup
    def setup_coin(self, deterministic_key: bytes | None = None) -> None:
        """Agree on the proxies' common coin; the helper takes no part."""
        with self.op("SETUP"):
            if self.is_helper:
                return
            mine = np.frombuffer(self.rng.bytes(32), dtype=np.uint8).copy()
            theirs = self.exchange(self.other, Kind.SETUP, mine)[0]
        seeds = (mine, theirs) if self.i == 0 else (theirs, mine)
        if deterministic_key is not None:
            key = derive_key("coin", deterministic_key)
        else:
            key = hashlib.sha256(seeds[0].tobytes() + seeds[1].tobytes()).digest()
        self.coin = Prg(key)

    def close(self) -> None:
        for link in self.links.values():
            link.close()


class Session:
    """Three party contexts wired by in-process queues, driven by threads.

    ``seed`` makes every random draw reproducible (test mode); without it
    all keys come from the OS.
    """

    def __init__(self, cfg: FixedPointConfig = DEFAULT, seed=None, record: bool = False,
                 timeout: float = 600.0, triple_stores=None):
        self.cfg = cfg
        self.seed = seed
        self.session_id = (next(_session_ids) << 32) ^ int.from_bytes(os.urandom(4), "little")
        links = in_process_links(self.session_id, timeout)
        stores = triple_stores or {}
        self.contexts = []
        for role in PartyRole:
            rng = Prg.from_seed("party", seed, int(role)) if seed is not None else Prg()
            self.contexts.append(ProtocolContext(role, links[role], cfg, rng, record, stores.get(role)))
        key = derive_key("session", seed) if seed is not None else None
        self.run(lambda ctx: ctx.setup_coin(key))

    def __getitem__(self, role) -> ProtocolContext:
        return self.contexts[int(role)]

    def run(self, fn, *per_party_args):
        """Call ``fn(ctx, *args)`` on all three parties concurrently.

        ``per_party_args`` is either empty or three tuples, one per role.
        Returns the three results in role order.  If any party fails, the
        links are closed so the others unblock, and the first error is
        re-raised.
        """
        if per_party_args and len(per_party_args) != 3:
            raise ValueError("pass one argument tuple per party")
        args = per_party_args or ((), (), ())
        results = [None, None, None]
        errors: list[tuple[int, BaseException]] = []
        lock = threading.Lock()
        order = itertools.count()

        def body(idx):
            try:
                results[idx] = fn(self.contexts[idx], *args[idx])
            except BaseException as exc:  # propagated below
                with lock:
                    errors.append((next(order), exc))
                for c in self.contexts:
                    c.close()

        threads = [threading.Thread(target=body, args=(k,), daemon=True) for k in range(3)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        if errors:
            errors.sort(key=lambda e: e[0])
            # a disconnect seen by a peer is a consequence, not the cause
            primary = next((e for _, e in errors if not isinstance(e, TransportError)), errors[0][1])
            raise primary
        return results

    def run_roles(self, f0, f1, f2):
        """Run a different callable per role."""
        fns = (f0, f1, f2)
        return self.run(lambda ctx: fns[ctx.i](ctx))

    def merged_records(self):
        return merge_meters(c.meter for c in self.contexts)

    def close(self) -> None:
        for c in self.contexts:
            c.close()

