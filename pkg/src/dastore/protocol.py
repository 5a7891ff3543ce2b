"""Dynamic accountable storage between one client and one honest-but-curious server.

The client keeps only its key set and a single IBLT sketch ``t_b`` of every
(key, block, tag) triple it has stored.  The server keeps the blocks, an
index of tags, and an :class:`~dastore.iblt_tree.IbltTree`.  Audits have the
server build an IBLT of what it still holds intact; XOR-ing that with a
sketch of everything (the client's ``t_b`` or the server's own tree root)
leaves only the missing triples, which peeling lists out.

Both parties live in one process.  Audit proofs still cross the boundary as
serialized bytes so their size can be measured.
"""
from __future__ import annotations

import logging
import struct
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

from .errors import (AuditRefused, BadTag, DuplicateKey, KeyNotFound, MalformedBytes,
                     RecoveryFailure, UnknownKey, VersionMismatch, WidthMismatch)
from .iblt import Iblt, IbltParams, Triple, peel
from .iblt_tree import IbltTree
from .store import MemoryStore
from .tags import PublicParams, SecretKey, keygen, make_tag, purity_secret, verify_tag

log = logging.getLogger(__name__)

SUCCESS, REJECT, FAILURE = "success", "reject", "failure"


@dataclass
class AuditReport:
    outcome: str
    recovered: list[tuple[bytes, bytes]] = field(default_factory=list)
    corrupted_keys: list[bytes] = field(default_factory=list)
    missing_keys: list[bytes] = field(default_factory=list)
    triples: list[Triple] = field(default_factory=list)
    proof_bytes: int = 0

    @property
    def ok(self) -> bool:
        return self.outcome == SUCCESS

    def blocks(self) -> dict[bytes, bytes]:
        return dict(self.recovered)


class ClientState:
    def __init__(self, params: IbltParams, sk: SecretKey, pp: PublicParams, delta: int, beta: int):
        self.params = params
        self.sk = sk
        self.pp = pp
        self.delta = delta
        self.beta = beta
        self.keys: set[bytes] = set()
        self.t_b = Iblt(params)

    def tag(self, key: bytes, block: bytes) -> bytes:
        return make_tag(key, block, self.sk, self.pp)

    def oracle(self):
        sk, pp = self.sk, self.pp
        return lambda k, v, t: purity_secret(k, v, t, sk, pp)

    def to_bytes(self, include_keys: bool = True) -> bytes:
        """Serialized state; the key list can be left out to measure sketch overhead."""
        w = self.pp.tag_width
        pp = self.pp.to_bytes()
        out = [b"DASC", struct.pack("<HIIH", 1, self.delta, self.beta, w),
               self.sk.d.to_bytes(w, "big"), struct.pack("<I", len(pp)), pp, self.t_b.to_bytes()]
        if include_keys:
            out.append(struct.pack("<Q", len(self.keys)))
            out.extend(sorted(self.keys))
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "ClientState":
        head = struct.Struct("<HIIH")
        if data[:4] != b"DASC" or len(data) < 4 + head.size:
            raise MalformedBytes("not a client state file")
        version, delta, beta, w = head.unpack_from(data, 4)
        if version != 1:
            raise VersionMismatch(f"unsupported client state version {version}")
        off = 4 + head.size
        if len(data) - off < w + 4:
            raise MalformedBytes("truncated client state")
        d = int.from_bytes(data[off:off + w], "big")
        (plen,) = struct.unpack_from("<I", data, off + w)
        off += w + 4
        pp = PublicParams.from_bytes(bytes(data[off:off + plen]))
        t_b, off = Iblt.read_from(data, off + plen)
        client = cls(t_b.params, SecretKey(d), pp, delta, beta)
        client.t_b = t_b
        if off < len(data):
            if len(data) - off < 8:
                raise MalformedBytes("truncated client key count")
            (count,) = struct.unpack_from("<Q", data, off)
            off += 8
            kw = t_b.params.key_width
            if len(data) - off != count * kw:
                raise MalformedBytes("client key list length mismatch")
            client.keys = {bytes(data[off + i * kw:off + (i + 1) * kw]) for i in range(count)}
        return client


class ServerState:
    def __init__(self, params: IbltParams, pp: PublicParams, delta: int, beta: int,
                 store=None, tree: IbltTree | None = None):
        self.params = params
        self.pp = pp
        self.delta = delta
        self.beta = beta
        self.store = store if store is not None else MemoryStore(
            params.key_width, params.block_width, params.tag_width)
        self.tree = tree if tree is not None else IbltTree(params, beta, pp)
        # the tag index outlives store faults; it is rebuilt from the tree copies
        self.tagset: dict[bytes, bytes] = {t.key: t.tag for t in self.tree}
        self.events: Counter = Counter()

    def lookup(self, key: bytes) -> Triple | None:
        """The stored triple as read from the primary store (None if absent or malformed)."""
        try:
            rec = self.store.get(key)
        except WidthMismatch:
            return None
        return None if rec is None else Triple(key, rec[0], rec[1])

    def is_valid(self, key: bytes) -> bool:
        t = self.lookup(key)
        return t is not None and verify_tag(t.key, t.block, t.tag, self.pp)

    def oracle(self):
        """Public purity test cross-checked against the tag index.

        A cell is pure only if its tagSum is the indexed tag for its keySum and
        the tag verifies.  An unindexed tag is taken as a collision of several
        triples; an indexed tag with a block that does not verify is counted
        as a corruption sighting.  Neither is pure.
        """
        pp, tagset, events = self.pp, self.tagset, self.events

        def pure(k, v, t):
            if tagset.get(k) != t:
                events["tag_not_found"] += 1
                return False
            if not verify_tag(k, v, t, pp):
                events["block_mismatch"] += 1
                return False
            return True
        return pure

    def receive_put(self, t: Triple):
        if t.key in self.tagset:
            raise DuplicateKey(t.key.hex())
        self.tree.insert(t)
        try:
            self.store.put(t.key, t.block, t.tag)
        except Exception:
            self.tree.delete(t.key)
            raise
        self.tagset[t.key] = t.tag

    def remove(self, key: bytes) -> Triple:
        if key not in self.tagset:
            raise KeyNotFound(key.hex())
        if key in self.store:
            self.store.delete(key)
        t = self.tree.delete(key)
        del self.tagset[key]
        return t

    def construct_proof(self, excluded: Iterable[bytes], bad: Iterable[bytes] = (),
                        scanned: bool = False, stats=None) -> Iblt:
        bad = set(bad)
        if scanned:
            def skip(t):
                return t.key in bad
        else:
            def skip(t):
                return not verify_tag(t.key, t.block, t.tag, self.pp)
        return self.tree.construct_iblt(excluded, skip_invalid=skip, invalid_keys=bad,
                                        source=self.lookup, stats=stats)

    def to_bytes(self) -> bytes:
        out = [b"DASV", self.tree.snapshot(), struct.pack("<Q", len(self.tagset))]
        for k in sorted(self.tagset):
            out.append(k + self.tagset[k])
        items = self.store.items_raw()
        out.append(struct.pack("<Q", len(items)))
        for k, raw in items:
            out.append(k + struct.pack("<I", len(raw)) + raw)
        return b"".join(out)


class SetupResult(NamedTuple):
    pp: PublicParams
    sk: SecretKey
    tags: list[bytes]
    client: ClientState
    server: ServerState


def setup(blocks: list[bytes], keys: list[bytes], delta: int, tau: int, beta: int, seed: int,
          *, num_hashes: int = 4, key_width: int | None = None, block_width: int | None = None,
          keypair: tuple[PublicParams, SecretKey] | None = None, store=None) -> SetupResult:
    """Generate keys, tag every block, and build both parties' initial state.

    ``keypair`` skips key generation (tests reuse one modulus across many
    setups).  ``store`` is an empty server store to fill; defaults to memory.
    """
    if len(blocks) != len(keys):
        raise ValueError(f"{len(blocks)} blocks but {len(keys)} keys")
    if len(set(keys)) != len(keys):
        raise DuplicateKey("duplicate keys in setup input")
    key_width = key_width or (len(keys[0]) if keys else 16)
    block_width = block_width or (len(blocks[0]) if blocks else 256)
    pp, sk = keypair if keypair is not None else keygen(tau, seed)
    salt = seed.to_bytes(8, "little", signed=True) + pp.salt
    params = IbltParams.for_delta(delta, key_width, block_width, pp.tag_width, num_hashes, salt)
    client = ClientState(params, sk, pp, delta, beta)
    tags, triples = [], []
    for k, b in zip(keys, blocks):
        t = Triple(k, b, client.tag(k, b))
        t.check_widths(params)
        tags.append(t.tag)
        triples.append(t)
        client.t_b.update(t)
    client.keys = set(keys)
    if store is None:
        store = MemoryStore(key_width, block_width, pp.tag_width)
    for t in triples:
        store.put(t.key, t.block, t.tag)
    tree = IbltTree.build(triples, params, beta, pp)
    server = ServerState(params, pp, delta, beta, store, tree)
    return SetupResult(pp, sk, tags, client, server)


def put(client: ClientState, server: ServerState, key: bytes, block: bytes):
    if key in client.keys:
        raise DuplicateKey(key.hex())
    t = Triple(key, block, b"\0" * client.params.tag_width)
    t.check_widths(client.params)
    t = Triple(key, block, client.tag(key, block))
    server.receive_put(t)
    client.t_b.update(t)
    client.keys.add(key)


def serve_get(server: ServerState, key: bytes) -> bytes:
    """Server side of get: return the stored block, self-healing through a one-key audit."""
    if key not in server.tagset:
        raise RecoveryFailure(f"server has no record of {key.hex()}")
    t = server.lookup(key)
    if t is not None and verify_tag(t.key, t.block, t.tag, server.pp):
        return t.block
    report = server_audit(server, [key], scan=False)
    healed = {x.key: x for x in report.triples}
    if not report.ok or key not in healed:
        raise RecoveryFailure(f"could not recover {key.hex()}")
    restore(server, report.triples)
    log.info("self-healed %s (%d triples restored)", key.hex(), len(report.triples))
    return healed[key].block


def get(client: ClientState, server: ServerState, key: bytes) -> bytes:
    if key not in client.keys:
        raise UnknownKey(key.hex())
    return serve_get(server, key)


def delete(client: ClientState, server: ServerState, key: bytes):
    if key not in client.keys:
        raise UnknownKey(key.hex())
    block = serve_get(server, key)
    t = Triple(key, block, client.tag(key, block))
    server.remove(key)
    client.t_b.update(t)
    client.keys.discard(key)


def detect_corrupted(server: ServerState) -> tuple[list[bytes], list[bytes]]:
    """Scan every key the server has metadata for; returns (corrupted, missing)."""
    corrupted, missing = [], []
    for key in sorted(server.tagset):
        try:
            rec = server.store.get(key)
        except WidthMismatch:
            corrupted.append(key)
            continue
        if rec is None:
            missing.append(key)
        elif not verify_tag(key, rec[0], rec[1], server.pp):
            corrupted.append(key)
    return corrupted, missing


def _peel_report(table: Iblt, oracle, fail: str) -> AuditReport:
    result = peel(table, oracle)
    if not result.ok:
        return AuditReport(fail)
    triples = sorted(result.recovered, key=lambda t: t.key)
    return AuditReport(SUCCESS, [(t.key, t.block) for t in triples], triples=triples)


def server_audit(server: ServerState, keys: Iterable[bytes] = (), scan: bool = True) -> AuditReport:
    """Recover the originals of ``keys`` plus any damaged records from the server's own metadata.

    With ``scan`` the whole store is checked first so every corrupted or
    missing record is excluded; without it only the leaves holding ``keys``
    are re-verified.
    """
    keys = list(keys)
    corrupted, missing = detect_corrupted(server) if scan else ([], [])
    bad = set(corrupted) | set(missing)
    kept = server.construct_proof(keys, bad, scanned=scan)
    diff = server.tree.root_iblt().combine(kept) if len(server.tree) else kept
    report = _peel_report(diff, server.oracle(), FAILURE)
    report.corrupted_keys, report.missing_keys = corrupted, missing
    return report


def client_audit(client: ClientState, server: ServerState, keys: Iterable[bytes],
                 scan: bool = True) -> AuditReport:
    keys = list(keys)
    if len(keys) > client.delta:
        raise AuditRefused(f"{len(keys)} keys requested but delta is {client.delta}")
    for k in keys:
        if k not in client.keys:
            raise UnknownKey(k.hex())
    # server side
    corrupted, missing = detect_corrupted(server) if scan else ([], [])
    proof = server.construct_proof(keys, set(corrupted) | set(missing), scanned=scan).to_bytes()
    # client side
    t_k = Iblt.from_bytes(proof, client.params)
    report = _peel_report(client.t_b.combine(t_k), client.oracle(), REJECT)
    report.corrupted_keys, report.missing_keys = corrupted, missing
    report.proof_bytes = len(proof)
    return report


def accountability_challenge(client: ClientState, server: ServerState) -> AuditReport:
    corrupted, missing = detect_corrupted(server)
    proof = server.construct_proof((), set(corrupted) | set(missing), scanned=True).to_bytes()
    t_k = Iblt.from_bytes(proof, client.params)
    report = _peel_report(client.t_b.combine(t_k), client.oracle(), REJECT)
    report.corrupted_keys, report.missing_keys = corrupted, missing
    report.proof_bytes = len(proof)
    return report


def restore(server: ServerState, triples: Iterable[Triple]):
    """Write verified triples back to the store and tag index; all or nothing."""
    triples = list(triples)
    for t in triples:
        t.check_widths(server.params)
        if t.key not in server.tagset:
            raise KeyNotFound(t.key.hex())
        if not verify_tag(t.key, t.block, t.tag, server.pp):
            raise BadTag(t.key.hex())
    for t in triples:
        server.store.put(t.key, t.block, t.tag)
        server.tagset[t.key] = t.tag
        if server.tree.find(t.key) != t:
            server.tree.replace(t)
