"""IBLT tree: a protected Cartesian tree whose every node carries an IBLT of its subtree.

A leaf's IBLT folds its bucket; an internal node's IBLT is the combine of
its children's plus its pivot.  The root therefore sketches the whole stored
set, and an IBLT of the set minus a few keys can be assembled by rebuilding
only the leaves on the paths to those keys.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .cartesian import Internal, Leaf, PctTree, iter_nodes, iter_triples, pct_init
from .errors import BadTag, EmptyTree, MalformedBytes, VersionMismatch
from .iblt import Iblt, IbltParams, Triple
from .tags import PublicParams, verify_tag

MAGIC = b"DAST"
VERSION = 1
_HEAD = struct.Struct("<4sHIQ")
_LEAF, _INTERNAL = 0, 1


def priority_salt(params: IbltParams) -> bytes:
    """Tree priorities are keyed off the IBLT salt so snapshots need not carry a second salt."""
    return hashlib.blake2b(params.salt, digest_size=16, person=b"pct-priority").digest()


@dataclass
class ConstructStats:
    leaf_rebuilds: int = 0
    nodes_visited: int = 0
    skipped_invalid: int = 0
    invalid_keys: list = field(default_factory=list)


def _fill(node, params: IbltParams) -> Iblt:
    if isinstance(node, Leaf):
        node.iblt = Iblt.from_triples(params, node.bucket)
    else:
        left = _fill(node.left, params)
        right = _fill(node.right, params)
        node.iblt = left.combine(right).update(node.pivot)
    return node.iblt


class IbltTree:
    def __init__(self, params: IbltParams, beta: int, pp: PublicParams | None = None):
        self.params = params
        self.beta = beta
        self.pp = pp
        self.pct = PctTree(beta, priority_salt(params))

    @classmethod
    def build(cls, triples: Iterable[Triple], params: IbltParams, beta: int,
              pp: PublicParams | None = None) -> "IbltTree":
        tree = cls(params, beta, pp)
        items = list(triples)
        for t in items:
            t.check_widths(params)
        tree.pct = pct_init(items, beta, priority_salt(params))
        if tree.pct.root is not None:
            _fill(tree.pct.root, params)
        return tree

    @property
    def root(self):
        return self.pct.root

    def __len__(self):
        return self.pct.n

    def __iter__(self):
        return iter(self.pct)

    def __contains__(self, key: bytes):
        return key in self.pct

    def find(self, key: bytes) -> Triple | None:
        return self.pct.find(key)

    def nodes(self):
        return iter_nodes(self.pct.root)

    def node_count(self) -> int:
        return self.pct.node_count()

    def metadata_bytes(self) -> int:
        """Bytes held in node IBLT cell arrays."""
        return self.node_count() * self.params.num_cells * self.params.cell_width

    def insert(self, t: Triple):
        t.check_widths(self.params)
        if self.pp is not None and not verify_tag(t.key, t.block, t.tag, self.pp):
            raise BadTag(t.key.hex())
        change = self.pct.insert(t)
        for node in change.updated:
            node.iblt.update(t)
        if change.rebuilt is not None:
            _fill(change.rebuilt, self.params)
        return change

    def delete(self, key: bytes) -> Triple:
        """Remove ``key`` using the tree's own copy of the triple; returns that copy."""
        change = self.pct.delete(key)
        for node in change.updated:
            node.iblt.update(change.triple)
        if change.rebuilt is not None:
            _fill(change.rebuilt, self.params)
        return change.triple

    def replace(self, t: Triple) -> bool:
        """Overwrite the stored copy of a triple without touching any IBLT."""
        return self.pct.replace(t)

    def root_iblt(self) -> Iblt:
        if self.pct.root is None:
            raise EmptyTree("the IBLT tree is empty")
        return self.pct.root.iblt.copy()

    def construct_iblt(self, excluded: Iterable[bytes] = (),
                       skip_invalid: Callable[[Triple], bool] | None = None,
                       invalid_keys: Iterable[bytes] = (),
                       source: Callable[[bytes], Triple | None] | None = None,
                       stats: ConstructStats | None = None) -> Iblt:
        """IBLT of the stored set without ``excluded`` keys and without invalid triples.

        Nodes whose key range holds no excluded or known-invalid key contribute
        their stored IBLT as is.  Affected leaves are re-folded from ``source``
        (the live block store; defaults to the tree's own copies), dropping
        excluded keys, absent records, and triples for which ``skip_invalid``
        returns True.
        """
        if stats is None:
            stats = ConstructStats()
        excluded = set(excluded)
        affected = sorted(excluded | set(invalid_keys))
        if self.pct.root is None:
            return Iblt(self.params)
        lookup = source if source is not None else self.pct.find

        def keep(t: Triple) -> Triple | None:
            if t.key in excluded:
                return None
            cand = lookup(t.key)
            if cand is None or (skip_invalid is not None and skip_invalid(cand)):
                stats.skipped_invalid += 1
                stats.invalid_keys.append(t.key)
                return None
            return cand

        def walk(node, keys):
            stats.nodes_visited += 1
            if not keys:
                return node.iblt
            if isinstance(node, Leaf):
                stats.leaf_rebuilds += 1
                out = Iblt(self.params)
                for t in node.bucket:
                    cand = keep(t)
                    if cand is not None:
                        out.update(cand)
                return out
            pk = node.pivot.key
            left = [k for k in keys if k < pk]
            right = [k for k in keys if k > pk]
            out = walk(node.left, left).combine(walk(node.right, right))
            if len(left) + len(right) < len(keys):
                cand = keep(node.pivot)
            else:
                cand = node.pivot
            if cand is not None:
                out.update(cand)
            return out

        result = walk(self.pct.root, affected)
        return result.copy() if result is self.pct.root.iblt else result

    def check(self) -> list:
        """Nodes whose stored IBLT differs from one rebuilt from the subtree's triples."""
        bad = []
        for node in self.nodes():
            if node.iblt != Iblt.from_triples(self.params, iter_triples(node)):
                bad.append(node)
        return bad

    def snapshot(self) -> bytes:
        out = [_HEAD.pack(MAGIC, VERSION, self.beta, self.pct.n), self.params.header()]
        for node in self.nodes():
            if isinstance(node, Leaf):
                out.append(struct.pack("<BH", _LEAF, len(node.bucket)))
                out.extend(t.row() for t in node.bucket)
            else:
                out.append(bytes([_INTERNAL]))
                out.append(node.pivot.row())
            out.append(node.iblt.cells.tobytes())
        return b"".join(out)

    @classmethod
    def restore(cls, data: bytes, pp: PublicParams | None = None) -> "IbltTree":
        if len(data) < _HEAD.size:
            raise MalformedBytes("truncated tree snapshot header")
        magic, version, beta, n = _HEAD.unpack_from(data, 0)
        if magic != MAGIC:
            raise MalformedBytes(f"bad tree snapshot magic {magic!r}")
        if version != VERSION:
            raise VersionMismatch(f"unsupported tree snapshot version {version}")
        params, offset = IbltParams.parse_header(data, _HEAD.size)
        tree = cls(params, beta, pp)
        kw, bw, tw = params.key_width, params.block_width, params.tag_width
        width = kw + bw + tw

        def triple(pos):
            if len(data) - pos < width:
                raise MalformedBytes("truncated triple in tree snapshot")
            raw = data[pos:pos + width]
            return Triple(bytes(raw[:kw]), bytes(raw[kw:kw + bw]), bytes(raw[kw + bw:])), pos + width

        def node_at(pos):
            if pos >= len(data):
                raise MalformedBytes("truncated node stream")
            kind = data[pos]
            if kind == _LEAF:
                if len(data) - pos < 3:
                    raise MalformedBytes("truncated leaf header")
                (count,) = struct.unpack_from("<H", data, pos + 1)
                pos += 3
                bucket = []
                for _ in range(count):
                    t, pos = triple(pos)
                    bucket.append(t)
                node = Leaf(bucket)
                node.iblt, pos = Iblt.read_cells(data, pos, params)
            elif kind == _INTERNAL:
                pivot, pos = triple(pos + 1)
                iblt, pos = Iblt.read_cells(data, pos, params)
                left, pos = node_at(pos)
                right, pos = node_at(pos)
                node = Internal(pivot, left, right)
                node.iblt = iblt
            else:
                raise MalformedBytes(f"unknown node tag {kind}")
            return node, pos

        if n:
            tree.pct.root, offset = node_at(offset)
            if tree.pct.root.size != n:
                raise MalformedBytes(f"snapshot claims {n} triples but holds {tree.pct.root.size}")
        if offset != len(data):
            raise MalformedBytes(f"{len(data) - offset} trailing bytes in tree snapshot")
        return tree
