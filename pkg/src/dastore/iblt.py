"""Invertible Bloom lookup table with (keySum, valueSum, tagSum) cells.

Cells hold XOR sums of fixed-width byte strings, so insertion and deletion
are the same operation.  The m cells are split into q equal subtables and
hash function i maps a key into subtable i, which makes the q cells of a
key distinct by construction.

Purity is decided by a caller-supplied oracle rather than a count field,
since the tag scheme in :mod:`dastore.tags` lets either party recognise a
cell holding exactly one triple.
"""
from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable

import numpy as np

from .errors import InvalidParams, MalformedBytes, ParamsMismatch, VersionMismatch, WidthMismatch

MAGIC = b"DASI"
VERSION = 1
_HEADER = struct.Struct("<4sHIHHIHH")

# (keySum, valueSum, tagSum) -> pure?
PurityOracle = Callable[[bytes, bytes, bytes], bool]


@dataclass(frozen=True)
class IbltParams:
    num_cells: int
    num_hashes: int
    key_width: int
    block_width: int
    tag_width: int
    salt: bytes = b""

    def __post_init__(self):
        if self.num_hashes < 2:
            raise InvalidParams(f"num_hashes must be >= 2, got {self.num_hashes}")
        if self.num_cells <= 0 or self.num_cells % self.num_hashes:
            raise InvalidParams(
                f"num_cells={self.num_cells} is not a positive multiple of num_hashes={self.num_hashes}")
        if min(self.key_width, self.block_width, self.tag_width) < 1:
            raise InvalidParams("key, block and tag widths must be at least one byte")
        if len(self.salt) > 0xFFFF:
            raise InvalidParams("salt longer than 65535 bytes")

    @classmethod
    def for_delta(cls, delta: int, key_width: int, block_width: int, tag_width: int,
                  num_hashes: int = 4, salt: bytes = b"") -> "IbltParams":
        """Smallest table with at least (q+1)*delta cells that splits into q subtables."""
        if delta < 1:
            raise InvalidParams(f"delta must be positive, got {delta}")
        q = num_hashes
        m = q * math.ceil((q + 1) * delta / q)
        return cls(m, q, key_width, block_width, tag_width, salt)

    @property
    def subtable_size(self) -> int:
        return self.num_cells // self.num_hashes

    @property
    def cell_width(self) -> int:
        return self.key_width + self.block_width + self.tag_width

    def header(self) -> bytes:
        return _HEADER.pack(MAGIC, VERSION, self.num_cells, self.num_hashes, self.key_width,
                            self.block_width, self.tag_width, len(self.salt)) + self.salt

    @classmethod
    def parse_header(cls, data: bytes, offset: int = 0) -> tuple["IbltParams", int]:
        """Parse a header at ``offset``; returns (params, offset just past the header)."""
        if len(data) - offset < _HEADER.size:
            raise MalformedBytes("truncated IBLT header")
        magic, version, m, q, kw, bw, tw, saltlen = _HEADER.unpack_from(data, offset)
        if magic != MAGIC:
            raise MalformedBytes(f"bad IBLT magic {magic!r}")
        if version != VERSION:
            raise VersionMismatch(f"unsupported IBLT version {version}")
        offset += _HEADER.size
        if len(data) - offset < saltlen:
            raise MalformedBytes("truncated IBLT salt")
        salt = bytes(data[offset:offset + saltlen])
        try:
            params = cls(m, q, kw, bw, tw, salt)
        except InvalidParams as exc:
            raise MalformedBytes(f"invalid parameters in header: {exc}") from exc
        return params, offset + saltlen


@dataclass(frozen=True)
class Triple:
    key: bytes
    block: bytes
    tag: bytes

    def row(self) -> bytes:
        return self.key + self.block + self.tag

    def check_widths(self, params: IbltParams):
        if (len(self.key), len(self.block), len(self.tag)) != (
                params.key_width, params.block_width, params.tag_width):
            raise WidthMismatch(
                f"triple widths ({len(self.key)}, {len(self.block)}, {len(self.tag)}) != "
                f"({params.key_width}, {params.block_width}, {params.tag_width})")


@lru_cache(maxsize=1 << 16)
def _indices(salt: bytes, m: int, q: int, key: bytes) -> tuple[int, ...]:
    sub = m // q
    prefix = len(salt).to_bytes(2, "little") + salt
    out = []
    for i in range(q):
        digest = hashlib.blake2b(prefix + i.to_bytes(2, "little") + key, digest_size=8).digest()
        out.append(i * sub + int.from_bytes(digest, "little") % sub)
    return tuple(out)


def cell_indices(key: bytes, params: IbltParams) -> tuple[int, ...]:
    """The q cells of ``key``: index i lies in subtable i."""
    if len(key) != params.key_width:
        raise WidthMismatch(f"key is {len(key)} bytes, expected {params.key_width}")
    return _indices(params.salt, params.num_cells, params.num_hashes, bytes(key))


class Iblt:
    """An m-cell table; ``cells`` is an (m, key+block+tag width) uint8 array."""

    __slots__ = ("params", "cells")

    def __init__(self, params: IbltParams, cells: np.ndarray | None = None):
        self.params = params
        if cells is None:
            cells = np.zeros((params.num_cells, params.cell_width), dtype=np.uint8)
        elif cells.shape != (params.num_cells, params.cell_width):
            raise ParamsMismatch(f"cell array shape {cells.shape} does not match params")
        self.cells = cells

    @classmethod
    def from_triples(cls, params: IbltParams, triples: Iterable[Triple]) -> "Iblt":
        t = cls(params)
        for triple in triples:
            t.update(triple)
        return t

    def copy(self) -> "Iblt":
        return Iblt(self.params, self.cells.copy())

    def update(self, triple: Triple) -> "Iblt":
        """XOR ``triple`` into its q cells (insert and delete alike); returns self."""
        triple.check_widths(self.params)
        row = triple.row()
        if not any(row):
            raise InvalidParams("an all-zero triple cannot be told apart from an empty cell")
        idx = list(cell_indices(triple.key, self.params))
        self.cells[idx] ^= np.frombuffer(row, dtype=np.uint8)
        return self

    def combine(self, other: "Iblt") -> "Iblt":
        """Cell-wise XOR: the symmetric difference of the two represented sets."""
        if self.params != other.params:
            raise ParamsMismatch("cannot combine IBLTs built with different parameters")
        return Iblt(self.params, self.cells ^ other.cells)

    def cell(self, i: int) -> tuple[bytes, bytes, bytes]:
        raw = self.cells[i].tobytes()
        kw, bw = self.params.key_width, self.params.block_width
        return raw[:kw], raw[kw:kw + bw], raw[kw + bw:]

    def is_empty(self) -> bool:
        return not self.cells.any()

    def nonzero_cells(self) -> np.ndarray:
        return np.flatnonzero(self.cells.any(axis=1))

    def __eq__(self, other):
        if not isinstance(other, Iblt):
            return NotImplemented
        return self.params == other.params and np.array_equal(self.cells, other.cells)

    def __repr__(self):
        return (f"Iblt(m={self.params.num_cells}, q={self.params.num_hashes}, "
                f"nonzero={len(self.nonzero_cells())})")

    def to_bytes(self) -> bytes:
        return self.params.header() + self.cells.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, expected: IbltParams | None = None) -> "Iblt":
        t, end = cls.read_from(data, 0)
        if end != len(data):
            raise MalformedBytes(f"{len(data) - end} trailing bytes after IBLT")
        if expected is not None and t.params != expected:
            raise ParamsMismatch("serialized IBLT parameters differ from the expected ones")
        return t

    @classmethod
    def read_from(cls, data: bytes, offset: int) -> tuple["Iblt", int]:
        params, offset = IbltParams.parse_header(data, offset)
        return cls.read_cells(data, offset, params)

    @classmethod
    def read_cells(cls, data: bytes, offset: int, params: IbltParams) -> tuple["Iblt", int]:
        size = params.num_cells * params.cell_width
        if len(data) - offset < size:
            raise MalformedBytes("truncated IBLT cell array")
        cells = np.frombuffer(data, dtype=np.uint8, count=size, offset=offset)
        cells = cells.reshape(params.num_cells, params.cell_width).copy()
        return cls(params, cells), offset + size


def serialized_size(params: IbltParams) -> int:
    return len(params.header()) + params.num_cells * params.cell_width


@dataclass
class PeelResult:
    ok: bool
    recovered: list[Triple] = field(default_factory=list)
    residual: Iblt | None = None
    purity_tests: int = 0


def peel(table: Iblt, oracle: PurityOracle) -> PeelResult:
    """List the contents of ``table`` by repeatedly removing pure cells.

    The input is not modified.  Only cells touched by a removal are re-tested,
    so a cell the oracle rejected once is examined again only after its
    contents change.  A cell whose keySum does not hash back to it is never
    treated as pure.
    """
    work = table.copy()
    params = work.params
    pending = [int(i) for i in work.nonzero_cells()]
    queued = set(pending)
    recovered = []
    tests = 0
    while pending:
        i = pending.pop()
        queued.discard(i)
        if not work.cells[i].any():
            continue
        key, value, tag = work.cell(i)
        idx = cell_indices(key, params)
        if i not in idx:
            continue
        tests += 1
        if not oracle(key, value, tag):
            continue
        triple = Triple(key, value, tag)
        recovered.append(triple)
        work.update(triple)
        for j in idx:
            if j not in queued and work.cells[j].any():
                pending.append(j)
                queued.add(j)
    ok = work.is_empty()
    return PeelResult(ok, recovered, None if ok else work, tests)
