"""Server block stores and deterministic fault injection.

Two stores share one interface: :class:`MemoryStore` for simulations and
:class:`BlockStore`, a directory with one ``<hexkey>.rec`` file per key
(block bytes followed by tag bytes) plus a ``manifest.das`` text file.
Records are replaced by write-to-temp-then-rename, so a crash leaves either
the old or the new record.

Fault plans are small text files::

    seed=7
    key=index:3 mode=flip:2
    key=random:5 mode=drop
    key=00ff... mode=zero
"""
from __future__ import annotations

import os
import random
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import KeyNotFound, MalformedBytes, StoreIOError, WidthMismatch

MANIFEST = "manifest.das"
RECORD_SUFFIX = ".rec"
TMP_SUFFIX = ".tmp"
STORE_VERSION = 1


class _StoreBase:
    key_width: int
    block_width: int
    tag_width: int

    @property
    def record_width(self) -> int:
        return self.block_width + self.tag_width

    def _check_key(self, key: bytes):
        if len(key) != self.key_width:
            raise WidthMismatch(f"key is {len(key)} bytes, expected {self.key_width}")

    def _pack(self, key: bytes, block: bytes, tag: bytes) -> bytes:
        self._check_key(key)
        if len(block) != self.block_width or len(tag) != self.tag_width:
            raise WidthMismatch(
                f"record ({len(block)}, {len(tag)}) != ({self.block_width}, {self.tag_width})")
        return block + tag

    def get(self, key: bytes) -> tuple[bytes, bytes] | None:
        """(block, tag) for ``key``, or None when absent; a wrong-sized record raises WidthMismatch."""
        raw = self.read_raw(key)
        if raw is None:
            return None
        if len(raw) != self.record_width:
            raise WidthMismatch(f"record for {key.hex()} is {len(raw)} bytes")
        return raw[:self.block_width], raw[self.block_width:]

    def put(self, key: bytes, block: bytes, tag: bytes):
        self.write_raw(key, self._pack(key, block, tag))

    def __contains__(self, key: bytes):
        return self.read_raw(key) is not None

    def __len__(self):
        return len(self.keys())

    def items_raw(self) -> list[tuple[bytes, bytes]]:
        return [(k, self.read_raw(k)) for k in self.keys()]


class MemoryStore(_StoreBase):
    def __init__(self, key_width: int, block_width: int, tag_width: int):
        self.key_width, self.block_width, self.tag_width = key_width, block_width, tag_width
        self._records: dict[bytes, bytes] = {}

    def read_raw(self, key: bytes) -> bytes | None:
        return self._records.get(key)

    def write_raw(self, key: bytes, raw: bytes):
        self._check_key(key)
        self._records[bytes(key)] = bytes(raw)

    def delete(self, key: bytes):
        try:
            del self._records[key]
        except KeyError:
            raise KeyNotFound(key.hex()) from None

    def keys(self) -> list[bytes]:
        return sorted(self._records)

    def copy(self) -> "MemoryStore":
        other = MemoryStore(self.key_width, self.block_width, self.tag_width)
        other._records = dict(self._records)
        return other


def atomic_write(path: Path, data: bytes):
    tmp = path.with_name(path.name + TMP_SUFFIX)
    try:
        with open(tmp, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except OSError as exc:
        raise StoreIOError(f"writing {path}: {exc}") from exc


def read_manifest(root: Path) -> dict[str, int]:
    try:
        text = (Path(root) / MANIFEST).read_text()
    except OSError as exc:
        raise StoreIOError(f"reading manifest in {root}: {exc}") from exc
    fields = {}
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        name, sep, value = line.partition("=")
        if not sep or not value.strip().isdigit():
            raise MalformedBytes(f"bad manifest line {line!r}")
        fields[name.strip()] = int(value)
    missing = {"version", "kappa", "block", "tagw", "count"} - set(fields)
    if missing:
        raise MalformedBytes(f"manifest lacks {sorted(missing)}")
    return fields


class BlockStore(_StoreBase):
    """One record file per key under ``root``."""

    def __init__(self, root, key_width: int, block_width: int, tag_width: int, count: int = 0):
        self.root = Path(root)
        self.key_width, self.block_width, self.tag_width = key_width, block_width, tag_width
        self.count = count

    @classmethod
    def create(cls, root, key_width: int, block_width: int, tag_width: int) -> "BlockStore":
        root = Path(root)
        try:
            root.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise StoreIOError(str(exc)) from exc
        if (root / MANIFEST).exists():
            raise StoreIOError(f"a store already exists in {root}")
        store = cls(root, key_width, block_width, tag_width)
        store._write_manifest()
        return store

    @classmethod
    def open(cls, root) -> "BlockStore":
        root = Path(root)
        man = read_manifest(root)
        if man["version"] != STORE_VERSION:
            raise MalformedBytes(f"unsupported store version {man['version']}")
        # leftovers of an interrupted write; the committed record is untouched
        for tmp in root.glob("*" + TMP_SUFFIX):
            tmp.unlink()
        return cls(root, man["kappa"], man["block"], man["tagw"], man["count"])

    def _write_manifest(self):
        text = (f"version={STORE_VERSION}\nkappa={self.key_width}\nblock={self.block_width}\n"
                f"tagw={self.tag_width}\ncount={self.count}\n")
        atomic_write(self.root / MANIFEST, text.encode())

    def _path(self, key: bytes) -> Path:
        return self.root / (key.hex() + RECORD_SUFFIX)

    def read_raw(self, key: bytes) -> bytes | None:
        try:
            return self._path(key).read_bytes()
        except FileNotFoundError:
            return None
        except OSError as exc:
            raise StoreIOError(str(exc)) from exc

    def write_raw(self, key: bytes, raw: bytes):
        self._check_key(key)
        atomic_write(self._path(key), raw)

    def put(self, key: bytes, block: bytes, tag: bytes):
        raw = self._pack(key, block, tag)
        fresh = not self._path(key).exists()
        atomic_write(self._path(key), raw)
        if fresh:
            self.count += 1
            self._write_manifest()

    def delete(self, key: bytes):
        self.drop_raw(key)
        self.count -= 1
        self._write_manifest()

    def drop_raw(self, key: bytes):
        """Remove a record without touching the manifest (fault injection only)."""
        try:
            self._path(key).unlink()
        except FileNotFoundError:
            raise KeyNotFound(key.hex()) from None
        except OSError as exc:
            raise StoreIOError(str(exc)) from exc

    def keys(self) -> list[bytes]:
        out = []
        for p in self.root.glob("*" + RECORD_SUFFIX):
            try:
                key = bytes.fromhex(p.name[:-len(RECORD_SUFFIX)])
            except ValueError:
                continue
            if len(key) == self.key_width:
                out.append(key)
        return sorted(out)


# -- fault injection ---------------------------------------------------------

_MODES = ("flip", "zero", "drop", "truncate", "fliptag")


@dataclass(frozen=True)
class FaultAction:
    selector: str          # "key", "index" or "random"
    target: object         # key bytes, index, or sample size
    mode: str
    count: int = 1

    def to_line(self) -> str:
        if self.selector == "key":
            key = self.target.hex()
        else:
            key = f"{self.selector}:{self.target}"
        mode = f"{self.mode}:{self.count}" if self.mode in ("flip", "fliptag") else self.mode
        return f"key={key} mode={mode}"


@dataclass
class FaultPlan:
    seed: int = 0
    actions: list[FaultAction] = field(default_factory=list)

    def to_text(self) -> str:
        return "\n".join([f"seed={self.seed}"] + [a.to_line() for a in self.actions]) + "\n"

    @classmethod
    def parse(cls, text: str) -> "FaultPlan":
        plan = None
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if plan is None:
                m = re.fullmatch(r"seed=(\d+)", line)
                if not m:
                    raise MalformedBytes(f"line {lineno}: fault plan must start with seed=<u64>")
                plan = cls(int(m.group(1)))
                continue
            m = re.fullmatch(r"key=(\S+)\s+mode=(\S+)", line)
            if not m:
                raise MalformedBytes(f"line {lineno}: expected 'key=... mode=...'")
            plan.actions.append(_parse_action(m.group(1), m.group(2), lineno))
        if plan is None:
            raise MalformedBytes("empty fault plan")
        return plan


def _parse_action(key: str, mode: str, lineno: int) -> FaultAction:
    name, _, arg = mode.partition(":")
    if name not in _MODES:
        raise MalformedBytes(f"line {lineno}: unknown mode {mode!r}")
    count = 1
    if name in ("flip", "fliptag"):
        if not arg.isdigit() or int(arg) < 1:
            raise MalformedBytes(f"line {lineno}: {name} needs a positive bit count")
        count = int(arg)
    elif arg:
        raise MalformedBytes(f"line {lineno}: mode {name} takes no argument")
    sel, _, val = key.partition(":")
    if sel in ("index", "random") and val.isdigit():
        return FaultAction(sel, int(val), name, count)
    try:
        return FaultAction("key", bytes.fromhex(key), name, count)
    except ValueError:
        raise MalformedBytes(f"line {lineno}: bad key selector {key!r}") from None


def _flip_bits(data: bytes, count: int, rng: random.Random) -> bytes:
    buf = bytearray(data)
    for pos in rng.sample(range(8 * len(buf)), min(count, 8 * len(buf))):
        buf[pos // 8] ^= 0x80 >> (pos % 8)
    return bytes(buf)


def inject(store, plan: FaultPlan) -> dict[bytes, list[str]]:
    """Apply ``plan`` to the primary store; returns key -> modes applied."""
    rng = random.Random(plan.seed)
    report: dict[bytes, list[str]] = {}
    bw = store.block_width
    for action in plan.actions:
        keys = store.keys()
        if action.selector == "key":
            if action.target not in store:
                raise KeyNotFound(action.target.hex())
            chosen = [action.target]
        elif action.selector == "index":
            if action.target >= len(keys):
                raise KeyNotFound(f"index {action.target} out of range ({len(keys)} records)")
            chosen = [keys[action.target]]
        else:
            chosen = rng.sample(keys, min(action.target, len(keys)))
        for key in chosen:
            raw = store.read_raw(key)
            if action.mode == "drop":
                if isinstance(store, BlockStore):
                    store.drop_raw(key)
                else:
                    store.delete(key)
            elif action.mode == "truncate":
                store.write_raw(key, raw[:len(raw) // 2])
            elif action.mode == "zero":
                store.write_raw(key, bytes(len(raw[:bw])) + raw[bw:])
            elif action.mode == "flip":
                store.write_raw(key, _flip_bits(raw[:bw], action.count, rng) + raw[bw:])
            else:
                store.write_raw(key, raw[:bw] + _flip_bits(raw[bw:], action.count, rng))
            report.setdefault(key, []).append(action.to_line().split(" ", 1)[1][5:])
    return report
