"""Protected Cartesian tree: a history-independent search tree with bucketed leaves.

A set of at most ``beta`` triples is a single leaf.  Otherwise the first and
last ``ceil(beta/2)`` triples in key order are protected, the pivot is the
minimum-priority triple among the remaining (unprotected) ones, and the two
sides are built recursively.  Pivots therefore always have at least
``ceil(beta/2)`` triples on each side, which bounds leaf sizes from below.

The shape depends only on the key set, ``beta`` and the priority salt, so
any sequence of inserts and deletes reaching a set gives the same tree as
building that set from scratch.  Insert and delete keep this exact: they
walk down the key's path and rebuild the first subtree whose pivot would
change.
"""
from __future__ import annotations

import bisect
import hashlib
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Iterator

import numpy as np

from .errors import DuplicateKey, InvalidParams, KeyNotFound
from .iblt import Triple


@lru_cache(maxsize=1 << 16)
def priority(key: bytes, salt: bytes) -> int:
    """64-bit fixed-point priority in [0, 1) scaled by 2**64."""
    return int.from_bytes(hashlib.blake2b(key, digest_size=8, key=salt[:64]).digest(), "big")


class Leaf:
    __slots__ = ("bucket", "iblt")

    def __init__(self, bucket: list[Triple]):
        self.bucket = bucket
        self.iblt = None

    @property
    def size(self) -> int:
        return len(self.bucket)

    def __repr__(self):
        return f"Leaf({len(self.bucket)})"


class Internal:
    __slots__ = ("pivot", "left", "right", "size", "iblt")

    def __init__(self, pivot: Triple, left, right):
        self.pivot = pivot
        self.left = left
        self.right = right
        self.size = left.size + right.size + 1
        self.iblt = None

    def __repr__(self):
        return f"Internal(pivot={self.pivot.key.hex()[:8]}, size={self.size})"


def half(beta: int) -> int:
    return (beta + 1) // 2


def protected_split(items: list, beta: int) -> tuple[list, list, list]:
    """Split sorted ``items`` into (protected prefix, unprotected middle, protected suffix).

    Ranks are zero-based; prefix and suffix hold ``ceil(beta/2)`` items each
    unless there are too few items, in which case everything is protected.
    """
    h = half(beta)
    n = len(items)
    if n <= 2 * h:
        cut = min(h, n)
        return list(items[:cut]), [], list(items[cut:])
    return list(items[:h]), list(items[h:n - h]), list(items[n - h:])


def _build(items: list[Triple], prios: np.ndarray, lo: int, hi: int, beta: int):
    if hi - lo <= beta:
        return Leaf(items[lo:hi])
    h = half(beta)
    # argmin returns the first minimum, i.e. the smaller key on a priority tie
    mid = lo + h + int(np.argmin(prios[lo + h:hi - h]))
    left = _build(items, prios, lo, mid, beta)
    right = _build(items, prios, mid + 1, hi, beta)
    return Internal(items[mid], left, right)


def build_node(sorted_items: list[Triple], beta: int, salt: bytes):
    prios = np.fromiter((priority(t.key, salt) for t in sorted_items),
                        dtype=np.uint64, count=len(sorted_items))
    return _build(sorted_items, prios, 0, len(sorted_items), beta)


def iter_triples(node) -> Iterator[Triple]:
    """In-order iteration over a subtree."""
    stack = []
    while True:
        while isinstance(node, Internal):
            stack.append(node)
            node = node.left
        if node is not None:
            yield from node.bucket
        if not stack:
            return
        parent = stack.pop()
        yield parent.pivot
        node = parent.right


def iter_nodes(node) -> Iterator:
    """Pre-order iteration over the nodes of a subtree."""
    stack = [node] if node is not None else []
    while stack:
        node = stack.pop()
        yield node
        if isinstance(node, Internal):
            stack.append(node.right)
            stack.append(node.left)


def rank(node, key: bytes) -> int:
    """Number of triples in the subtree with keys smaller than ``key``."""
    r = 0
    while isinstance(node, Internal):
        if key < node.pivot.key:
            node = node.left
        elif key > node.pivot.key:
            r += node.left.size + 1
            node = node.right
        else:
            return r + node.left.size
    return r + bisect.bisect_left(node.bucket, key, key=_key)


def select(node, r: int) -> Triple:
    """The triple of zero-based rank ``r`` within the subtree."""
    if not 0 <= r < node.size:
        raise IndexError(r)
    while isinstance(node, Internal):
        ls = node.left.size
        if r < ls:
            node = node.left
        elif r == ls:
            return node.pivot
        else:
            r -= ls + 1
            node = node.right
    return node.bucket[r]


def _key(t: Triple) -> bytes:
    return t.key


@dataclass
class Change:
    """Nodes touched by one insert or delete.

    ``updated`` nodes kept their shape and gained or lost exactly the one
    triple; ``rebuilt`` is the root of a freshly built subtree (or None).
    """
    triple: Triple | None = None
    updated: list = field(default_factory=list)
    rebuilt: object = None

    def leaves(self) -> list:
        out = [n for n in self.updated if isinstance(n, Leaf)]
        if self.rebuilt is not None:
            out.extend(n for n in iter_nodes(self.rebuilt) if isinstance(n, Leaf))
        return out


class PctTree:
    def __init__(self, beta: int, salt: bytes = b""):
        if beta < 2 or beta % 2:
            raise InvalidParams(f"beta must be an even integer >= 2, got {beta}")
        self.beta = beta
        self.salt = salt
        self.root = None

    @property
    def n(self) -> int:
        return 0 if self.root is None else self.root.size

    def __len__(self):
        return self.n

    def __iter__(self) -> Iterator[Triple]:
        return iter_triples(self.root) if self.root is not None else iter(())

    def nodes(self) -> Iterator:
        return iter_nodes(self.root)

    def node_count(self) -> int:
        return sum(1 for _ in self.nodes())

    def leaf_depths(self) -> list[int]:
        """Root-to-leaf path lengths (a lone root leaf has depth 1)."""
        out = []
        stack = [(self.root, 1)] if self.root is not None else []
        while stack:
            node, depth = stack.pop()
            if isinstance(node, Leaf):
                out.append(depth)
            else:
                stack.append((node.left, depth + 1))
                stack.append((node.right, depth + 1))
        return out

    def build(self, items: list[Triple]):
        return build_node(items, self.beta, self.salt) if items else None

    def pri(self, t: Triple) -> tuple[int, bytes]:
        return priority(t.key, self.salt), t.key

    def locate(self, key: bytes) -> list:
        """Root-to-node path ending at the node holding ``key`` or the leaf where it belongs."""
        path = []
        node = self.root
        while node is not None:
            path.append(node)
            if isinstance(node, Leaf) or key == node.pivot.key:
                break
            node = node.left if key < node.pivot.key else node.right
        return path

    def find(self, key: bytes) -> Triple | None:
        path = self.locate(key)
        if not path:
            return None
        node = path[-1]
        if isinstance(node, Internal):
            return node.pivot
        i = bisect.bisect_left(node.bucket, key, key=_key)
        if i < len(node.bucket) and node.bucket[i].key == key:
            return node.bucket[i]
        return None

    def __contains__(self, key: bytes) -> bool:
        return self.find(key) is not None

    def insert(self, t: Triple) -> Change:
        if t.key in self:
            raise DuplicateKey(t.key.hex())
        change = Change(t)
        if self.root is None:
            self.root = Leaf([t])
            change.rebuilt = self.root
        else:
            self.root = self._insert(self.root, t, change)
        return change

    def _insert(self, node, t: Triple, change: Change):
        beta = self.beta
        if isinstance(node, Leaf):
            if node.size < beta:
                bisect.insort(node.bucket, t, key=_key)
                change.updated.append(node)
                return node
            items = list(node.bucket)
            bisect.insort(items, t, key=_key)
            change.rebuilt = self.build(items)
            return change.rebuilt
        n, h = node.size, half(beta)
        j = rank(node, t.key)
        # the single triple that joins the unprotected region
        if j < h:
            newcomer = select(node, h - 1)
        elif j >= n + 1 - h:
            newcomer = select(node, n - h)
        else:
            newcomer = t
        if self.pri(newcomer) < self.pri(node.pivot):
            items = list(iter_triples(node))
            items.insert(j, t)
            change.rebuilt = self.build(items)
            return change.rebuilt
        node.size += 1
        change.updated.append(node)
        if t.key < node.pivot.key:
            node.left = self._insert(node.left, t, change)
        else:
            node.right = self._insert(node.right, t, change)
        return node

    def delete(self, key: bytes) -> Change:
        t = self.find(key)
        if t is None:
            raise KeyNotFound(key.hex())
        change = Change(t)
        self.root = self._delete(self.root, t, change)
        return change

    def _delete(self, node, t: Triple, change: Change):
        beta = self.beta
        if isinstance(node, Leaf):
            i = bisect.bisect_left(node.bucket, t.key, key=_key)
            del node.bucket[i]
            change.updated.append(node)
            return node if node.bucket else None
        n, h = node.size, half(beta)
        j = rank(node, t.key)
        if j < h:
            leaving = select(node, h)
        elif j >= n - h:
            leaving = select(node, n - h - 1)
        else:
            leaving = t
        if n - 1 <= beta or leaving.key == node.pivot.key:
            items = list(iter_triples(node))
            del items[j]
            change.rebuilt = self.build(items)
            return change.rebuilt
        node.size -= 1
        change.updated.append(node)
        if t.key < node.pivot.key:
            node.left = self._delete(node.left, t, change)
        else:
            node.right = self._delete(node.right, t, change)
        return node

    def replace(self, t: Triple) -> bool:
        """Overwrite the stored copy of ``t.key`` in place (shape unchanged)."""
        path = self.locate(t.key)
        if not path:
            return False
        node = path[-1]
        if isinstance(node, Internal):
            node.pivot = t
            return True
        i = bisect.bisect_left(node.bucket, t.key, key=_key)
        if i < len(node.bucket) and node.bucket[i].key == t.key:
            node.bucket[i] = t
            return True
        return False


def pct_init(triples: Iterable[Triple], beta: int, salt: bytes = b"") -> PctTree:
    tree = PctTree(beta, salt)
    items = sorted(triples, key=_key)
    for a, b in zip(items, items[1:]):
        if a.key == b.key:
            raise DuplicateKey(a.key.hex())
    tree.root = tree.build(items)
    return tree


def same_shape(a, b) -> bool:
    """Structural equality of two subtrees: pivots, bucket contents and shape."""
    sa, sb = [a], [b]
    while sa:
        x, y = sa.pop(), sb.pop()
        if type(x) is not type(y):
            return False
        if x is None:
            continue
        if isinstance(x, Leaf):
            if x.bucket != y.bucket:
                return False
        else:
            if x.pivot != y.pivot or x.size != y.size:
                return False
            sa.extend((x.left, x.right))
            sb.extend((y.left, y.right))
    return True
