import random

import pytest

from dastore.cartesian import Internal, Leaf, PctTree, half, priority

from dastore.iblt import IbltParams, Triple
from dastore.tags import keygen, make_tag

TAU = 128
KAPPA = 16
BLOCK = 32


@pytest.fixture(scope="session")
def keypair():
    return keygen(TAU, seed=2024)


@pytest.fixture(scope="session")
def pp(keypair):
    return keypair[0]


@pytest.fixture(scope="session")
def sk(keypair):
    return keypair[1]


@pytest.fixture
def rng():
    return random.Random(12345)


def make_params(delta=8, q=4, kappa=KAPPA, block=BLOCK, tagw=2 * TAU // 8, salt=b"test-salt"):
    return IbltParams.for_delta(delta, kappa, block, tagw, q, salt)


def raw_triples(rng, count, params):
    """Random triples with distinct keys; tags are random bytes, not valid tags."""
    keys = set()
    while len(keys) < count:
        keys.add(rng.randbytes(params.key_width))
    return [Triple(k, rng.randbytes(params.block_width), rng.randbytes(params.tag_width))
            for k in sorted(keys)]


def tagged_triples(rng, count, params, sk, pp):
    out = []
    for t in raw_triples(rng, count, params):
        out.append(Triple(t.key, t.block, make_tag(t.key, t.block, sk, pp)))
    return out


def shadow_iblt(params, triples):
    """Independent reference: cell i holds the XOR of every triple hashed there.

    Computed with plain Python ints from a per-cell multiset, not via Iblt.update.
    """
    from dastore.iblt import cell_indices
    buckets = [[] for _ in range(params.num_cells)]
    for t in triples:
        for i in cell_indices(t.key, params):
            buckets[i].append(t)
    width = params.cell_width
    cells = []
    for bucket in buckets:
        acc = 0
        for t in bucket:
            acc ^= int.from_bytes(t.row(), "big")
        cells.append(acc.to_bytes(width, "big"))
    return cells


def check_invariants(tree: PctTree):
    """Walk the tree: ordering, sizes, leaf bounds, protected sides, pivot minimality."""
    beta, h = tree.beta, half(tree.beta)

    def walk(node, lo, hi):
        if isinstance(node, Leaf):
            keys = [t.key for t in node.bucket]
            assert 1 <= len(keys) <= beta
            assert keys == sorted(keys) and len(set(keys)) == len(keys)
            assert all((lo is None or k > lo) and (hi is None or k < hi) for k in keys)
            return keys
        assert isinstance(node, Internal)
        left = walk(node.left, lo, node.pivot.key)
        right = walk(node.right, node.pivot.key, hi)
        assert node.size == len(left) + len(right) + 1
        assert len(left) >= h and len(right) >= h
        everything = left + [node.pivot.key] + right
        assert len(everything) > beta
        middle = everything[h:len(everything) - h]
        assert node.pivot.key == min(middle, key=lambda k: (priority(k, tree.salt), k))
        return everything

    if tree.root is None:
        return []
    return walk(tree.root, None, None)
