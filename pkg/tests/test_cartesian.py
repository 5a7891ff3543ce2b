import random

import pytest
from hypothesis import given, settings, strategies as st

from dastore.cartesian import (Internal, Leaf, PctTree, half, pct_init, priority,
                               protected_split, same_shape)
from dastore.errors import DuplicateKey, InvalidParams, KeyNotFound
from dastore.iblt import Triple

from conftest import check_invariants

SALT = b"pct-test"


def trip(key: bytes) -> Triple:
    return Triple(key, b"v" + key[:3], b"t")


def keys_of(n, rng, width=4):
    ks = set()
    while len(ks) < n:
        ks.add(rng.randbytes(width))
    return sorted(ks)


def ref_shape(keys, beta, salt):
    """Reference structure as nested tuples, built straight from the definition."""
    keys = sorted(keys)
    if len(keys) <= beta:
        return ("leaf", tuple(keys))
    h = (beta + 1) // 2
    middle = keys[h:len(keys) - h]
    pivot = min(middle, key=lambda k: (priority(k, salt), k))
    i = keys.index(pivot)
    return ("node", pivot, ref_shape(keys[:i], beta, salt), ref_shape(keys[i + 1:], beta, salt))


def shape(node):
    if isinstance(node, Leaf):
        return ("leaf", tuple(t.key for t in node.bucket))
    return ("node", node.pivot.key, shape(node.left), shape(node.right))


def test_half():
    assert half(2) == 1 and half(4) == 2 and half(32) == 16


def test_protected_split_example():
    pre, mid, suf = protected_split(list(range(10)), 4)
    assert pre == [0, 1] and mid == [2, 3, 4, 5, 6, 7] and suf == [8, 9]
    assert protected_split([1, 2, 3], 4) == ([1, 2], [], [3])


@pytest.mark.parametrize("beta", [0, 1, 3, 7])
def test_bad_beta(beta):
    with pytest.raises(InvalidParams):
        PctTree(beta)


def test_small_set_is_one_leaf(rng):
    keys = keys_of(4, rng)
    tree = pct_init([trip(k) for k in keys], 4, SALT)
    assert isinstance(tree.root, Leaf) and [t.key for t in tree] == keys


def test_empty_tree():
    tree = pct_init([], 4)
    assert tree.root is None and tree.n == 0 and list(tree) == []


def test_pivot_avoids_protected_ends(rng):
    keys = keys_of(10, rng)
    tree = pct_init([trip(k) for k in keys], 4, SALT)
    assert isinstance(tree.root, Internal)
    assert tree.root.pivot.key in keys[2:8]
    check_invariants(tree)


def test_duplicate_key_rejected():
    with pytest.raises(DuplicateKey):
        pct_init([trip(b"aaaa"), trip(b"aaaa")], 4)
    tree = pct_init([trip(b"aaaa")], 4)
    with pytest.raises(DuplicateKey):
        tree.insert(trip(b"aaaa"))


def test_delete_missing_key():
    with pytest.raises(KeyNotFound):
        pct_init([trip(b"aaaa")], 4).delete(b"bbbb")


@pytest.mark.parametrize("beta", [2, 4, 8, 32])
def test_build_matches_reference(beta, rng):
    for n in (0, 1, beta, beta + 1, 3 * beta + 5, 200):
        keys = keys_of(n, rng)
        tree = pct_init([trip(k) for k in keys], beta, SALT)
        if n:
            assert shape(tree.root) == ref_shape(keys, beta, SALT)
        assert check_invariants(tree) == keys


@pytest.mark.parametrize("beta", [2, 4, 16])
def test_insert_delete_history_independent(beta):
    rng = random.Random(beta)
    universe = keys_of(150, rng)
    present = set()
    tree = PctTree(beta, SALT)
    for step in range(600):
        k = rng.choice(universe)
        if k in present:
            tree.delete(k)
            present.remove(k)
        else:
            tree.insert(trip(k))
            present.add(k)
        if step % 25 == 0 or step > 580:
            fresh = pct_init([trip(x) for x in present], beta, SALT)
            assert same_shape(tree.root, fresh.root)
            assert check_invariants(tree) == sorted(present)


def test_delete_returns_stored_triple(rng):
    keys = keys_of(30, rng)
    tree = pct_init([trip(k) for k in keys], 4, SALT)
    change = tree.delete(keys[7])
    assert change.triple == trip(keys[7])
    assert keys[7] not in tree


def test_change_reports_touched_leaves(rng):
    keys = keys_of(100, rng)
    tree = pct_init([trip(k) for k in keys[:-1]], 8, SALT)
    change = tree.insert(trip(keys[-1]))
    leaves = change.leaves()
    assert leaves and any(keys[-1] in [t.key for t in leaf.bucket] for leaf in leaves)


def test_replace_keeps_shape(rng):
    keys = keys_of(50, rng)
    tree = pct_init([trip(k) for k in keys], 4, SALT)
    before = shape(tree.root)
    assert tree.replace(Triple(keys[10], b"new!", b"T"))
    assert tree.find(keys[10]).block == b"new!"
    assert shape(tree.root) == before
    assert not tree.replace(Triple(b"zzzz" * 2, b"x", b"y"))


def test_salt_changes_shape(rng):
    keys = keys_of(200, rng)
    a = pct_init([trip(k) for k in keys], 4, b"one")
    b = pct_init([trip(k) for k in keys], 4, b"two")
    assert shape(a.root) != shape(b.root)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.integers(0, 60)), max_size=120),
       st.sampled_from([2, 4, 6]))
def test_any_op_sequence_matches_fresh_build(ops, beta):
    tree = PctTree(beta, SALT)
    present = set()
    for is_insert, i in ops:
        k = i.to_bytes(4, "big")
        if is_insert and k not in present:
            tree.insert(trip(k))
            present.add(k)
        elif not is_insert and k in present:
            tree.delete(k)
            present.remove(k)
    fresh = pct_init([trip(k) for k in present], beta, SALT)
    assert same_shape(tree.root, fresh.root)
    assert check_invariants(tree) == sorted(present)


def test_node_count_bound(rng):
    for beta in (4, 16, 64):
        keys = keys_of(3000, rng)
        tree = pct_init([trip(k) for k in keys], beta, SALT)
        assert tree.node_count() <= 4 * -(-3000 // beta) + 1
