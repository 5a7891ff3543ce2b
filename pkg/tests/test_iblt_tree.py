import random

import pytest

from dastore.cartesian import Leaf
from dastore.errors import BadTag, EmptyTree, MalformedBytes, WidthMismatch
from dastore.iblt import Iblt, Triple, peel
from dastore.iblt_tree import ConstructStats, IbltTree
from dastore.tags import make_tag, purity_secret

from conftest import make_params, raw_triples, shadow_iblt, tagged_triples


def cells(table):
    return [table.cells[i].tobytes() for i in range(table.params.num_cells)]


def test_empty_tree_root_iblt():
    tree = IbltTree.build([], make_params(), 4)
    with pytest.raises(EmptyTree):
        tree.root_iblt()
    assert tree.construct_iblt().is_empty()


def test_root_iblt_matches_flat_fold(rng):
    params = make_params()
    triples = raw_triples(rng, 300, params)
    tree = IbltTree.build(triples, params, 8)
    assert cells(tree.root_iblt()) == shadow_iblt(params, triples)
    assert tree.check() == []


def test_every_node_iblt_folds_its_subtree(rng):
    params = make_params()
    tree = IbltTree.build(raw_triples(rng, 200, params), params, 4)
    from dastore.cartesian import iter_triples
    for node in tree.nodes():
        assert cells(node.iblt) == shadow_iblt(params, list(iter_triples(node)))


def test_construct_excludes_keys(rng):
    params = make_params()
    triples = raw_triples(rng, 400, params)
    tree = IbltTree.build(triples, params, 16)
    for count in (0, 1, 5, 20):
        drop = set(t.key for t in rng.sample(triples, count))
        got = tree.construct_iblt(drop)
        assert cells(got) == shadow_iblt(params, [t for t in triples if t.key not in drop])
    # the stored root must be unaffected
    assert cells(tree.root_iblt()) == shadow_iblt(params, triples)


def test_construct_result_is_independent_copy(rng):
    params = make_params()
    tree = IbltTree.build(raw_triples(rng, 50, params), params, 4)
    out = tree.construct_iblt()
    out.update(raw_triples(rng, 1, params)[0])
    assert tree.check() == []


def test_construct_then_diff_recovers_excluded(rng, sk, pp):
    params = make_params(delta=16)
    triples = tagged_triples(rng, 500, params, sk, pp)
    tree = IbltTree.build(triples, params, 32, pp)
    drop = rng.sample(triples, 16)
    diff = tree.root_iblt().combine(tree.construct_iblt({t.key for t in drop}))
    res = peel(diff, lambda k, v, tg: purity_secret(k, v, tg, sk, pp))
    assert res.ok and set(res.recovered) == set(drop)


def test_construct_reads_live_source_and_skips_invalid(rng):
    params = make_params()
    triples = raw_triples(rng, 100, params)
    tree = IbltTree.build(triples, params, 8)
    live = {t.key: t for t in triples}
    bad = triples[3]
    live[bad.key] = Triple(bad.key, bytes(params.block_width), bad.tag)
    gone = triples[50]
    del live[gone.key]
    stats = ConstructStats()
    got = tree.construct_iblt(
        invalid_keys=[bad.key, gone.key], source=live.get,
        skip_invalid=lambda t: t.block == bytes(params.block_width), stats=stats)
    expect = [t for t in triples if t.key not in (bad.key, gone.key)]
    assert cells(got) == shadow_iblt(params, expect)
    assert sorted(stats.invalid_keys) == sorted([bad.key, gone.key])


def test_leaf_rebuilds_bounded_by_excluded(rng):
    params = make_params()
    triples = raw_triples(rng, 1000, params)
    tree = IbltTree.build(triples, params, 16)
    for count in (1, 4, 16):
        stats = ConstructStats()
        tree.construct_iblt([t.key for t in rng.sample(triples, count)], stats=stats)
        assert 1 <= stats.leaf_rebuilds <= count


def test_insert_delete_keep_iblts_consistent(rng):
    params = make_params()
    universe = raw_triples(rng, 200, params)
    tree = IbltTree.build([], params, 4)
    present = {}
    for step in range(800):
        t = rng.choice(universe)
        if t.key in present:
            assert tree.delete(t.key) == t
            del present[t.key]
        else:
            tree.insert(t)
            present[t.key] = t
        if step % 100 == 99:
            assert tree.check() == []
            if present:
                assert cells(tree.root_iblt()) == shadow_iblt(params, list(present.values()))


def test_insert_rejects_bad_widths_and_tags(rng, sk, pp):
    params = make_params()
    tree = IbltTree.build([], params, 4, pp)
    with pytest.raises(WidthMismatch):
        tree.insert(Triple(b"k", b"v", b"t"))
    key, block = rng.randbytes(16), rng.randbytes(32)
    with pytest.raises(BadTag):
        tree.insert(Triple(key, block, bytes(params.tag_width - 1) + b"\1"))
    tree.insert(Triple(key, block, make_tag(key, block, sk, pp)))
    assert len(tree) == 1


def test_corrupted_node_iblt_is_flagged(rng):
    params = make_params()
    tree = IbltTree.build(raw_triples(rng, 200, params), params, 8)
    victim = [n for n in tree.nodes() if isinstance(n, Leaf)][3]
    victim.iblt.cells[0, 0] ^= 1
    assert tree.check() == [victim]


def _snapshot_after(ops_order, params, beta):
    tree = IbltTree.build([], params, beta)
    for op, t in ops_order:
        if op == "+":
            tree.insert(t)
        else:
            tree.delete(t.key)
    return tree.snapshot()


def test_snapshot_independent_of_history(rng):
    params = make_params()
    triples = raw_triples(rng, 120, params)
    extra = raw_triples(random.Random(7), 30, params)
    target = IbltTree.build(triples, params, 8).snapshot()
    order_a = [("+", t) for t in triples]
    order_b = [("+", t) for t in reversed(triples)]
    order_c = [("+", t) for t in extra] + [("+", t) for t in triples] + [("-", t) for t in extra]
    rng.shuffle(order_a)
    for order in (order_a, order_b, order_c):
        assert _snapshot_after(order, params, 8) == target


def test_snapshot_round_trip(rng):
    params = make_params()
    tree = IbltTree.build(raw_triples(rng, 150, params), params, 8)
    data = tree.snapshot()
    back = IbltTree.restore(data)
    assert back.snapshot() == data
    assert back.check() == []
    assert list(back) == list(tree)


def test_snapshot_truncation_rejected(rng):
    params = make_params()
    data = IbltTree.build(raw_triples(rng, 40, params), params, 4).snapshot()
    for cut in (5, 30, len(data) // 2, len(data) - 1):
        with pytest.raises(MalformedBytes):
            IbltTree.restore(data[:cut])
    with pytest.raises(MalformedBytes):
        IbltTree.restore(data + b"\0")


def test_metadata_independent_of_block_contents(rng):
    params = make_params()
    tree = IbltTree.build(raw_triples(rng, 100, params), params, 8)
    assert tree.metadata_bytes() == tree.node_count() * params.num_cells * params.cell_width
    assert len(Iblt(params).to_bytes()) == len(tree.construct_iblt([]).to_bytes())
