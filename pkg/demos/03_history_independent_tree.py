"""
History-independent protected Cartesian tree
============================================

"""
import random

from dastore import IbltParams, IbltTree, Triple

rng = random.Random(3)
params = IbltParams.for_delta(8, 8, 8, 8, 4, salt=b"tree-demo")
items = [Triple(rng.randbytes(8), rng.randbytes(8), rng.randbytes(8)) for _ in range(300)]

# build straight from the set
fresh = IbltTree.build(items, params, beta=16)
print("nodes:", fresh.node_count(), " leaf depths:", sorted(set(fresh.pct.leaf_depths())))

# reach the same set through a different history: shuffled inserts plus a detour
noise = [Triple(rng.randbytes(8), rng.randbytes(8), rng.randbytes(8)) for _ in range(80)]
order = items + noise
rng.shuffle(order)
tree = IbltTree(params, beta=16)
for t in order:
    tree.insert(t)
for t in noise:
    tree.delete(t.key)

# the serialized tree, every IBLT included, is identical
print("byte-identical snapshots:", tree.snapshot() == fresh.snapshot())
print("nodes whose IBLT disagrees with a rebuild:", len(tree.check()))

# every leaf holds between beta/2 and beta items
sizes = [len(n.bucket) for n in tree.nodes() if hasattr(n, "bucket")]
print("leaf sizes:", min(sizes), "to", max(sizes))
