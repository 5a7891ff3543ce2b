"""
IBLT basics: insert, combine, peel
==================================

"""
import random

from dastore import Iblt, IbltParams, Triple, keygen, make_tag, peel, purity_secret

rng = random.Random(0)
pp, sk = keygen(128, seed=0)

# a table sized for up to 10 missing items: 4 hashes, 52 cells
params = IbltParams.for_delta(10, key_width=16, block_width=32, tag_width=pp.tag_width,
                              num_hashes=4, salt=b"demo")
print(params)


def triple():
    k, v = rng.randbytes(16), rng.randbytes(32)
    return Triple(k, v, make_tag(k, v, sk, pp))


# two sets that share most of their items
shared = [triple() for _ in range(200)]
only_a = [triple() for _ in range(4)]
only_b = [triple() for _ in range(3)]
a = Iblt.from_triples(params, shared + only_a)
b = Iblt.from_triples(params, shared + only_b)

# each table is far too full to list on its own
oracle = lambda k, v, t: purity_secret(k, v, t, sk, pp)
print("peel A alone:", peel(a, oracle).ok)

# XOR cancels the shared part, leaving the symmetric difference
diff = a.combine(b)
res = peel(diff, oracle)
print("peel A xor B:", res.ok, "recovered", len(res.recovered), "triples")
assert set(res.recovered) == set(only_a + only_b)

# serialized size depends only on the parameters
print("table bytes:", len(diff.to_bytes()))
