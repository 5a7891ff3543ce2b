"""
Homomorphic RSA tags
====================

"""
import random

from dastore import hash_to_group, keygen, make_tag, verify_tag

rng = random.Random(1)
pp, sk = keygen(128, seed=1)
print("modulus bits:", pp.n.bit_length(), " tag bytes:", pp.tag_width)

key, block = rng.randbytes(16), rng.randbytes(32)
tag = make_tag(key, block, sk, pp)
print("verifies:", verify_tag(key, block, tag, pp))

# one flipped bit anywhere in the block breaks the tag
bad = bytearray(block)
bad[5] ^= 0x10
print("flipped block verifies:", verify_tag(key, bytes(bad), tag, pp))

# tags multiply: with disjoint bits, XOR of blocks is their sum in the exponent
k2 = rng.randbytes(16)
v1 = bytes(b & 0x0F for b in rng.randbytes(32))
v2 = bytes(b & 0xF0 for b in rng.randbytes(32))
t1 = int.from_bytes(make_tag(key, v1, sk, pp), "big")
t2 = int.from_bytes(make_tag(k2, v2, sk, pp), "big")
combined = t1 * t2 % pp.n
lhs = pow(combined, pp.e, pp.n)
rhs = hash_to_group(key, pp) * hash_to_group(k2, pp) * pow(pp.g, int.from_bytes(v1, "big")
                                                           + int.from_bytes(v2, "big"), pp.n) % pp.n
print("product of tags matches product of bases:", lhs == rhs)
