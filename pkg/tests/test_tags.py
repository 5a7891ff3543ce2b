import hashlib
import math
import random
import struct

import pytest
from hypothesis import given, settings, strategies as st

from dastore.errors import MalformedBytes
from dastore.tags import (PublicParams, SecretKey, expand_key, hash_to_group, keygen,
                          make_tag, purity_public, purity_secret, verify_tag)


def ref_hash(key, pp):
    """Reference h(k) using only hashlib and builtin pow."""
    nbytes = (2 * pp.tau + 64 + 7) // 8
    stream = b""
    i = 0
    while len(stream) < nbytes:
        stream += hashlib.sha256(struct.pack("<H", len(pp.salt)) + pp.salt
                                 + struct.pack("<I", i) + key).digest()
        i += 1
    r = int.from_bytes(stream[:nbytes], "big") % pp.n
    return pow(r, 2, pp.n)


def ref_check(key, block, tag, pp):
    lhs = pow(int.from_bytes(tag, "big"), pp.e, pp.n)
    rhs = ref_hash(key, pp) * pow(pp.g, int.from_bytes(block, "big"), pp.n) % pp.n
    return lhs == rhs


def test_keygen_modulus_size_and_relations(pp, sk):
    assert pp.n.bit_length() == 256
    assert sk.p * sk.q == pp.n and sk.p != sk.q
    phi = (sk.p - 1) * (sk.q - 1)
    assert pp.e == 65537
    assert pp.e * sk.d % phi == 1
    assert pp.g == sk.g_root ** 2 % pp.n
    assert math.gcd(pp.g, pp.n) == 1


def test_keygen_deterministic():
    a = keygen(64, seed=5)
    b = keygen(64, seed=5)
    c = keygen(64, seed=6)
    assert a == b and a[0].n != c[0].n


def test_tag_width(pp):
    assert pp.tag_width == 32
    assert keygen(20, seed=1)[0].tag_width == 5


def test_expand_key_matches_reference(pp, rng):
    for _ in range(20):
        key = rng.randbytes(16)
        assert hash_to_group(key, pp) == ref_hash(key, pp)
        assert expand_key(key, pp).bit_length() <= 2 * pp.tau + 64


def test_tag_verifies_with_independent_check(pp, sk, rng):
    for _ in range(30):
        key, block = rng.randbytes(16), rng.randbytes(32)
        tag = make_tag(key, block, sk, pp)
        assert len(tag) == pp.tag_width
        assert verify_tag(key, block, tag, pp)
        assert ref_check(key, block, tag, pp)


def test_tag_is_deterministic(pp, sk):
    assert make_tag(b"k" * 16, b"v" * 32, sk, pp) == make_tag(b"k" * 16, b"v" * 32, sk, pp)


def test_tag_homomorphism_over_disjoint_bits(pp, sk, rng):
    # disjoint-bit blocks: XOR equals integer addition, so tag products match
    for _ in range(20):
        k1, k2 = rng.randbytes(16), rng.randbytes(16)
        mask = rng.getrandbits(256)
        v1 = (rng.getrandbits(256) & mask).to_bytes(32, "big")
        v2 = (rng.getrandbits(256) & ~mask & (2**256 - 1)).to_bytes(32, "big")
        t1 = int.from_bytes(make_tag(k1, v1, sk, pp), "big")
        t2 = int.from_bytes(make_tag(k2, v2, sk, pp), "big")
        prod = t1 * t2 % pp.n
        expected = pow(ref_hash(k1, pp) * ref_hash(k2, pp)
                       * pow(pp.g, int.from_bytes(v1, "big") + int.from_bytes(v2, "big"), pp.n),
                       sk.d, pp.n)
        assert prod == expected


def test_bit_flip_in_block_detected(pp, sk, rng):
    for _ in range(100):
        key, block = rng.randbytes(16), bytearray(rng.randbytes(32))
        tag = make_tag(key, bytes(block), sk, pp)
        bit = rng.randrange(256)
        block[bit // 8] ^= 1 << (bit % 8)
        assert not verify_tag(key, bytes(block), tag, pp)


def test_bit_flip_in_tag_detected(pp, sk, rng):
    key, block = rng.randbytes(16), rng.randbytes(32)
    tag = bytearray(make_tag(key, block, sk, pp))
    tag[-1] ^= 1
    assert not verify_tag(key, block, bytes(tag), pp)


def test_tag_for_other_key_rejected(pp, sk, rng):
    block = rng.randbytes(32)
    tag = make_tag(b"a" * 16, block, sk, pp)
    assert not verify_tag(b"b" * 16, block, tag, pp)


def test_purity_secret_and_public_agree_on_true_cells(pp, sk, rng):
    key, block = rng.randbytes(16), rng.randbytes(32)
    tag = make_tag(key, block, sk, pp)
    assert purity_secret(key, block, tag, sk, pp)
    assert purity_public(key, block, tag, pp)


def _xor(a, b):
    return bytes(x ^ y for x, y in zip(a, b))


def test_xor_of_two_triples_is_never_pure(pp, sk, rng):
    triples = []
    for _ in range(2000):
        k, v = rng.randbytes(16), rng.randbytes(32)
        triples.append((k, v, make_tag(k, v, sk, pp)))
    false_pos = 0
    for _ in range(10_000):
        (k1, v1, t1), (k2, v2, t2) = rng.sample(triples, 2)
        k, v, t = _xor(k1, k2), _xor(v1, v2), _xor(t1, t2)
        false_pos += purity_public(k, v, t, pp) or purity_secret(k, v, t, sk, pp)
    assert false_pos == 0


@pytest.mark.slow
def test_mixed_cells_false_positive_rate(pp, sk):
    """XOR of 2..4 valid triples, 10^5 samples: none may pass the secret check."""
    rng = random.Random(99)
    triples = []
    for _ in range(500):
        k, v = rng.randbytes(16), rng.randbytes(32)
        triples.append((k, v, make_tag(k, v, sk, pp)))
    hits = 0
    for _ in range(100_000):
        group = rng.sample(triples, rng.randint(2, 4))
        k, v, t = group[0]
        for k2, v2, t2 in group[1:]:
            k, v, t = _xor(k, k2), _xor(v, v2), _xor(t, t2)
        hits += purity_secret(k, v, t, sk, pp)
    assert hits <= 1


@settings(max_examples=50, deadline=None)
@given(st.binary(min_size=16, max_size=16), st.binary(min_size=32, max_size=32))
def test_tag_roundtrip_property(pp, sk, key, block):
    assert verify_tag(key, block, make_tag(key, block, sk, pp), pp)


def test_public_params_round_trip(pp):
    data = pp.to_bytes()
    assert data[:4] == b"DASK"
    assert PublicParams.from_bytes(data) == pp
    for cut in (3, 9, len(data) - 1):
        with pytest.raises(MalformedBytes):
            PublicParams.from_bytes(data[:cut])


def test_secret_key_round_trip(sk):
    got = SecretKey.from_bytes(sk.to_bytes())
    assert got.d == sk.d
    with pytest.raises(MalformedBytes):
        SecretKey.from_bytes(sk.to_bytes()[:-1])
