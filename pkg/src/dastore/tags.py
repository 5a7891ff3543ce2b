"""RSA homomorphic tags: tag(k, v) = (h(k) * g**v) ** d mod N.

Anyone holding the public parameters can check a tag by raising it to e;
only the holder of d can make one.  The block is used directly as the
exponent (big-endian), never reduced, because IBLT value sums are XORs.

Key generation draws from a seeded ``random.Random`` so that experiments are
reproducible.  That is fine for desk-scale simulation and nothing else.
"""
from __future__ import annotations

import hashlib
import math
import random
import struct
from dataclasses import dataclass

import gmpy2

from .errors import MalformedBytes, VersionMismatch

PUBLIC_EXPONENT = 65537
# Miller-Rabin rounds: error <= 4**-40 = 2**-80
_MR_ROUNDS = 40
_VERSION = 1


@dataclass(frozen=True)
class PublicParams:
    n: int
    e: int
    g: int
    salt: bytes
    tau: int

    @property
    def tag_width(self) -> int:
        return (2 * self.tau + 7) // 8

    def to_bytes(self) -> bytes:
        out = [b"DASK", struct.pack("<HH", _VERSION, self.tau)]
        for value in (self.n, self.e, self.g):
            raw = _int_bytes(value)
            out.append(struct.pack("<H", len(raw)) + raw)
        out.append(struct.pack("<H", len(self.salt)) + self.salt)
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "PublicParams":
        if data[:4] != b"DASK" or len(data) < 8:
            raise MalformedBytes("not a public parameters file")
        version, tau = struct.unpack_from("<HH", data, 4)
        if version != _VERSION:
            raise VersionMismatch(f"unsupported public parameters version {version}")
        fields, offset = _read_prefixed(data, 8, 4)
        if offset != len(data):
            raise MalformedBytes("trailing bytes in public parameters")
        n, e, g = (int.from_bytes(f, "big") for f in fields[:3])
        return cls(n, e, g, fields[3], tau)


@dataclass(frozen=True)
class SecretKey:
    d: int
    p: int = 0
    q: int = 0
    # square root of g; kept so tests can check that g is a quadratic residue
    g_root: int = 0

    def to_bytes(self) -> bytes:
        raw = _int_bytes(self.d)
        return b"DASS" + struct.pack("<HH", _VERSION, len(raw)) + raw

    @classmethod
    def from_bytes(cls, data: bytes) -> "SecretKey":
        if data[:4] != b"DASS" or len(data) < 6:
            raise MalformedBytes("not a secret key file")
        (version,) = struct.unpack_from("<H", data, 4)
        if version != _VERSION:
            raise VersionMismatch(f"unsupported secret key version {version}")
        fields, offset = _read_prefixed(data, 6, 1)
        if offset != len(data):
            raise MalformedBytes("trailing bytes in secret key")
        return cls(int.from_bytes(fields[0], "big"))


def _int_bytes(value: int) -> bytes:
    return value.to_bytes(max(1, (value.bit_length() + 7) // 8), "big")


def _read_prefixed(data: bytes, offset: int, count: int) -> tuple[list[bytes], int]:
    fields = []
    for _ in range(count):
        if len(data) - offset < 2:
            raise MalformedBytes("truncated length prefix")
        (length,) = struct.unpack_from("<H", data, offset)
        offset += 2
        if len(data) - offset < length:
            raise MalformedBytes("truncated field")
        fields.append(bytes(data[offset:offset + length]))
        offset += length
    return fields, offset


def _random_prime(bits: int, rng: random.Random) -> int:
    while True:
        # top two bits set so a product of two such primes has exactly 2*bits bits
        candidate = rng.getrandbits(bits) | (3 << (bits - 2)) | 1
        if gmpy2.is_prime(candidate, _MR_ROUNDS):
            return candidate


def keygen(tau: int, seed: int, salt_len: int = 16) -> tuple[PublicParams, SecretKey]:
    """Generate an RSA modulus of exactly 2*tau bits plus a generator of QR_N."""
    if tau < 16:
        raise ValueError(f"tau={tau} is too small to produce distinct primes reliably")
    rng = random.Random(seed)
    e = PUBLIC_EXPONENT
    while True:
        p = _random_prime(tau, rng)
        q = _random_prime(tau, rng)
        phi = (p - 1) * (q - 1)
        if p != q and math.gcd(e, phi) == 1:
            break
    n = p * q
    d = pow(e, -1, phi)
    while True:
        x = rng.randrange(2, n - 1)
        g = x * x % n
        if math.gcd(x, n) == 1 and g not in (0, 1):
            break
    salt = rng.getrandbits(8 * salt_len).to_bytes(salt_len, "big")
    return PublicParams(n, e, g, salt, tau), SecretKey(d, p, q, x)


def expand_key(key: bytes, pp: PublicParams) -> int:
    """SHA-256 in counter mode over (salt, counter, key), 2*tau + 64 bits long."""
    nbytes = (2 * pp.tau + 64 + 7) // 8
    prefix = struct.pack("<H", len(pp.salt)) + pp.salt
    chunks = []
    counter = 0
    while 32 * counter < nbytes:
        chunks.append(hashlib.sha256(prefix + struct.pack("<I", counter) + key).digest())
        counter += 1
    return int.from_bytes(b"".join(chunks)[:nbytes], "big")


def hash_to_group(key: bytes, pp: PublicParams) -> int:
    """Map a key into QR_N: reduce the expansion mod N, then square."""
    r = expand_key(key, pp) % pp.n
    return int(gmpy2.powmod(r, 2, pp.n))


def _base(key: bytes, block: bytes, pp: PublicParams) -> int:
    gv = gmpy2.powmod(pp.g, int.from_bytes(block, "big"), pp.n)
    return int(hash_to_group(key, pp) * gv % pp.n)


def make_tag(key: bytes, block: bytes, sk: SecretKey, pp: PublicParams) -> bytes:
    value = gmpy2.powmod(_base(key, block, pp), sk.d, pp.n)
    return int(value).to_bytes(pp.tag_width, "big")


def verify_tag(key: bytes, block: bytes, tag: bytes, pp: PublicParams) -> bool:
    """Public check tag**e == h(key) * g**block (mod N).

    The tag bytes are read big-endian and reduced mod N first.
    """
    t = int.from_bytes(tag, "big") % pp.n
    return int(gmpy2.powmod(t, pp.e, pp.n)) == _base(key, block, pp)


def purity_secret(key_sum: bytes, value_sum: bytes, tag_sum: bytes,
                  sk: SecretKey, pp: PublicParams) -> bool:
    """Client-side purity: recompute the tag of the cell's sums and compare bytes."""
    return make_tag(key_sum, value_sum, sk, pp) == bytes(tag_sum)


def purity_public(key_sum: bytes, value_sum: bytes, tag_sum: bytes, pp: PublicParams) -> bool:
    return verify_tag(key_sum, value_sum, tag_sum, pp)
