"""Reusable experiment drivers: peel success rates and space/proof scaling."""
from __future__ import annotations

import math
import random

from .iblt import Iblt, IbltParams, Triple, peel
from .iblt_tree import ConstructStats, IbltTree
from .protocol import setup
from .tags import PublicParams, SecretKey, keygen, make_tag, purity_secret


def random_triples(rng: random.Random, count: int, params: IbltParams,
                   sk: SecretKey, pp: PublicParams) -> list[Triple]:
    """``count`` triples with distinct random keys and valid tags."""
    keys = set()
    while len(keys) < count:
        keys.add(rng.randbytes(params.key_width))
    out = []
    for k in sorted(keys):
        b = rng.randbytes(params.block_width)
        out.append(Triple(k, b, make_tag(k, b, sk, pp)))
    return out


def peel_trials(delta: int, trials: int, num_hashes: int = 4, tau: int = 128, seed: int = 0,
                key_width: int = 16, block_width: int = 32,
                keypair: tuple[PublicParams, SecretKey] | None = None) -> int:
    """Number of trials in which a delta-triple IBLT with m = (q+1)*delta peels back exactly.

    Every trial draws fresh triples and a fresh hash salt.
    """
    pp, sk = keypair or keygen(tau, seed)
    rng = random.Random(seed * 1_000_003 + delta)
    ok = 0
    oracle = lambda k, v, t: purity_secret(k, v, t, sk, pp)  # noqa: E731
    for _ in range(trials):
        params = IbltParams.for_delta(delta, key_width, block_width, pp.tag_width, num_hashes,
                                      rng.randbytes(16))
        triples = random_triples(rng, delta, params, sk, pp)
        result = peel(Iblt.from_triples(params, triples), oracle)
        if result.ok and set(result.recovered) == set(triples):
            ok += 1
    return ok


def node_bound(n: int, beta: int) -> int:
    return 4 * math.ceil(n / beta) + 1


def scaling_rows(ns, betas, delta: int = 16, tau: int = 128, seed: int = 0,
                 key_width: int = 16, block_width: int = 32) -> list[dict]:
    """Node counts, metadata bytes, client state bytes and proof bytes per (n, beta)."""
    keypair = keygen(tau, seed)
    rows = []
    for n in ns:
        rng = random.Random(seed + n)
        keys = set()
        while len(keys) < n:
            keys.add(rng.randbytes(key_width))
        keys = sorted(keys)
        blocks = [rng.randbytes(block_width) for _ in keys]
        res = setup(blocks, keys, delta, tau, betas[0], seed, keypair=keypair)
        triples = list(res.server.tree)
        client_bytes = len(res.client.to_bytes(include_keys=False))
        for beta in betas:
            tree = IbltTree.build(triples, res.client.params, beta)
            depths = tree.pct.leaf_depths()
            proof = tree.construct_iblt(keys[:delta]).to_bytes()
            rows.append({
                "n": n, "beta": beta, "delta": delta,
                "nodes": tree.node_count(), "leaves": len(depths),
                "node_bound": node_bound(n, beta),
                "metadata_bytes": tree.metadata_bytes(),
                "client_state_bytes": client_bytes,
                "proof_bytes": len(proof),
                "mean_leaf_depth": round(sum(depths) / len(depths), 3),
            })
    return rows


def leaf_rebuilds(tree: IbltTree, excluded_count: int, rng: random.Random, samples: int = 20) -> float:
    """Mean leaves re-folded by construct_iblt when excluding random stored keys."""
    keys = [t.key for t in tree]
    total = 0
    for _ in range(samples):
        stats = ConstructStats()
        tree.construct_iblt(rng.sample(keys, excluded_count), stats=stats)
        total += stats.leaf_rebuilds
    return total / samples
