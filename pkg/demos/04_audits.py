"""
Audits and the accountability challenge
=======================================

"""
import random

from dastore import (FaultAction, FaultPlan, accountability_challenge, client_audit,
                     detect_corrupted, get, inject, keygen, restore, server_audit, setup)

rng = random.Random(4)
keys = sorted({rng.randbytes(16) for _ in range(1000)})
blocks = [rng.randbytes(32) for _ in keys]
originals = dict(zip(keys, blocks))

res = setup(blocks, keys, delta=16, tau=128, beta=32, seed=4, keypair=keygen(128, 4))
client, server = res.client, res.server
print("server tree nodes:", server.tree.node_count())
print("client state bytes (no key list):", len(client.to_bytes(include_keys=False)))

# the client asks for three blocks back through an audit
report = client_audit(client, server, keys[:3])
print("audit:", report.outcome, "proof bytes", report.proof_bytes)

# the disk loses or damages ten blocks
victims = rng.sample(keys, 10)
plan = FaultPlan(9, [FaultAction("key", k, "drop" if i % 2 else "flip", 1 if i % 2 else 3)
                     for i, k in enumerate(victims)])
inject(server.store, plan)
print("damaged:", [len(x) for x in detect_corrupted(server)], "(corrupted, missing)")

# the client learns exactly what was lost, with the original bytes
report = accountability_challenge(client, server)
print("challenge:", report.outcome, "recovered", len(report.recovered))
assert report.blocks() == {k: originals[k] for k in victims}

# the server can repair itself from its own metadata
report = server_audit(server)
restore(server, report.triples)
print("after restore:", detect_corrupted(server))

# a damaged block is also healed on read
inject(server.store, FaultPlan(1, [FaultAction("key", keys[7], "zero")]))
print("get returns original:", get(client, server, keys[7]) == originals[keys[7]])
