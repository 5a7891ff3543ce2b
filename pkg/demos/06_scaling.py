"""
Server metadata, client state and proof size versus n
=====================================================

"""
from dastore.experiments import scaling_rows

rows = scaling_rows([100, 1000, 10_000], [32, 64, 256], delta=16, tau=128)

cols = ["n", "beta", "nodes", "node_bound", "metadata_bytes", "client_state_bytes", "proof_bytes"]
print("  ".join(f"{c:>18}" for c in cols))
for row in rows:
    print("  ".join(f"{row[c]:>18}" for c in cols))

# client state and proof size do not move with n; server metadata shrinks as beta grows
