"""Command-line front end: ``dastore <command> --dir <store> ...``.

Exit codes: 0 success, 2 usage error, 3 protocol failure (unrecoverable
block or rejected audit), 4 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import json
import random
import sys
import time
from pathlib import Path

from . import protocol as proto
from .errors import DASError, MalformedBytes, RecoveryFailure, StoreIOError
from .experiments import peel_trials, scaling_rows
from .iblt import Iblt, IbltParams
from .iblt_tree import IbltTree
from .store import BlockStore, FaultPlan, atomic_write, inject
from .tags import PublicParams, SecretKey

EXIT_OK, EXIT_USAGE, EXIT_FAILURE, EXIT_IO = 0, 2, 3, 4

TREE_FILE = "tree.dast"
CLIENT_FILE = "client.dasc"
PUBLIC_FILE = "public.dask"
SECRET_FILE = "secret.dass"
RECOVERED_DIR = "recovered"

PEEL_COLUMNS = ["delta", "q", "m", "trials", "successes", "success_rate"]
SCALING_COLUMNS = ["n", "beta", "delta", "nodes", "leaves", "node_bound", "metadata_bytes",
                   "client_state_bytes", "proof_bytes", "mean_leaf_depth"]


class ProtocolFailure(Exception):
    pass


class Session:
    """Both parties' state loaded from one directory."""

    def __init__(self, root: Path):
        self.root = root
        try:
            pp = PublicParams.from_bytes((root / PUBLIC_FILE).read_bytes())
            self.client = proto.ClientState.from_bytes((root / CLIENT_FILE).read_bytes())
            sk = SecretKey.from_bytes((root / SECRET_FILE).read_bytes())
            tree = IbltTree.restore((root / TREE_FILE).read_bytes(), pp)
        except FileNotFoundError as exc:
            raise StoreIOError(f"{exc.filename} missing; run 'init' first") from exc
        self.client.sk = sk
        store = BlockStore.open(root)
        q = tree.params.num_hashes
        self.server = proto.ServerState(tree.params, pp, tree.params.num_cells // (q + 1),
                                        tree.beta, store, tree)

    def save(self):
        atomic_write(self.root / TREE_FILE, self.server.tree.snapshot())
        atomic_write(self.root / CLIENT_FILE, self.client.to_bytes())


def _hex_key(text: str, width: int) -> bytes:
    try:
        key = bytes.fromhex(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a hex key: {text!r}") from None
    if len(key) != width:
        raise argparse.ArgumentTypeError(f"key {text} is {len(key)} bytes, expected {width}")
    return key


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _write_recovered(root: Path, report: proto.AuditReport) -> Path:
    out = root / RECOVERED_DIR
    out.mkdir(exist_ok=True)
    for key, block in report.recovered:
        (out / (key.hex() + ".blk")).write_bytes(block)
    return out


def cmd_init(args, emit):
    root = Path(args.dir)
    rng = random.Random(args.seed)
    keys = set()
    while len(keys) < args.n:
        keys.add(rng.randbytes(args.key_size))
    keys = sorted(keys)
    blocks = [rng.randbytes(args.block_size) for _ in keys]
    if (root / TREE_FILE).exists():
        raise StoreIOError(f"{root} already holds a store")
    res = proto.setup(blocks, keys, args.delta, args.tau, args.beta, args.seed,
                      num_hashes=args.q, key_width=args.key_size, block_width=args.block_size,
                      store=BlockStore.create(root, args.key_size, args.block_size,
                                              (2 * args.tau + 7) // 8))
    (root / PUBLIC_FILE).write_bytes(res.pp.to_bytes())
    (root / SECRET_FILE).write_bytes(res.sk.to_bytes())
    session = Session.__new__(Session)
    session.root, session.client, session.server = root, res.client, res.server
    session.save()
    print(f"initialized {root}: n={args.n} delta={args.delta} beta={args.beta} "
          f"nodes={res.server.tree.node_count()}")
    emit("init", n=args.n, nodes=res.server.tree.node_count())


def cmd_put(args, emit):
    s = Session(Path(args.dir))
    key = _hex_key(args.key, s.client.params.key_width)
    block = Path(args.block_file).read_bytes()
    proto.put(s.client, s.server, key, block)
    s.save()
    emit("put", key=key.hex())


def cmd_get(args, emit):
    s = Session(Path(args.dir))
    key = _hex_key(args.key, s.client.params.key_width)
    block = proto.get(s.client, s.server, key)
    s.save()
    if args.out:
        Path(args.out).write_bytes(block)
    else:
        sys.stdout.buffer.write(block)
        sys.stdout.flush()
    emit("get", key=key.hex(), bytes=len(block))


def cmd_delete(args, emit):
    s = Session(Path(args.dir))
    key = _hex_key(args.key, s.client.params.key_width)
    proto.delete(s.client, s.server, key)
    s.save()
    emit("delete", key=key.hex())


def cmd_corrupt(args, emit):
    root = Path(args.dir)
    plan = FaultPlan.parse(Path(args.plan).read_text())
    report = inject(BlockStore.open(root), plan)
    for key, modes in sorted(report.items()):
        print(f"{key.hex()} {','.join(modes)}")
    emit("corrupt", affected=len(report))


def _print_report(report: proto.AuditReport, root: Path):
    print(f"outcome={report.outcome} recovered={len(report.recovered)} "
          f"corrupted={len(report.corrupted_keys)} missing={len(report.missing_keys)} "
          f"proof_bytes={report.proof_bytes}")
    for key, _ in report.recovered:
        print(key.hex())
    if report.recovered:
        _write_recovered(root, report)


def cmd_audit(args, emit):
    s = Session(Path(args.dir))
    keys = [_hex_key(k, s.client.params.key_width) for k in args.keys.split(",") if k]
    report = proto.client_audit(s.client, s.server, keys)
    _print_report(report, s.root)
    emit("audit", outcome=report.outcome, recovered=len(report.recovered),
         proof_bytes=report.proof_bytes)
    if not report.ok:
        raise ProtocolFailure("audit rejected")


def cmd_server_audit(args, emit):
    s = Session(Path(args.dir))
    keys = [_hex_key(k, s.client.params.key_width) for k in (args.keys or "").split(",") if k]
    report = proto.server_audit(s.server, keys)
    _print_report(report, s.root)
    emit("server-audit", outcome=report.outcome, recovered=len(report.recovered))
    if not report.ok:
        raise ProtocolFailure("server audit failed")


def cmd_challenge(args, emit):
    s = Session(Path(args.dir))
    report = proto.accountability_challenge(s.client, s.server)
    _print_report(report, s.root)
    emit("challenge", outcome=report.outcome, recovered=len(report.recovered),
         proof_bytes=report.proof_bytes)
    if not report.ok:
        raise ProtocolFailure("challenge rejected")


def cmd_verify(args, emit):
    s = Session(Path(args.dir))
    corrupted, missing = proto.detect_corrupted(s.server)
    print(f"corrupted={len(corrupted)} missing={len(missing)}")
    for k in corrupted:
        print(f"corrupted {k.hex()}")
    for k in missing:
        print(f"missing {k.hex()}")
    emit("verify", corrupted=len(corrupted), missing=len(missing))


def cmd_restore(args, emit):
    s = Session(Path(args.dir))
    report = proto.server_audit(s.server)
    if not report.ok:
        raise ProtocolFailure("server audit failed; nothing restored")
    proto.restore(s.server, report.triples)
    s.save()
    corrupted, missing = proto.detect_corrupted(s.server)
    print(f"restored={len(report.triples)} corrupted={len(corrupted)} missing={len(missing)}")
    emit("restore", restored=len(report.triples))


def cmd_stats(args, emit):
    s = Session(Path(args.dir))
    tree = s.server.tree
    stats = {
        "n": len(tree),
        "nodes": tree.node_count(),
        "metadata_bytes": tree.metadata_bytes(),
        "client_state_bytes": len(s.client.to_bytes(include_keys=False)),
        "delta": s.client.delta,
        "beta": tree.beta,
        "proof_bytes": len(Iblt(s.client.params).to_bytes()),
    }
    for name, value in stats.items():
        print(f"{name}={value}")
    emit("stats", **stats)


def cmd_bench_peel(args, emit):
    writer = csv.DictWriter(sys.stdout, fieldnames=PEEL_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for delta in args.delta_list:
        ok = peel_trials(delta, args.trials, args.q, args.tau, args.seed)
        m = IbltParams.for_delta(delta, 1, 1, 1, args.q).num_cells
        writer.writerow({"delta": delta, "q": args.q, "m": m, "trials": args.trials,
                         "successes": ok, "success_rate": f"{ok / args.trials:.4f}"})
        emit("bench-peel", delta=delta, successes=ok, trials=args.trials)


def cmd_bench_scaling(args, emit):
    writer = csv.DictWriter(sys.stdout, fieldnames=SCALING_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in scaling_rows(args.n, args.beta, args.delta, args.tau, args.seed,
                            block_width=args.block_size):
        writer.writerow(row)
    emit("bench-scaling", rows=len(args.n) * len(args.beta))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dastore", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--log", choices=["none", "jsonl"], default="none",
                        help="emit one JSON event per operation on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_dir(p):
        p.add_argument("--dir", required=True, help="store directory")
        return p

    p = with_dir(sub.add_parser("init", help="generate a synthetic corpus and run setup"))
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--delta", type=int, required=True)
    p.add_argument("--beta", type=int, required=True)
    p.add_argument("--tau", type=int, default=512)
    p.add_argument("--block-size", type=int, default=256)
    p.add_argument("--key-size", type=int, default=16)
    p.add_argument("--q", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_init)

    p = with_dir(sub.add_parser("put", help="store a new block"))
    p.add_argument("--key", required=True)
    p.add_argument("--block-file", required=True)
    p.set_defaults(func=cmd_put)

    p = with_dir(sub.add_parser("get", help="fetch a block (self-heals if damaged)"))
    p.add_argument("--key", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_get)

    p = with_dir(sub.add_parser("delete", help="delete a block"))
    p.add_argument("--key", required=True)
    p.set_defaults(func=cmd_delete)

    p = with_dir(sub.add_parser("corrupt", help="apply a fault plan to the block store"))
    p.add_argument("--plan", required=True)
    p.set_defaults(func=cmd_corrupt)

    p = with_dir(sub.add_parser("audit", help="client audit of chosen keys"))
    p.add_argument("--keys", required=True, help="comma-separated hex keys")
    p.set_defaults(func=cmd_audit)

    p = with_dir(sub.add_parser("server-audit", help="server self-audit"))
    p.add_argument("--keys", help="comma-separated hex keys")
    p.set_defaults(func=cmd_server_audit)

    p = with_dir(sub.add_parser("challenge", help="accountability challenge over the whole store"))
    p.set_defaults(func=cmd_challenge)
    p = with_dir(sub.add_parser("verify", help="scan the store for corrupted or missing records"))
    p.set_defaults(func=cmd_verify)
    p = with_dir(sub.add_parser("restore", help="server audit, then repair the store"))
    p.set_defaults(func=cmd_restore)
    p = with_dir(sub.add_parser("stats", help="sizes of server metadata and client state"))
    p.set_defaults(func=cmd_stats)

    bench = sub.add_parser("bench", help="experiment tables as CSV").add_subparsers(
        dest="bench", required=True)
    p = bench.add_parser("peel", help="peel success rates",
                         description="CSV columns: " + ",".join(PEEL_COLUMNS))
    p.add_argument("--delta-list", type=_int_list, default=[10, 30, 50])
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--q", type=int, default=4)
    p.add_argument("--tau", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench_peel)
    p = bench.add_parser("scaling", help="space and proof-size scaling",
                         description="CSV columns: " + ",".join(SCALING_COLUMNS))
    p.add_argument("--n", type=_int_list, default=[1000, 10000])
    p.add_argument("--beta", type=_int_list, default=[32, 64, 256])
    p.add_argument("--delta", type=int, default=16)
    p.add_argument("--tau", type=int, default=128)
    p.add_argument("--block-size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench_scaling)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    def emit(op, status="ok", **fields):
        if args.log == "jsonl":
            event = {"ts": round(time.time(), 3), "op": op, "status": status, **fields}
            print(json.dumps(event, sort_keys=True), file=sys.stderr)

    try:
        args.func(args, emit)
    except argparse.ArgumentTypeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        emit(args.command, "usage", error=str(exc))
        return EXIT_USAGE
    except (ProtocolFailure, RecoveryFailure) as exc:
        print(f"failure: {exc}", file=sys.stderr)
        emit(args.command, "failure", error=str(exc))
        return EXIT_FAILURE
    except (StoreIOError, MalformedBytes, OSError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        emit(args.command, "io", error=str(exc))
        return EXIT_IO
    except DASError as exc:
        print(f"error: {exc}", file=sys.stderr)
        emit(args.command, "usage", error=str(exc))
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
