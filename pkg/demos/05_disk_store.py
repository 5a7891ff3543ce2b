"""
On-disk store, fault plans and the command line
===============================================

"""
import subprocess
import sys
import tempfile
from pathlib import Path

root = Path(tempfile.mkdtemp()) / "store"


def dastore(*args):
    cmd = [sys.executable, "-m", "dastore.cli", *map(str, args)]
    out = subprocess.run(cmd, capture_output=True, text=True)
    print("$ dastore", " ".join(map(str, args)), f"  [exit {out.returncode}]")
    print(out.stdout.rstrip()[:600])
    return out


dastore("init", "--n", 300, "--delta", 16, "--beta", 16, "--tau", 128, "--block-size", 64,
        "--seed", 5, "--dir", root)
dastore("verify", "--dir", root)

# fault plans are plain text: seed first, then one action per line
plan = root.parent / "plan.txt"
plan.write_text("seed=42\nkey=random:3 mode=flip:4\nkey=index:10 mode=drop\nkey=index:20 mode=truncate\n")
dastore("corrupt", "--dir", root, "--plan", plan)
dastore("verify", "--dir", root)

# recovered blocks land in <dir>/recovered/<key>.blk
dastore("challenge", "--dir", root)
print("recovered files:", len(list((root / "recovered").iterdir())))

dastore("restore", "--dir", root)
dastore("stats", "--dir", root)
