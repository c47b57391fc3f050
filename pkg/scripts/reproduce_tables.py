"""Regenerate the five convergence/error tables and print them.

    python scripts/reproduce_tables.py --scale quick   # eps down to 2^-10, N up to 64, a few minutes
    python scripts/reproduce_tables.py --scale full    # eps down to 2^-20, N up to 512, hours

Tables land in ``--out`` as ``table{k}.csv`` (4 decimals) plus ``table{k}.full.csv``.
"""

import argparse
import sys
from pathlib import Path

from hemker.cli import main

SCALES = {
    # (eps max exponent, n_list, reference N for the error table)
    "quick": (10, "8,16,32,64", 256),
    "full": (20, "8,16,32,64,128,256,512", 2048),
}


def run(scale: str, tables, out: Path, threads: int) -> int:
    emax, n_list, n_ref = SCALES[scale]
    argv = ["--eps-max-exponent", str(emax), "--n-list", n_list, "--n-ref", str(n_ref),
            "--out", str(out), "--threads", str(threads)]
    for t in tables:
        argv += ["--table", str(t)]
    rc = main(argv)
    for t in tables:
        path = out / f"table{t}.csv"
        if path.exists():
            print(f"\n== table {t} ==")
            print(path.read_text().rstrip())
    return rc


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scale", choices=sorted(SCALES), default="quick")
    ap.add_argument("--tables", default="1,2,3,4,5", help="comma separated subset of 1..5")
    ap.add_argument("--out", type=Path, default=Path("out/tables"))
    ap.add_argument("--threads", type=int, default=1)
    a = ap.parse_args()
    sys.exit(run(a.scale, [int(t) for t in a.tables.split(",")], a.out, a.threads))
