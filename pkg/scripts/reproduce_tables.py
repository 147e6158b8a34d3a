"""Rerun every reference correlation table and write one comparison CSV.

    python scripts/reproduce_tables.py --trajectories 100000 --out runs
    python scripts/reproduce_tables.py --y-offset legacy   # legacy Y convention
"""

import argparse
from pathlib import Path

from twbh import cli
from twbh.experiment import resolve_y_offset
from twbh.reference import table_ids


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--trajectories", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=20240501)
    ap.add_argument("--out", default="runs")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--y-offset", default="standard")
    args = ap.parse_args()
    yo = resolve_y_offset(args.y_offset)
    rows = []
    for tid in table_ids():
        rows += cli.cmd_reproduce(tid, args.trajectories, args.seed, Path(args.out), args.workers, yo)
    out = Path(args.out) / f"tables-{args.y_offset}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(cli.rows_csv(rows))
    for r in rows:
        if r["criterion"] != "no steady state":
            print(f"{r['table']:18s} chi={r['chi']:<6g} {r['criterion']:7s} {r['reference']:>9s} {r['computed']:>9s} "
                  f"z={r['z']:+6.1f}")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
