"""Population-vs-time data for every (loss well, chi) pair, with reference curves.

Each CSV has the columns documented for ``twbh simulate``: ensemble
populations with errors, exact chi=0 values and the noise-free mean field.
"""

import argparse
from pathlib import Path

from twbh import cli
from twbh.experiment import builtin_spec, ensemble


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trajectories", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=20240501)
    ap.add_argument("--out", default="runs")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    for damp in (3, 2, 1):
        for chi in (1e-3, 1e-2):
            spec = builtin_spec(damp, chi, args.trajectories, args.seed, Path(args.out), workers=args.workers)
            acc = ensemble(spec)
            path = spec.out_dir / "populations.csv"
            path.write_text(cli.population_table(acc))
            print(path)


if __name__ == "__main__":
    main()
