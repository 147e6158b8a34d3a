"""EPR steering against the common quadrature angle for the asymmetric-steering plots."""

import argparse
from pathlib import Path

from twbh import cli
from twbh.experiment import builtin_spec, ensemble, resolve_y_offset

SCANS = {
    (3, 1e-2): ["12", "13", "23"],
    (1, 1e-3): ["21", "23"],
    (1, 1e-2): ["21", "23"],
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trajectories", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=20240501)
    ap.add_argument("--out", default="runs")
    ap.add_argument("--step", type=float, default=1.0)
    ap.add_argument("--y-offset", default="standard")
    args = ap.parse_args()
    yo = resolve_y_offset(args.y_offset)
    for (damp, chi), pairs in SCANS.items():
        spec = builtin_spec(damp, chi, args.trajectories, args.seed, Path(args.out))
        acc = ensemble(spec)
        for i, j in pairs:
            names = [f"EPR{i}{j}", f"EPR{j}{i}"]
            path = spec.out_dir / f"scan-{'-'.join(names)}-{args.y_offset}.csv"
            path.write_text(cli.cmd_scan_angle(acc, spec.times[0], names, args.step, yo))
            print(path)


if __name__ == "__main__":
    main()
