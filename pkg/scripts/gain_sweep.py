#!/usr/bin/env python3
"""Sweep the feedback gain as multiples of the estimated threshold and fit
the reaching-time law t_star_emp ~ (rho - rho*)^p.  Expect p near -1."""

import argparse
import json
import os
import sys

from pfsmc.cli import main as pfsmc

HERE = os.path.dirname(os.path.abspath(__file__))
DEFAULT_CFG = os.path.join(HERE, "..", "configs", "sweep_b.toml")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=DEFAULT_CFG)
    ap.add_argument("--out", default="runs")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    rc = pfsmc(["sweep", args.config, "--out", args.out, "--jobs", str(args.jobs)])
    if rc != 0:
        return rc

    sweep_dirs = sorted(
        (d for d in os.listdir(args.out) if "-sweep-" in d),
        key=lambda d: os.path.getmtime(os.path.join(args.out, d)))
    with open(os.path.join(args.out, sweep_dirs[-1], "sweep.json")) as fh:
        data = json.load(fh)

    print()
    print(f"law: {data['law']}")
    print(f"fitted exponent: {data['fitted_exponent']:.4g}")
    bad = [r for r in data["rows"] if r["passed"] is not True]
    if bad:
        print(f"{len(bad)} point(s) did not pass", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
