#!/usr/bin/env python3
"""Run the three desk experiments end to end and summarize the verdicts.

Each config goes through the full pipeline (pilot, bounds, controlled run,
verdict); artifacts land under --out.  Exits nonzero if any verdict fails.
"""

import argparse
import json
import os
import sys

from pfsmc.cli import main as pfsmc

HERE = os.path.dirname(os.path.abspath(__file__))
CONFIG_DIR = os.path.join(HERE, "..", "configs")
DESKS = ("desk_a", "desk_b", "desk_c")


def newest_run_dir(root, prefix):
    dirs = [d for d in os.listdir(root) if d.startswith(prefix)]
    dirs.sort(key=lambda d: os.path.getmtime(os.path.join(root, d)))
    return os.path.join(root, dirs[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs", help="output root (default: runs)")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    rows = []
    worst = 0
    for name in DESKS:
        cfg = os.path.join(CONFIG_DIR, f"{name}.toml")
        rc = pfsmc(["verify", cfg, "--out", args.out])
        worst = max(worst, rc)
        run_dir = newest_run_dir(args.out, name.replace("_", "-"))
        with open(os.path.join(run_dir, "verdict.json")) as fh:
            v = json.load(fh)
        with open(os.path.join(run_dir, "bounds.json")) as fh:
            b = json.load(fh)
        rows.append((name, v["passed"], v["label"], v["t_star_emp"],
                     v["t_star_pred"], b["rho"], b["rho_star"]))

    print()
    print(f"{'run':8} {'passed':7} {'label':12} {'t_emp':>8} {'t_pred':>8} "
          f"{'rho':>8} {'rho*':>8}")
    for name, passed, label, t_emp, t_pred, rho, rho_star in rows:
        t_emp = "-" if t_emp is None else f"{t_emp:.4g}"
        print(f"{name:8} {str(passed):7} {label:12} {t_emp:>8} "
              f"{t_pred:8.4g} {rho:8.4g} {rho_star:8.4g}")
    return worst


if __name__ == "__main__":
    sys.exit(main())
