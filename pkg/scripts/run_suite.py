"""Run every bundled sweep through the CLI and aggregate the verdicts."""

import argparse
import sys
import time
from pathlib import Path

from stablelld.cli import run

SUITE = [("sweep", "pareto_a05"), ("sweep", "asym_a15"), ("sweep", "sym_a2"),
         ("sweep", "plane_a075"), ("lattice-sweep", "lattice_a15"),
         ("lattice-sweep", "mixed_a15"), ("dyn-sweep", "gauss_z2"), ("dyn-sweep", "afu_z2"),
         ("eigencurve", "gauss_a05_curve"), ("eigencurve", "gauss_a15")]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/suite")
    ap.add_argument("--threads", default="1")
    ap.add_argument("--budget-scale", default="1.0")
    ap.add_argument("--only", nargs="*", help="config names to run")
    args = ap.parse_args()
    worst = 0
    for cmd, name in SUITE:
        if args.only and name not in args.only:
            continue
        t0 = time.perf_counter()
        code = run([cmd, "--config", name, "--out", str(Path(args.out) / name),
                    "--threads", args.threads, "--budget-scale", args.budget_scale])
        print(f"{name}: exit {code} in {time.perf_counter() - t0:.0f}s", flush=True)
        worst = max(worst, code)
    for sub in sorted(Path(args.out).iterdir()):
        if any(sub.glob("*sweep.csv")):
            run(["report", "--out", str(sub)])
    sys.exit(worst)


if __name__ == "__main__":
    main()
