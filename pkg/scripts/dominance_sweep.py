"""Bound dominance on an 8-site Bose-Hubbard chain for several (alpha, beta) thresholds.

Writes one transport CSV per threshold pair and prints the largest
measured/bound ratio.  Usage: python3 scripts/dominance_sweep.py [out_dir]
"""
import csv
import sys
from pathlib import Path

from massmat import harness
from massmat.config import load_config

THRESHOLDS = [(0.0, 0.5), (0.25, 0.75), (0.0, 1.0)]


def main(out="results/dominance"):
    base = load_config("bose_hubbard_chain.cfg")
    worst = 0.0
    for alpha, beta in THRESHOLDS:
        base.regions.alpha, base.regions.beta = alpha, beta
        base.run.id = f"bh_chain:alpha={alpha:g}:beta={beta:g}"
        res = harness.run(base, Path(out) / f"alpha{alpha:g}_beta{beta:g}")
        with open(res.artifacts["transport"]) as fh:
            ratios = [float(r["measured_norm"]) / float(r["bound"]) for r in csv.DictReader(fh)]
        worst = max(worst, max(ratios))
        print(f"alpha={alpha:g} beta={beta:g}: status {res.status}, max measured/bound {max(ratios):.4f}")
    print(f"overall max measured/bound {worst:.4f}")


if __name__ == "__main__":
    main(*sys.argv[1:])
