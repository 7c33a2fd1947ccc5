"""Light-cone heatmap data: measured cone norms and optimised bounds over (r, t).

Output is a long-format CSV (one row per cell) with the kappa- and v-cone
positions attached, ready for any plotting tool.
Usage: python3 scripts/lightcone_heatmap.py [config] [out.csv]
"""
import csv
import sys
from pathlib import Path

from massmat import harness
from massmat.config import load_config


def main(config="lightcone.cfg", out="results/lightcone_heatmap.csv"):
    cfg = load_config(config)
    grid = harness.lightcone_grid(cfg)
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(harness.LIGHTCONE_COLUMNS)
        w.writerows(grid.rows)
    nontrivial = int((grid.bound < 1).sum())
    print(f"{grid.measured.size} cells, {grid.violations} violations, {nontrivial} with a nontrivial bound -> {out}")


if __name__ == "__main__":
    main(*sys.argv[1:])
