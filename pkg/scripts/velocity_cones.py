"""kappa-cone against v(a)-cones for nearest-neighbour and exponentially decaying hopping.

Usage: python3 scripts/velocity_cones.py
"""
import numpy as np

from massmat.bounds import velocity_comparison
from massmat.geometry import LatticeGraph
from massmat.hamiltonian import exponential_decay, nearest_neighbor


def main():
    lat = LatticeGraph.chain(40)
    for name, J, grid in (("nearest-neighbor", nearest_neighbor(lat), np.linspace(0.05, 2.0, 8)),
                          ("exponential gamma=2", exponential_decay(lat, 1.0, 2.0), np.linspace(0.05, 1.9, 8))):
        print(name)
        print("a\tv(a)\tkappa\tv/kappa")
        for row in velocity_comparison(J, lat, grid):
            print(f"{row.a:.3f}\t{row.v:.5f}\t{row.kappa:.5f}\t{row.v / row.kappa:.4f}")


if __name__ == "__main__":
    main()
