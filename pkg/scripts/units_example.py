"""The cold-atom units example and its dependence on N and on the rounding of sinh(1).

Usage: python3 scripts/units_example.py
"""
from massmat.bounds import physical_units_bound

J_OVER_HBAR, R0, ELL = 500.0, 500e-9, 6.0
T = (1 / 3) / J_OVER_HBAR


def main():
    print("N\tmode\texponent\tnorm bound\tsquared")
    for N in (1, 6, 18, 50):
        for mode in ("replica", "exact"):
            pb = physical_units_bound(N, J_OVER_HBAR, R0, 1, 1 / 3, ELL, T, mode)
            print(f"{N}\t{mode}\t{pb.exponent:.4f}\t{pb.probability:.3e}\t{pb.squared:.3e}")


if __name__ == "__main__":
    main()
