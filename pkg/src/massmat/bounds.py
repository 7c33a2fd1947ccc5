"""Evaluation of the light-cone bound and its physical-units instance.

Every reported bound goes through :func:`log_norm_bound`, so CSV columns
written by different parts of the toolkit agree bit for bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

from .hamiltonian import BoundParams, HoppingMatrix, kappa, velocity_v

__all__ = [
    "BoundEvaluation",
    "log_norm_bound",
    "massmat_bound",
    "PhysicalBound",
    "physical_units_bound",
    "VelocityRow",
    "velocity_comparison",
]


def log_norm_bound(a: float, v: float, alpha: float, beta: float, d_XY: float, N: int, t: float) -> float:
    """-a N ((beta - alpha) d_XY - v |t|), the log of the unclamped norm bound."""
    return -a * N * ((beta - alpha) * d_XY - v * abs(t))


@dataclass(frozen=True)
class BoundEvaluation:
    exponent: float

    @property
    def raw_norm_bound(self) -> float:
        return _exp(self.exponent)

    @property
    def raw_probability_bound(self) -> float:
        return _exp(2.0 * self.exponent)

    @property
    def norm_bound(self) -> float:
        return min(1.0, self.raw_norm_bound)

    @property
    def probability_bound(self) -> float:
        return min(1.0, self.raw_probability_bound)

    @property
    def nontrivial(self) -> bool:
        return self.exponent < 0


def _exp(x: float) -> float:
    return math.exp(x) if x < 709.0 else math.inf


def massmat_bound(params: BoundParams, t: float) -> BoundEvaluation:
    return BoundEvaluation(log_norm_bound(params.a, params.v, params.alpha, params.beta,
                                          params.d_XY, params.N, t))


@dataclass(frozen=True)
class PhysicalBound:
    exponent: float
    probability: float
    """e^{exponent}, the figure quoted for the cold-atom example."""
    squared: float
    """e^{2 exponent}, the sharper probability bound obtained by squaring the norm bound."""
    mode: str


def physical_units_bound(N: int, J_over_hbar: float, r0: float, D: int, beta_minus_alpha: float,
                         ell: float, t: float, mode: str = "replica") -> PhysicalBound:
    """Bound for nearest-neighbour hopping in SI units with a = 1/r0 and d = ell r0.

    With a = 1/r0 the time term a v t equals 2D sinh(1) (J/hbar) t.  ``mode="exact"``
    uses that value; ``mode="replica"`` rounds the coefficient 2D sinh(1) up
    to 3D, reproducing exp(-N(ell/3 - 3 J t / hbar)) for D = 1 and
    beta - alpha = 1/3.
    """
    if min(N, J_over_hbar, r0, D, beta_minus_alpha, ell) <= 0 or t < 0:
        raise ValueError("physical inputs must be positive (t nonnegative)")
    if mode == "replica":
        coeff = 3.0 * D
    elif mode == "exact":
        coeff = 2.0 * D * math.sinh(1.0)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    a = 1.0 / r0
    v = coeff * J_over_hbar * r0
    params = BoundParams(a=a, v=v, kappa=2.0 * D * J_over_hbar * r0, alpha=0.0, beta=beta_minus_alpha,
                         d_XY=ell * r0, N=N)
    ev = massmat_bound(params, t)
    return PhysicalBound(ev.exponent, ev.raw_norm_bound, ev.raw_probability_bound, mode)


class VelocityRow(NamedTuple):
    a: float
    v: float
    kappa: float
    slope: float
    """Macroscopic cone slope v / (beta - alpha)."""


def velocity_comparison(J: HoppingMatrix, coords, a_grid: Sequence[float],
                        beta_minus_alpha: float = 1.0) -> list[VelocityRow]:
    """v(a) against the first moment kappa on a grid of decay rates."""
    k = kappa(J, coords)
    rows = []
    for a in a_grid:
        if a <= 0:
            raise ValueError("a-grid must be positive")
        v = velocity_v(J, coords, a)
        rows.append(VelocityRow(float(a), v, k, v / beta_minus_alpha))
    return rows
