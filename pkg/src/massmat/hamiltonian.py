"""Hopping matrices, velocities and sparse many-body Hamiltonians.

The model is ``H = sum_xy J_xy a_x^dagger a_y + V({n_x})`` restricted to a
fixed-N sector, with J Hermitian and V any real function of the occupations.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import sparse
from scipy.spatial.distance import cdist

from .fock import FockBasis, one_body_lift
from .geometry import LatticeGraph

__all__ = [
    "InvalidModelError",
    "NoSupersonicSeparationError",
    "HoppingMatrix",
    "nearest_neighbor",
    "exponential_decay",
    "custom_hopping",
    "PotentialSpec",
    "BoundParams",
    "velocity_v",
    "kappa",
    "assemble",
    "OptimalA",
    "optimal_a",
    "Piece",
    "assemble_schedule",
    "schedule_velocity",
]


class InvalidModelError(ValueError):
    pass


class NoSupersonicSeparationError(ValueError):
    """(beta - alpha) d <= 2 D J |t|: the point lies inside the light cone."""


def _coords(c) -> np.ndarray:
    if isinstance(c, LatticeGraph):
        return c.coords
    c = np.asarray(c, dtype=float)
    return c[:, None] if c.ndim == 1 else c


@dataclass(frozen=True)
class HoppingMatrix:
    """Dense L x L hopping matrix with the family it was generated from."""

    entries: np.ndarray
    family: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        J = np.array(self.entries, dtype=complex)
        if J.ndim != 2 or J.shape[0] != J.shape[1]:
            raise InvalidModelError("hopping matrix must be square")
        if np.all(J.imag == 0):
            J = J.real
        J.setflags(write=False)
        object.__setattr__(self, "entries", J)

    @property
    def L(self) -> int:
        return self.entries.shape[0]

    def is_hermitian(self, atol: float = 0.0) -> bool:
        return bool(np.max(np.abs(self.entries - self.entries.conj().T), initial=0.0) <= atol)

    def is_real(self) -> bool:
        return not np.iscomplexobj(self.entries)


def nearest_neighbor(lattice: LatticeGraph, J: float = 1.0) -> HoppingMatrix:
    """J_xy = J on every lattice edge (sites at unit distance)."""
    if lattice.edges is None:
        lattice = LatticeGraph.from_coords(lattice.coords)
    M = np.zeros((lattice.L, lattice.L))
    for i, j in lattice.edges:
        M[i, j] = M[j, i] = J
    return HoppingMatrix(M, "nearest-neighbor", {"J": J})


def exponential_decay(lattice: LatticeGraph, J: float, gamma: float) -> HoppingMatrix:
    """All-to-all hopping J exp(-gamma |x - y|) for x != y."""
    if gamma <= 0:
        raise InvalidModelError("decay rate gamma must be positive")
    r = lattice.distances()
    M = J * np.exp(-gamma * r)
    np.fill_diagonal(M, 0.0)
    return HoppingMatrix(M, "exponential-decay", {"J": J, "gamma": gamma})


def custom_hopping(matrix) -> HoppingMatrix:
    return HoppingMatrix(matrix, "custom")


def velocity_v(J: HoppingMatrix, coords, a: float) -> float:
    """Short-range velocity ``max_x sum_y |J_xy| sinh(a |x - y|) / a``.

    For the exponential-decay family the rate must satisfy a < gamma.
    """
    if a <= 0:
        raise ValueError("a must be positive")
    if J.family == "exponential-decay" and a >= J.params["gamma"]:
        raise InvalidModelError(f"a = {a} must be below the hopping decay rate {J.params['gamma']}")
    r = cdist(_coords(coords), _coords(coords))
    return float(np.max(np.sum(np.abs(J.entries) * np.sinh(a * r), axis=1)) / a)


def kappa(J: HoppingMatrix, coords) -> float:
    """First moment ``max_x sum_y |J_xy| |x - y|`` of the hopping matrix."""
    r = cdist(_coords(coords), _coords(coords))
    return float(np.max(np.sum(np.abs(J.entries) * r, axis=1)))


@dataclass(frozen=True)
class PotentialSpec:
    """Density-density interaction V({n_x}).

    ``kind`` is ``zero``, ``bose-hubbard`` (sum_x U n_x (n_x - 1) - mu n_x)
    or ``custom`` (``func`` maps an (M, L) occupation array to M reals).
    Optional per-site ``fields`` add sum_x fields[x] n_x to any kind.
    """

    kind: str = "zero"
    U: float = 0.0
    mu: float = 0.0
    fields: Sequence[float] | None = None
    func: Callable[[np.ndarray], np.ndarray] | None = None

    @classmethod
    def bose_hubbard(cls, U: float, mu: float = 0.0, fields=None) -> "PotentialSpec":
        return cls("bose-hubbard", U, mu, fields)

    def evaluate(self, states: np.ndarray) -> np.ndarray:
        n = np.asarray(states, dtype=float)
        if self.kind == "zero":
            out = np.zeros(n.shape[0])
        elif self.kind == "bose-hubbard":
            out = np.sum(self.U * n * (n - 1.0) - self.mu * n, axis=1)
        elif self.kind == "custom":
            if self.func is None:
                raise InvalidModelError("custom potential needs a callback")
            out = np.asarray(self.func(n), dtype=complex)
            if out.shape != (n.shape[0],) or np.any(out.imag != 0):
                raise InvalidModelError("potential must return one real value per state")
            out = out.real
        else:
            raise InvalidModelError(f"unknown potential kind {self.kind!r}")
        if self.fields is not None:
            out = out + n @ np.asarray(self.fields, dtype=float)
        return out


def assemble(basis: FockBasis, J: HoppingMatrix, V: PotentialSpec | None = None) -> sparse.csr_matrix:
    """Sparse matrix of dGamma(J) + V on the sector.

    Raises InvalidModelError for a non-Hermitian J or a size mismatch.
    """
    if J.L != basis.L:
        raise InvalidModelError(f"hopping matrix is {J.L}x{J.L} but basis has {basis.L} sites")
    if not J.is_hermitian():
        raise InvalidModelError("hopping matrix is not Hermitian")
    H = one_body_lift(basis, J.entries)
    if V is not None:
        H = H + sparse.diags(V.evaluate(basis.states))
    H = sparse.csr_matrix(H)
    # Diagonal of dGamma(J) may carry a zero imaginary part; drop it.
    if np.iscomplexobj(H.data) and np.all(H.data.imag == 0):
        H = H.real.tocsr()
    H.sum_duplicates()
    return H


@dataclass(frozen=True)
class BoundParams:
    """Parameters of the light-cone bound exp(-a N ((beta - alpha) d - v |t|))."""

    a: float
    v: float
    kappa: float
    alpha: float
    beta: float
    d_XY: float
    N: int

    def __post_init__(self):
        if not 0.0 <= self.alpha < self.beta <= 1.0:
            raise ValueError(f"need 0 <= alpha < beta <= 1, got alpha={self.alpha}, beta={self.beta}")
        if self.a <= 0:
            raise ValueError("a must be positive")
        if self.kappa > self.v * (1 + 1e-12):
            raise ValueError(f"kappa = {self.kappa} exceeds v = {self.v}")
        if self.d_XY < 0 or self.N < 0:
            raise ValueError("d_XY and N must be nonnegative")

    @classmethod
    def from_model(cls, J: HoppingMatrix, coords, a, alpha, beta, d_XY, N) -> "BoundParams":
        return cls(a, velocity_v(J, coords, a), kappa(J, coords), alpha, beta, d_XY, N)


@dataclass(frozen=True)
class OptimalA:
    a_star: float
    exponent: float
    """Log of the optimised norm bound, -N max_a a((beta-alpha)d - v(a)|t|)."""
    asymptotic_log: float
    """Log of (|t| / ((beta-alpha) d))^(N (beta-alpha) d); shape only, no constants."""


def optimal_a(J: float, D: int, beta_minus_alpha: float, d: float, t: float, N: int = 1) -> OptimalA:
    """Decay rate a maximising a((beta-alpha) d) - 2DJ|t| sinh(a) for nearest-neighbour hopping.

    With v(a) = 2DJ sinh(a)/a the stationarity condition is
    (beta-alpha) d = 2DJ|t| cosh(a), hence a* = arccosh((beta-alpha) d / (2DJ|t|)).
    """
    if t == 0:
        raise NoSupersonicSeparationError("t = 0: the bound holds for every a, no optimum")
    spatial = beta_minus_alpha * d
    arg = spatial / (2 * D * J * abs(t))
    if not arg > 1.0:
        raise NoSupersonicSeparationError(
            f"(beta-alpha) d / (2DJ|t|) = {arg:.6g} <= 1: inside the light cone")
    a_star = float(np.arccosh(arg))
    gain = a_star * spatial - 2 * D * J * abs(t) * np.sinh(a_star)
    asym = N * spatial * np.log(abs(t) / spatial)
    return OptimalA(a_star, float(-N * gain), float(asym))


@dataclass(frozen=True)
class Piece:
    """One constant segment of a piecewise-constant schedule."""

    duration: float
    J: HoppingMatrix
    V: PotentialSpec | None = None


def assemble_schedule(basis: FockBasis, schedule: Sequence[Piece]):
    """List of (duration, H) for each piece; each piece is checked like ``assemble``."""
    for p in schedule:
        if p.duration < 0:
            raise InvalidModelError("schedule durations must be nonnegative")
    return [(p.duration, assemble(basis, p.J, p.V)) for p in schedule]


def schedule_velocity(schedule: Sequence[Piece], coords, a: float) -> float:
    """Uniform velocity of a schedule: the largest v over its pieces."""
    vs = []
    for p in schedule:
        if not p.J.is_hermitian():
            raise InvalidModelError("schedule piece has a non-Hermitian hopping matrix")
        vs.append(velocity_v(p.J, coords, a))
    return max(vs, default=0.0)
