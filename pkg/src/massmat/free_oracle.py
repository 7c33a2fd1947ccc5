"""Closed-form transport probabilities for non-interacting bosons on a chain.

For ``psi_0 = a^dagger(f)^N |0>`` the particles stay independent, so the
number of them found on the tail ``{r, ..., L-1}`` is binomial with the
one-body tail weight ``p``.  Sites are 0-based throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg

from .fock import FockBasis, threshold_count

__all__ = [
    "OneBodyChain",
    "one_body_propagator",
    "one_body_amplitude",
    "tail_weight",
    "cluster_probability",
    "binomial_envelope",
    "FreeMassmatReport",
    "free_massmat_check",
    "product_state",
]


@dataclass(frozen=True)
class OneBodyChain:
    """Tridiagonal one-body Hamiltonian: hopping on the bonds, real on-site fields."""

    L: int
    hopping: float = 1.0
    fields: Sequence[float] | None = None

    def matrix(self) -> np.ndarray:
        M = np.zeros((self.L, self.L))
        idx = np.arange(self.L - 1)
        M[idx, idx + 1] = M[idx + 1, idx] = self.hopping
        if self.fields is not None:
            v = np.asarray(self.fields, dtype=float)
            if v.shape != (self.L,):
                raise ValueError("one on-site field per site is required")
            M[np.arange(self.L), np.arange(self.L)] = v
        return M


def one_body_propagator(chain: OneBodyChain, t: float) -> np.ndarray:
    if t == 0:
        return np.eye(chain.L, dtype=complex)
    w, Q = linalg.eigh(chain.matrix())
    return (Q * np.exp(-1j * t * w)) @ Q.conj().T


def _normalised(f, L):
    f = np.asarray(f, dtype=complex)
    if f.shape != (L,) or abs(np.linalg.norm(f) - 1.0) > 1e-12:
        raise ValueError("one-body wavefunction must be a normalised length-L vector")
    return f


def one_body_amplitude(chain: OneBodyChain, f, x: int, t: float) -> complex:
    """Component x of exp(-it h) f (h the one-body matrix)."""
    f = _normalised(f, chain.L)
    return complex((one_body_propagator(chain, t) @ f)[x])


def tail_weight(chain: OneBodyChain, f, r: int, t: float) -> float:
    """p = sum_{x >= r} |(exp(-it h) f)_x|^2."""
    f = _normalised(f, chain.L)
    u = one_body_propagator(chain, t) @ f
    return float(np.sum(np.abs(u[r:]) ** 2))


def _binomial_tail(p: float, N: int, k: int) -> float:
    p = min(max(p, 0.0), 1.0)
    return float(sum(math.comb(N, n) * p ** n * (1 - p) ** (N - n) for n in range(k, N + 1)))


def cluster_probability(chain: OneBodyChain, f, r: int, theta: float, N: int, t: float) -> float:
    """Probability that at least ceil(theta N) of N free bosons sit on sites >= r at time t."""
    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    return _binomial_tail(tail_weight(chain, f, r, t), N, threshold_count(theta, N))


def binomial_envelope(p: float, theta: float, N: int) -> float:
    """2^N p^ceil(theta N), the intermediate upper bound on the binomial tail."""
    return 2.0 ** N * p ** threshold_count(theta, N)


def product_state(basis: FockBasis, f) -> np.ndarray:
    """Normalised a^dagger(f)^N |0> expanded in a bosonic occupation basis."""
    if basis.statistics != "boson":
        raise ValueError("product states are bosonic")
    f = _normalised(f, basis.L)
    n = basis.states
    # <n| a^dagger(f)^N |0> / sqrt(N!) = sqrt(N! / prod n_x!) prod f_x^n_x
    logfact = np.array([math.lgamma(k + 1) for k in range(basis.N + 1)])
    mult = np.exp(0.5 * (logfact[basis.N] - logfact[n].sum(axis=1)))
    with np.errstate(divide="ignore", invalid="ignore"):
        amp = np.prod(np.where(n > 0, f[None, :] ** n, 1.0), axis=1)
    return mult * amp


@dataclass
class FreeMassmatReport:
    N: int
    theta: float
    r: np.ndarray
    t: np.ndarray
    probability: np.ndarray
    """Grid of cluster probabilities, shape (len(r), len(t))."""
    C: float
    v_prime: float
    exhibited_bound: np.ndarray
    dominates: bool
    envelope_ok: bool
    """Binomial sum <= 2^N p^ceil(theta N) at every grid point."""
    rows: list = field(default_factory=list)


def free_massmat_check(chain: OneBodyChain, theta: float, N: int, r_grid, t_grid, f=None,
                       C: float | None = None, v_prime: float | None = None) -> FreeMassmatReport:
    """Exhibit constants (C, v') with P(r, t) <= exp(ceil(theta N) C (v' t - r)) on a grid.

    Without explicit constants, C is the negative slope in r of a least-squares
    fit of log P / ceil(theta N) against (t, r), and v' the smallest velocity
    for which that C dominates every grid point.  Grid points must have
    t >= 1 and r >= 1.
    """
    r_grid = np.asarray(r_grid, dtype=int)
    t_grid = np.asarray(t_grid, dtype=float)
    if r_grid.size == 0 or t_grid.size == 0:
        raise ValueError("empty grid")
    if r_grid.min() < 1 or t_grid.min() < 1:
        raise ValueError("grid must satisfy r >= 1 and t >= 1")
    f = np.eye(chain.L)[0] if f is None else f
    k = threshold_count(theta, N)
    P = np.zeros((len(r_grid), len(t_grid)))
    env_ok = True
    for j, t in enumerate(t_grid):
        U = one_body_propagator(chain, t) @ _normalised(f, chain.L)
        w = np.abs(U) ** 2
        for i, r in enumerate(r_grid):
            p = float(w[r:].sum())
            P[i, j] = _binomial_tail(p, N, k)
            env_ok &= P[i, j] <= binomial_envelope(p, theta, N) * (1 + 1e-12) + 1e-300
    with np.errstate(divide="ignore"):
        logP = np.log(P) / k
    R, T = np.meshgrid(r_grid, t_grid, indexing="ij")
    finite = np.isfinite(logP)
    if C is None:
        C = 1.0
        if finite.sum() >= 3:
            A = np.column_stack([np.ones(finite.sum()), T[finite], R[finite]])
            coef = np.linalg.lstsq(A, logP[finite], rcond=None)[0]
            if coef[2] < 0:
                C = float(-coef[2])
    if v_prime is None:
        v_prime = float(np.max(np.where(finite, (logP / C + R) / T, -np.inf)))
        v_prime = max(v_prime, 0.0)
    bound = np.exp(k * C * (v_prime * T - R))
    dominates = bool(np.all(P <= bound * (1 + 1e-9)))
    rows = [(int(R[i, j]), float(T[i, j]), N, theta, float(P[i, j]), float(bound[i, j]))
            for i in range(len(r_grid)) for j in range(len(t_grid))]
    return FreeMassmatReport(N, theta, r_grid, t_grid, P, float(C), float(v_prime), bound, dominates,
                             bool(env_ok), rows)
