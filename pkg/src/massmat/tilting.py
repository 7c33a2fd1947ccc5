"""Geometric exponential tilting and numerical checks of its three estimates.

The tilting operator is diagonal in the occupation basis,
``T = exp(mu sum_x f(s(x)/d) n_x)`` with ``mu = a d / 2``.  Everything is kept
in the log domain until the very end because ``mu N`` easily exceeds the
floating-point range of ``exp``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg, sparse
from scipy.spatial.distance import cdist

from .evolution import DENSE_LIMIT
from .fock import FockBasis, one_body_lift, threshold_projector
from .geometry import LatticeGraph, SeparationProfile
from .hamiltonian import HoppingMatrix

__all__ = [
    "TiltingOverflowError",
    "TiltingWeights",
    "tilting_weights",
    "tilting_diagonal",
    "DeformedHopping",
    "deformed_hopping",
    "ProjectorTiltBounds",
    "projector_tilt_bounds",
    "DeformedPropagatorCheck",
    "verify_deformed_propagator",
    "imag_tilted_hopping_norm",
    "log_bound_factors",
]

_LOG_LIMIT = 700.0


class TiltingOverflowError(OverflowError):
    pass


@dataclass(frozen=True)
class TiltingWeights:
    mu: float
    log_weights: np.ndarray
    d_XY: float
    a: float

    @property
    def site_weights(self) -> np.ndarray:
        return np.exp(self.log_weights)


def tilting_weights(profile: SeparationProfile, a: float) -> TiltingWeights:
    """q(x) = exp(mu f(s(x)/d)) with mu = a d / 2."""
    if a < 0:
        raise ValueError("a must be nonnegative")
    mu = 0.5 * a * profile.d_XY
    return TiltingWeights(mu, mu * profile.ramp, profile.d_XY, a)


def tilting_diagonal(basis: FockBasis, weights: TiltingWeights, log: bool = False):
    """Diagonal of T and of T^{-1} on the sector.

    With ``log=True`` returns the log of T's diagonal only (T^{-1} is its
    negative).  Raises TiltingOverflowError if exponentiation would overflow.
    """
    logT = basis.states @ weights.log_weights
    if log:
        return logT
    if logT.size and np.abs(logT).max() > _LOG_LIMIT:
        raise TiltingOverflowError(f"|log T| reaches {np.abs(logT).max():.1f}; use log=True")
    return np.exp(logT), np.exp(-logT)


@dataclass(frozen=True)
class DeformedHopping:
    matrix: np.ndarray
    """(1/i) J_xy sinh(mu (f_x - f_y)); Hermitian."""
    schur_bound: float
    """max_x sum_y |J_xy| sinh(a min(d, |x - y|))."""
    av: float
    norm: float
    """Spectral norm of ``matrix``."""


def deformed_hopping(J: HoppingMatrix, weights: TiltingWeights, coords) -> DeformedHopping:
    coords = coords.coords if isinstance(coords, LatticeGraph) else np.asarray(coords, dtype=float)
    coords = coords[:, None] if coords.ndim == 1 else coords
    lw = weights.log_weights
    Jt = -1j * J.entries * np.sinh(lw[:, None] - lw[None, :])
    r = cdist(coords, coords)
    a, d = weights.a, weights.d_XY
    absJ = np.abs(J.entries)
    schur = float(np.max(np.sum(absJ * np.sinh(a * np.minimum(d, r)), axis=1)))
    av = float(np.max(np.sum(absJ * np.sinh(a * r), axis=1)))
    norm = float(linalg.norm(Jt, 2)) if Jt.size else 0.0
    return DeformedHopping(Jt, schur, av, norm)


@dataclass(frozen=True)
class ProjectorTiltBounds:
    """Exact norms of P_X T^{-1} and T P_Y with their analytic bounds, all as logs."""

    log_lhs_X: float
    log_rhs_X: float
    log_lhs_Y: float
    log_rhs_Y: float

    @property
    def lhs(self):
        return float(np.exp(self.log_lhs_X)), float(np.exp(self.log_lhs_Y))

    @property
    def rhs(self):
        return float(np.exp(self.log_rhs_X)), float(np.exp(self.log_rhs_Y))

    def holds(self, rtol: float = 1e-12) -> bool:
        return (self.log_lhs_X <= self.log_rhs_X + rtol * max(1.0, abs(self.log_rhs_X))
                and self.log_lhs_Y <= self.log_rhs_Y + rtol * max(1.0, abs(self.log_rhs_Y)))


def projector_tilt_bounds(basis: FockBasis, weights: TiltingWeights, X, Y, alpha, beta) -> ProjectorTiltBounds:
    """Compare ||P_{N_X >= beta N} T^{-1}|| with e^{mu (1 - 2 beta) N} and
    ||T P_{N_Y >= (1-alpha) N}|| with e^{mu (2 alpha - 1) N}.

    Both operators are diagonal, so the norms are maxima over the admissible
    basis states (log of zero, i.e. -inf, if no state is admissible).
    """
    if not alpha < beta:
        raise ValueError("need alpha < beta")
    logT = tilting_diagonal(basis, weights, log=True)
    pX = threshold_projector(basis, X, beta).astype(bool)
    pY = threshold_projector(basis, Y, 1 - alpha).astype(bool)
    lhs_X = float(np.max(-logT[pX])) if pX.any() else -np.inf
    lhs_Y = float(np.max(logT[pY])) if pY.any() else -np.inf
    N, mu = basis.N, weights.mu
    return ProjectorTiltBounds(lhs_X, mu * (1 - 2 * beta) * N, lhs_Y, mu * (2 * alpha - 1) * N)


def _tilted(basis, weights, A_dense):
    logT = tilting_diagonal(basis, weights, log=True)
    shift = logT[:, None] - logT[None, :]
    if shift.size and np.abs(shift).max() > _LOG_LIMIT:
        raise TiltingOverflowError("tilting ratio exceeds floating-point range")
    return np.exp(shift) * A_dense


def imag_tilted_hopping_norm(basis: FockBasis, J: HoppingMatrix, weights: TiltingWeights) -> float:
    """||Im(T H_0 T^{-1})|| from a dense eigensolve of (H~ - H~^dagger) / 2i."""
    if basis.dim > DENSE_LIMIT:
        raise ValueError(f"sector dimension {basis.dim} exceeds dense limit {DENSE_LIMIT}")
    H0 = one_body_lift(basis, J.entries).toarray()
    Ht = _tilted(basis, weights, H0)
    im = (Ht - Ht.conj().T) / 2j
    ev = linalg.eigvalsh(0.5 * (im + im.conj().T))
    return float(np.max(np.abs(ev))) if ev.size else 0.0


@dataclass(frozen=True)
class DeformedPropagatorCheck:
    times: np.ndarray
    measured: np.ndarray
    bound: np.ndarray
    violations: np.ndarray

    @property
    def ok(self) -> bool:
        return not self.violations.any()


def verify_deformed_propagator(H, basis: FockBasis, weights: TiltingWeights, a: float, v: float, times,
                               rtol: float = 1e-8, pieces=None) -> DeformedPropagatorCheck:
    """Dense check of ||T e^{-itH} T^{-1}|| <= e^{a N v |t|} on a time grid.

    The deformed propagator is formed as the similarity D_T U D_T^{-1} of the
    unitary U obtained from eigendecomposition, never by exponentiating the
    non-Hermitian tilted Hamiltonian.  ``pieces`` (a list of (duration, H))
    switches to a time-ordered piecewise-constant propagator, in which case
    ``v`` must be the largest velocity over the pieces and ``H`` is ignored.
    """
    if basis.dim > DENSE_LIMIT:
        raise ValueError(f"sector dimension {basis.dim} exceeds dense limit {DENSE_LIMIT}")
    times = np.asarray(times, dtype=float)
    logT = tilting_diagonal(basis, weights, log=True)
    shift = logT[:, None] - logT[None, :]
    if shift.size and np.abs(shift).max() > _LOG_LIMIT:
        raise TiltingOverflowError("tilting ratio exceeds floating-point range")
    sim = np.exp(shift)
    if pieces is None:
        Hd = H.toarray() if sparse.issparse(H) else np.asarray(H)
        eigs = [(np.inf, *linalg.eigh(Hd))]
    else:
        eigs = [(d, *linalg.eigh(h.toarray() if sparse.issparse(h) else np.asarray(h))) for d, h in pieces]
    measured = np.empty(len(times))
    for k, t in enumerate(times):
        U = _piecewise_unitary(eigs, t)
        measured[k] = linalg.svdvals(sim * U)[0]
    log_bound = a * basis.N * v * np.abs(times)
    bound = np.exp(log_bound)
    violations = measured > bound * (1 + rtol)
    return DeformedPropagatorCheck(times, measured, bound, violations)


def _piecewise_unitary(eigs, t):
    if t < 0 and len(eigs) > 1:
        raise ValueError("piecewise schedules run forward in time only")
    sgn = 1.0 if t >= 0 else -1.0
    remaining = abs(t)
    n = eigs[0][1].shape[0]
    U = np.eye(n, dtype=complex)
    for d, w, Q in eigs:
        step = min(d, remaining)
        if step <= 0:
            break
        U = ((Q * np.exp(-1j * sgn * step * w)) @ Q.conj().T) @ U
        remaining -= step
    if remaining > 1e-12 * max(1.0, abs(t)):
        raise ValueError("time exceeds the schedule length")
    return U


def log_bound_factors(mu: float, a: float, v: float, N: int, alpha: float, beta: float, t: float):
    """Logs of the three factors e^{mu(1-2beta)N}, e^{aNv|t|}, e^{mu(2alpha-1)N} and their sum."""
    f1 = mu * (1 - 2 * beta) * N
    f2 = a * N * v * abs(t)
    f3 = mu * (2 * alpha - 1) * N
    return f1, f2, f3, f1 + f2 + f3
