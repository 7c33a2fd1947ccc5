"""Krylov time evolution, transport probabilities and the cone norm.

``cone_norm`` measures ``|| P_{N_X >= beta N} e^{-itH} P_{N_Y >= (1-alpha) N} ||``,
the quantity the light-cone bound controls, using only matrix-vector
products with H.  Dense eigendecomposition counterparts are kept alongside as
oracles for small sectors.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg, sparse

from .fock import FockBasis, threshold_projector

logger = logging.getLogger(__name__)

__all__ = [
    "PropagationError",
    "InvalidInitialStateError",
    "KrylovStats",
    "krylov_expm_multiply",
    "evolve",
    "evolve_schedule",
    "dense_propagator",
    "DiagonalEnsemble",
    "transport_probability",
    "PropagationResult",
    "transport_sweep",
    "ConeNorm",
    "cone_norm",
    "dense_cone_norm",
    "DENSE_LIMIT",
]

DENSE_LIMIT = 400
_ROUNDOFF = 16 * np.finfo(float).eps


class PropagationError(RuntimeError):
    pass


class InvalidInitialStateError(ValueError):
    pass


@dataclass
class KrylovStats:
    substeps: int = 0
    matvecs: int = 0
    error_estimate: float = 0.0


def _lanczos(H, v, m, h_norm):
    """m-step Lanczos with full reorthogonalisation. Returns (V, alpha, beta, happy)."""
    n = v.shape[0]
    m = min(m, n)
    V = np.zeros((n, m + 1), dtype=complex)
    alpha = np.zeros(m)
    beta = np.zeros(m)
    V[:, 0] = v
    for j in range(m):
        w = H @ V[:, j]
        alpha[j] = np.vdot(V[:, j], w).real
        w = w - V[:, : j + 1] @ (V[:, : j + 1].conj().T @ w)
        w = w - V[:, : j + 1] @ (V[:, : j + 1].conj().T @ w)
        beta[j] = np.linalg.norm(w)
        if beta[j] <= 1e-13 * h_norm:
            return V[:, : j + 1], alpha[: j + 1], beta[: j + 1], True
        V[:, j + 1] = w / beta[j]
    return V, alpha, beta, False


def krylov_expm_multiply(H, v, t: float, tol: float = 1e-12, krylov_dim: int = 30,
                         max_substeps: int = 10_000):
    """Apply exp(-i t H) to ``v`` for Hermitian ``H`` by adaptive Lanczos steps.

    Each substep tau is the largest fraction of the remaining time whose
    residual estimate ``|v| beta_m |e_m^T exp(-i tau T) e_1|`` stays below
    ``tol * tau / |t|``, so the accumulated estimate is at most ``tol``
    relative to ``|v|``; per-step targets are floored at the roundoff level
    of the estimate itself (a few eps times beta_m).  The Krylov basis is
    built once per substep and reused while tau is shrunk.
    """
    w = np.asarray(v, dtype=complex).copy()
    stats = KrylovStats()
    if t == 0 or not np.any(w):
        return w, stats
    H = H if sparse.issparse(H) else sparse.csr_matrix(H)
    coo = H.tocoo()
    if np.all(coo.row == coo.col):
        return np.exp(-1j * t * H.diagonal()) * w, stats

    h_norm = max(float(abs(H).sum(axis=1).max()), 1e-300)
    sgn = np.sign(t)
    total = abs(t)
    done = 0.0
    tau_prev = total
    while done < total:
        if stats.substeps >= max_substeps:
            raise PropagationError(f"no convergence within {max_substeps} Krylov substeps")
        nrm = np.linalg.norm(w)
        V, a, b, happy = _lanczos(H, w / nrm, krylov_dim, h_norm)
        k = len(a)
        stats.matvecs += k
        theta, Q = linalg.eigh_tridiagonal(a, b[: k - 1]) if k > 1 else (a, np.ones((1, 1)))
        remaining = total - done
        # start from twice the last accepted step instead of the full remainder
        tau = min(remaining, 2.0 * tau_prev)
        while True:
            y = Q @ (np.exp(-1j * sgn * tau * theta) * Q[0].conj())
            err = 0.0 if happy else nrm * b[-1] * abs(y[-1])
            # the estimate carries roundoff of order eps * beta_m; targets below it are unresolvable
            if err <= nrm * max(tol * tau / total, _ROUNDOFF * max(1.0, b[-1])):
                break
            if tau < 1e-14 * total:
                raise PropagationError("Krylov step size underflow")
            tau *= 0.5
        w = nrm * (V[:, :k] @ y)
        done = total if tau == remaining else done + tau
        tau_prev = tau
        stats.substeps += 1
        stats.error_estimate += err / max(nrm, 1e-300)
    return w, stats


def evolve(H, psi0, t: float, tol: float = 1e-12, krylov_dim: int = 30) -> np.ndarray:
    """psi_t = exp(-i t H) psi0 for a normalised psi0.

    Raises InvalidInitialStateError if |psi0| differs from 1 by more than 1e-12.
    """
    psi0 = np.asarray(psi0)
    if abs(np.linalg.norm(psi0) - 1.0) > 1e-12:
        raise InvalidInitialStateError("initial state must be normalised")
    return krylov_expm_multiply(H, psi0, t, tol, krylov_dim)[0]


def evolve_schedule(pieces, psi0, t: float | None = None, tol: float = 1e-12) -> np.ndarray:
    """Time-ordered evolution through consecutive (duration, H) pieces.

    Propagates up to time ``t`` (default: the full schedule); ``t`` beyond the
    schedule end is an error.
    """
    total = sum(d for d, _ in pieces)
    t = total if t is None else t
    if t < 0 or t > total * (1 + 1e-12):
        raise ValueError(f"t = {t} outside the schedule [0, {total}]")
    psi = np.asarray(psi0, dtype=complex)
    if abs(np.linalg.norm(psi) - 1.0) > 1e-12:
        raise InvalidInitialStateError("initial state must be normalised")
    elapsed = 0.0
    for d, H in pieces:
        step = min(d, t - elapsed)
        if step <= 0:
            break
        psi = krylov_expm_multiply(H, psi, step, tol)[0]
        elapsed += step
    return psi


def dense_propagator(H, t: float) -> np.ndarray:
    """exp(-i t H) from the eigendecomposition of a dense Hermitian H."""
    Hd = H.toarray() if sparse.issparse(H) else np.asarray(H)
    w, Q = linalg.eigh(Hd)
    return (Q * np.exp(-1j * t * w)) @ Q.conj().T


@dataclass(frozen=True)
class DiagonalEnsemble:
    """Mixed state diagonal in the occupation basis (weights sum to one)."""

    weights: np.ndarray


def _check_support(rho0, pY):
    if isinstance(rho0, DiagonalEnsemble):
        w = np.asarray(rho0.weights, dtype=float)
        if np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
            raise InvalidInitialStateError("ensemble weights must be a probability vector")
        outside = w[pY == 0].sum()
    else:
        psi = np.asarray(rho0)
        if abs(np.linalg.norm(psi) - 1.0) > 1e-12:
            raise InvalidInitialStateError("initial state must be normalised")
        outside = np.linalg.norm(psi[pY == 0]) ** 2
    if outside > 1e-12:
        raise InvalidInitialStateError(
            "initial state is not supported in the range of P_{N_Y >= (1-alpha) N}")


def transport_probability(H, basis: FockBasis, rho0, X, Y, alpha: float, beta: float, t: float,
                          tol: float = 1e-12) -> float:
    """Tr(P_{N_X >= beta N} rho_t) for a pure state or a DiagonalEnsemble on range(P_Y)."""
    pY = threshold_projector(basis, Y, 1 - alpha)
    pX = threshold_projector(basis, X, beta)
    _check_support(rho0, pY)
    if isinstance(rho0, DiagonalEnsemble):
        total = 0.0
        for k in np.nonzero(rho0.weights)[0]:
            e = np.zeros(basis.dim, dtype=complex)
            e[k] = 1.0
            psi = evolve(H, e, t, tol)
            total += rho0.weights[k] * float(np.sum(pX * np.abs(psi) ** 2))
        return total
    psi = evolve(H, rho0, t, tol)
    return float(np.sum(pX * np.abs(psi) ** 2))


@dataclass
class PropagationResult:
    times: np.ndarray
    amplitudes: np.ndarray
    norm_drift: np.ndarray


def transport_sweep(H, basis: FockBasis, psi0, X, Y, alpha, beta, times, tol=1e-12) -> PropagationResult:
    """Transport probability of a pure state on a time grid, propagating incrementally."""
    times = np.asarray(times, dtype=float)
    pY = threshold_projector(basis, Y, 1 - alpha)
    pX = threshold_projector(basis, X, beta)
    _check_support(psi0, pY)
    order = np.argsort(times, kind="stable")
    probs = np.zeros(len(times))
    drift = np.zeros(len(times))
    psi = np.asarray(psi0, dtype=complex)
    now = 0.0
    for i in order:
        psi = krylov_expm_multiply(H, psi, times[i] - now, tol)[0]
        now = times[i]
        probs[i] = float(np.sum(pX * np.abs(psi) ** 2))
        drift[i] = abs(np.linalg.norm(psi) - 1.0)
    return PropagationResult(times, probs, drift)


@dataclass(frozen=True)
class ConeNorm:
    value: float
    error: float
    iterations: int
    converged: bool
    dense_value: float | None = None

    def __float__(self):
        return self.value


def dense_cone_norm(H, basis: FockBasis, X, Y, alpha, beta, t) -> float:
    """Largest singular value of the projected block of the dense propagator."""
    rows = np.nonzero(threshold_projector(basis, X, beta))[0]
    cols = np.nonzero(threshold_projector(basis, Y, 1 - alpha))[0]
    if len(rows) == 0 or len(cols) == 0:
        return 0.0
    U = dense_propagator(H, t)
    return float(linalg.svdvals(U[np.ix_(rows, cols)])[0])


def cone_norm(H, basis: FockBasis, X, Y, alpha: float, beta: float, t: float, tol: float = 1e-12,
              block: int = 8, max_iter: int = 200, rtol: float = 1e-10, seed: int = 0,
              cross_check: bool = True) -> ConeNorm:
    """Operator norm of P_X e^{-itH} P_Y by block power iteration on A^dagger A.

    ``A = P_X e^{-itH} P_Y``; each application of A or its adjoint is one
    Krylov propagation per block column.  Rayleigh-Ritz on the block gives the
    estimate, which stops when successive values of the top singular value
    squared agree to ``rtol``.  When the range of P_Y fits in the block the
    result is exact after one sweep.  A non-converged run is returned with
    its residual-based error bar instead of raising.
    """
    if not alpha < beta:
        raise ValueError("need alpha < beta")
    if set(X) & set(Y):
        raise ValueError("X and Y must be disjoint")
    pY = threshold_projector(basis, Y, 1 - alpha)
    pX = threshold_projector(basis, X, beta)
    support = np.nonzero(pY)[0]
    dense = None
    if cross_check and basis.dim <= DENSE_LIMIT:
        dense = dense_cone_norm(H, basis, X, Y, alpha, beta, t)
    if len(support) == 0 or not pX.any():
        return ConeNorm(0.0, 0.0, 0, True, dense)

    rank = len(support)
    k = min(block, rank)
    n = basis.dim
    if k == rank:
        Q = np.zeros((n, k), dtype=complex)
        Q[support, np.arange(k)] = 1.0
    else:
        rng = np.random.default_rng(seed)
        Q = np.zeros((n, k), dtype=complex)
        Q[support] = rng.standard_normal((rank, k)) + 1j * rng.standard_normal((rank, k))
        Q = np.linalg.qr(Q)[0]

    def apply(M, s):
        return np.column_stack([krylov_expm_multiply(H, M[:, j], s, tol)[0] for j in range(M.shape[1])])

    lam_prev = None
    lam = 0.0
    resid = np.inf
    for it in range(1, max_iter + 1):
        AQ = pX[:, None] * apply(Q, t)
        BQ = pY[:, None] * apply(AQ, -t)
        G = Q.conj().T @ BQ
        evals, evecs = linalg.eigh(0.5 * (G + G.conj().T))
        lam = max(float(evals[-1]), 0.0)
        z = evecs[:, -1]
        resid = float(np.linalg.norm(BQ @ z - lam * (Q @ z)))
        if lam == 0.0:
            return ConeNorm(0.0, 0.0, it, True, dense)
        if k == rank or (lam_prev is not None and abs(lam - lam_prev) <= rtol * lam):
            return ConeNorm(float(np.sqrt(lam)), _sigma_error(lam, resid), it, True, dense)
        lam_prev = lam
        Q = np.linalg.qr(BQ)[0]
    logger.warning("cone_norm: power iteration stagnated after %d iterations", max_iter)
    err = max(_sigma_error(lam, resid), abs(np.sqrt(lam) - np.sqrt(lam_prev or 0.0)))
    return ConeNorm(float(np.sqrt(lam)), err, max_iter, False, dense)


def _sigma_error(lam, resid):
    # Some eigenvalue of A^dagger A lies within resid of lam.
    return float(np.sqrt(lam + resid) - np.sqrt(max(lam - resid, 0.0)))
