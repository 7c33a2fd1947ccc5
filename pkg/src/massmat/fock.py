"""Fixed-N occupation-number bases for bosons and fermions.

States are stored densely as an ``(dim, L)`` integer array in colexicographic
order (the occupation of the last site is the most significant key).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

__all__ = [
    "InvalidSectorError",
    "FockBasis",
    "build_basis",
    "sector_dimension",
    "threshold_count",
    "number_observable",
    "threshold_projector",
    "hopping_matrix_elements",
    "hopping_operator",
    "one_body_lift",
]


class InvalidSectorError(ValueError):
    pass


def sector_dimension(statistics: str, L: int, N: int) -> int:
    if L < 1 or N < 0:
        raise InvalidSectorError(f"need L >= 1 and N >= 0, got L={L}, N={N}")
    if statistics == "boson":
        return math.comb(N + L - 1, N)
    if statistics == "fermion":
        return math.comb(L, N) if N <= L else 0
    raise InvalidSectorError(f"unknown statistics {statistics!r}")


def threshold_count(c: float, N: int) -> int:
    """Smallest integer n with n >= c*N, robust to rounding of c*N."""
    return int(math.ceil(c * N - 1e-9))


@dataclass(frozen=True)
class FockBasis:
    statistics: str
    L: int
    N: int
    states: np.ndarray
    index: dict = field(repr=False, compare=False)
    _keys: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def dim(self) -> int:
        return self.states.shape[0]

    def lookup(self, occupations: np.ndarray) -> np.ndarray:
        """Ordinals of the given occupation vectors (rows); -1 where absent."""
        occ = np.atleast_2d(np.asarray(occupations))
        if self._keys is not None:
            keys = occ.astype(np.int64) @ _radix(self.L, self.N)
            pos = np.searchsorted(self._keys, keys)
            pos = np.minimum(pos, len(self._keys) - 1)
            return np.where(self._keys[pos] == keys, pos, -1)
        return np.array([self.index.get(tuple(int(v) for v in row), -1) for row in occ])


def _radix(L: int, N: int) -> np.ndarray:
    return (N + 1) ** np.arange(L, dtype=np.int64)


def build_basis(statistics: str, L: int, N: int) -> FockBasis:
    """Enumerate the N-particle sector on L sites.

    Raises InvalidSectorError for unknown statistics, L < 1, N < 0, or a
    fermion sector with N > L.
    """
    if statistics not in ("boson", "fermion"):
        raise InvalidSectorError(f"unknown statistics {statistics!r}")
    if L < 1 or N < 0:
        raise InvalidSectorError(f"need L >= 1 and N >= 0, got L={L}, N={N}")
    if statistics == "fermion" and N > L:
        raise InvalidSectorError(f"cannot place {N} fermions on {L} sites")

    combos = (itertools.combinations_with_replacement(range(L), N) if statistics == "boson"
              else itertools.combinations(range(L), N))
    dim = sector_dimension(statistics, L, N)
    states = np.zeros((dim, L), dtype=np.int64)
    for k, c in enumerate(combos):
        for site in c:
            states[k, site] += 1
    # Colex: compare occupation vectors from the last site backwards.
    order = np.lexsort(states.T)
    states = states[order]
    states.setflags(write=False)
    index = {tuple(int(v) for v in row): i for i, row in enumerate(states)}
    keys = None
    if L * math.log2(N + 1) < 62:
        keys = states @ _radix(L, N)
        keys.setflags(write=False)
    return FockBasis(statistics, L, N, states, index, keys)


def number_observable(basis: FockBasis, S) -> np.ndarray:
    """Per-state value of N_S = sum of occupations over S."""
    S = list(S)
    if not S:
        return np.zeros(basis.dim)
    return basis.states[:, S].sum(axis=1).astype(float)


def threshold_projector(basis: FockBasis, S, c: float) -> np.ndarray:
    """Diagonal of the spectral projector onto N_S >= c N, as 0/1 floats."""
    if not 0.0 <= c <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {c}")
    if basis.N == 0:
        return np.ones(basis.dim)
    return (number_observable(basis, S) >= threshold_count(c, basis.N)).astype(float)


def hopping_matrix_elements(basis: FockBasis, x: int, y: int):
    """Nonzero entries of a_x^dagger a_y in the sector, as (rows, cols, amplitudes).

    Bosons: sqrt(n_y (n_x + 1)).  Fermions: (-1)^(occupied sites strictly
    between x and y), zero when site x is already filled.
    """
    if x == y:
        raise ValueError("hopping requires distinct sites; use number_observable for n_x")
    st = basis.states
    src = np.nonzero(st[:, y] > 0)[0]
    if basis.statistics == "fermion":
        src = src[st[src, x] == 0]
    if src.size == 0:
        return np.zeros(0, int), np.zeros(0, int), np.zeros(0)
    new = st[src].copy()
    new[:, y] -= 1
    new[:, x] += 1
    rows = basis.lookup(new)
    if basis.statistics == "boson":
        amp = np.sqrt(st[src, y] * (st[src, x] + 1.0))
    else:
        lo, hi = min(x, y), max(x, y)
        between = st[src, lo + 1:hi].sum(axis=1)
        amp = np.where(between % 2 == 0, 1.0, -1.0)
    return rows, src, amp


def hopping_operator(basis: FockBasis, x: int, y: int) -> sparse.csr_matrix:
    r, c, a = hopping_matrix_elements(basis, x, y)
    return sparse.csr_matrix((a, (r, c)), shape=(basis.dim, basis.dim))


def one_body_lift(basis: FockBasis, A) -> sparse.csr_matrix:
    """Second quantisation dGamma(A) = sum_xy A_xy a_x^dagger a_y on the sector."""
    A = np.asarray(A)
    rows, cols, vals = [], [], []
    diag = basis.states @ np.diag(A)
    for x, y in zip(*np.nonzero(A)):
        if x == y:
            continue
        r, c, a = hopping_matrix_elements(basis, int(x), int(y))
        rows.append(r)
        cols.append(c)
        vals.append(A[x, y] * a)
    n = basis.dim
    if rows:
        r = np.concatenate(rows + [np.arange(n)])
        c = np.concatenate(cols + [np.arange(n)])
        v = np.concatenate(vals + [diag])
    else:
        r = c = np.arange(n)
        v = diag
    return sparse.csr_matrix((v, (r, c)), shape=(n, n))
