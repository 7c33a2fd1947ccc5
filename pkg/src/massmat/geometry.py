"""Embedded lattices, region distances and separation functions.

A separation profile assigns every lattice site a real number ``s(x)`` that is
1-Lipschitz, at least ``d/2`` on the target region ``X`` and at most ``-d/2``
on the source region ``Y`` (``d`` the Euclidean distance between them).  The
truncated ramp ``f(s/d)`` of that profile is what the tilting operator
exponentiates.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

__all__ = [
    "InvalidRegionError",
    "GeometryDegenerateError",
    "LatticeGraph",
    "RegionPair",
    "SeparationProfile",
    "STRATEGIES",
    "region_distance",
    "region_pair",
    "hull_closest_points",
    "separation_convex",
    "separation_general",
    "separation",
    "ramp",
    "decompose",
]

STRATEGIES = ("convex-hull", "signed-distance-to-S", "half-gap-surrogate")
LABELS = ("Y_inf", "W0", "X_inf")

# Relative slack used when comparing s(x) with the thresholds +-d/2.
_BOUNDARY_RTOL = 1e-12


class InvalidRegionError(ValueError):
    """Empty, overlapping or out-of-range site sets."""


class GeometryDegenerateError(ValueError):
    """The convex-hull construction does not separate X from Y at distance d_XY."""


@dataclass(frozen=True)
class LatticeGraph:
    """Finite vertex set embedded in R^D, optionally with nearest-neighbour edges.

    Edges, when present, must join sites at Euclidean distance exactly one.
    """

    coords: np.ndarray
    edges: tuple[tuple[int, int], ...] | None = None

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        if coords.ndim == 1:
            coords = coords[:, None]
        if coords.ndim != 2 or coords.shape[0] == 0 or coords.shape[1] == 0:
            raise ValueError("coords must be a non-empty (L, D) array")
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        if len(coords) > 1:
            dmin = cKDTree(coords).query(coords, k=2)[0][:, 1].min()
            if dmin <= 1e-12:
                raise ValueError("site coordinates must be pairwise distinct")
        if self.edges is not None:
            edges = tuple(sorted((min(int(i), int(j)), max(int(i), int(j))) for i, j in self.edges))
            for i, j in edges:
                if not (0 <= i < len(coords) and 0 <= j < len(coords)) or i == j:
                    raise ValueError(f"invalid edge ({i}, {j})")
                if abs(np.linalg.norm(coords[i] - coords[j]) - 1.0) > 1e-12:
                    raise ValueError(f"edge ({i}, {j}) does not have unit length")
            object.__setattr__(self, "edges", edges)

    @property
    def L(self) -> int:
        return self.coords.shape[0]

    @property
    def dimension(self) -> int:
        return self.coords.shape[1]

    @classmethod
    def chain(cls, L: int) -> "LatticeGraph":
        return cls(np.arange(L, dtype=float)[:, None], tuple((i, i + 1) for i in range(L - 1)))

    @classmethod
    def grid(cls, shape: Sequence[int]) -> "LatticeGraph":
        """Hypercubic grid with unit spacing; sites in C (row-major) order."""
        axes = [np.arange(n, dtype=float) for n in shape]
        coords = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
        return cls.from_coords(coords)

    @classmethod
    def from_coords(cls, coords, connect: bool = True) -> "LatticeGraph":
        """Build a lattice, joining every pair of sites at distance one if ``connect``."""
        coords = np.asarray(coords, dtype=float)
        if coords.ndim == 1:
            coords = coords[:, None]
        edges = None
        if connect:
            pairs = cKDTree(coords).query_pairs(1.0 + 1e-9, output_type="ndarray")
            dist = np.linalg.norm(coords[pairs[:, 0]] - coords[pairs[:, 1]], axis=1) if len(pairs) else []
            edges = tuple((int(i), int(j)) for (i, j), r in zip(pairs, dist) if abs(r - 1.0) <= 1e-12)
        return cls(coords, edges)

    def distances(self) -> np.ndarray:
        """Dense matrix of pairwise Euclidean distances |x - y|."""
        return cdist(self.coords, self.coords)


def _as_sites(lattice: LatticeGraph, S: Iterable[int], name: str) -> np.ndarray:
    idx = np.unique(np.asarray(list(S), dtype=int))
    if idx.size == 0:
        raise InvalidRegionError(f"region {name} is empty")
    if idx.min() < 0 or idx.max() >= lattice.L:
        raise InvalidRegionError(f"region {name} has sites outside the lattice")
    return idx


def _check_pair(lattice, X, Y):
    X = _as_sites(lattice, X, "X")
    Y = _as_sites(lattice, Y, "Y")
    if np.intersect1d(X, Y).size:
        raise InvalidRegionError("regions X and Y overlap")
    return X, Y


def region_distance(lattice: LatticeGraph, X: Iterable[int], Y: Iterable[int]) -> float:
    """Euclidean distance ``min |x - y|`` between two disjoint site sets."""
    X, Y = _check_pair(lattice, X, Y)
    return float(cdist(lattice.coords[X], lattice.coords[Y]).min())


@dataclass(frozen=True)
class RegionPair:
    X: tuple[int, ...]
    Y: tuple[int, ...]
    d_XY: float


def region_pair(lattice: LatticeGraph, X, Y) -> RegionPair:
    X, Y = _check_pair(lattice, X, Y)
    d = region_distance(lattice, X, Y)
    return RegionPair(tuple(int(i) for i in X), tuple(int(i) for i in Y), d)


def ramp(u):
    """Truncated ramp: 1 for u >= 1/2, -1 for u <= -1/2, 2u in between."""
    u = np.asarray(u, dtype=float)
    out = np.clip(2.0 * u, -1.0, 1.0)
    return out if out.ndim else float(out)


def decompose(s, d_XY: float) -> np.ndarray:
    """Label sites ``Y_inf`` (s <= -d/2), ``X_inf`` (s >= d/2) or ``W0``.

    The outer sets are closed, so a site sitting exactly on a threshold goes to
    the outer set.  Values within a relative 1e-12 of a threshold count as on it.
    """
    s = np.asarray(s, dtype=float)
    half = 0.5 * d_XY
    slack = _BOUNDARY_RTOL * max(1.0, half)
    labels = np.full(s.shape, "W0", dtype=object)
    labels[s >= half - slack] = "X_inf"
    labels[s <= -half + slack] = "Y_inf"
    return labels


@dataclass(frozen=True)
class SeparationProfile:
    """Per-site separation values together with the derived ramp and labels."""

    s: np.ndarray
    d_XY: float
    strategy: str
    X: tuple[int, ...]
    Y: tuple[int, ...]
    ramp: np.ndarray = field(init=False)
    labels: np.ndarray = field(init=False)
    # Diagnostics of the convex-hull construction (None for other strategies).
    w0: np.ndarray | None = None
    b: np.ndarray | None = None

    def __post_init__(self):
        s = np.array(self.s, dtype=float)
        half = 0.5 * self.d_XY
        slack = _BOUNDARY_RTOL * max(1.0, half)
        # Snap rounding noise onto the thresholds so ramp(X) = 1, ramp(Y) = -1 exactly.
        s[np.abs(s - half) <= slack] = half
        s[np.abs(s + half) <= slack] = -half
        s.setflags(write=False)
        object.__setattr__(self, "s", s)
        r = ramp(s / self.d_XY)
        labels = decompose(s, self.d_XY)
        r.setflags(write=False)
        object.__setattr__(self, "ramp", r)
        object.__setattr__(self, "labels", labels)

    def lipschitz_excess(self, lattice: LatticeGraph) -> float:
        """max over pairs of |s(x) - s(y)| - |x - y| (<= 0 for a 1-Lipschitz profile)."""
        ds = np.abs(self.s[:, None] - self.s[None, :])
        excess = ds - lattice.distances()
        np.fill_diagonal(excess, -np.inf)
        return float(excess.max()) if len(self.s) > 1 else -np.inf

    def separation_slack(self) -> float:
        """min of s - d/2 on X and of -d/2 - s on Y; nonnegative when separated."""
        half = 0.5 * self.d_XY
        sx = self.s[list(self.X)] - half
        sy = -half - self.s[list(self.Y)]
        return float(min(sx.min(), sy.min()))

    def to_csv(self, path, lattice: LatticeGraph) -> None:
        D = lattice.dimension
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["site_index", *[f"x{k}" for k in range(D)], "s", "ramp", "label"])
            for i in range(lattice.L):
                w.writerow([i, *[repr(float(c)) for c in lattice.coords[i]],
                            repr(float(self.s[i])), repr(float(self.ramp[i])), self.labels[i]])


def hull_closest_points(A: np.ndarray, B: np.ndarray, max_iter: int = 1000):
    """Closest points of conv(A) and conv(B) (rows are points).

    Wolfe's minimum-norm-point method applied to the Minkowski difference
    conv(A) - conv(B), which is never formed explicitly: the linear
    minimisation step picks the extreme point of A and of B separately.
    Ties are broken by smallest index, so the result is deterministic.

    Returns ``(a0, b0, distance)``.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    pd = cdist(A, B)
    i0, j0 = np.unravel_index(np.argmin(pd), pd.shape)
    pairs = [(int(i0), int(j0))]
    P = [A[i0] - B[j0]]
    lam = np.array([1.0])
    x = P[0].copy()
    scale = max(1.0, float(np.abs(A).max(initial=0.0)), float(np.abs(B).max(initial=0.0))) ** 2
    eps = 1e-14 * scale

    for _ in range(max_iter):
        i = int(np.argmin(A @ x))
        j = int(np.argmax(B @ x))
        p = A[i] - B[j]
        if x @ x - x @ p <= eps or (i, j) in pairs:
            break
        pairs.append((i, j))
        P.append(p)
        lam = np.append(lam, 0.0)
        while True:
            S = np.array(P)
            k = len(P)
            kkt = np.zeros((k + 1, k + 1))
            kkt[:k, :k] = S @ S.T
            kkt[:k, k] = kkt[k, :k] = 1.0
            rhs = np.zeros(k + 1)
            rhs[k] = 1.0
            alpha = np.linalg.lstsq(kkt, rhs, rcond=None)[0][:k]
            if np.all(alpha > 1e-12):
                lam = alpha
                break
            mask = alpha < lam
            theta = min(1.0, float(np.min(lam[mask] / (lam[mask] - alpha[mask])))) if mask.any() else 1.0
            lam = theta * alpha + (1.0 - theta) * lam
            keep = lam > 1e-12
            keep[np.argmax(lam)] = True
            P = [q for q, kp in zip(P, keep) if kp]
            pairs = [q for q, kp in zip(pairs, keep) if kp]
            lam = lam[keep]
            lam = lam / lam.sum()
        x = lam @ np.array(P)

    a0 = sum(l * A[i] for l, (i, _) in zip(lam, pairs))
    b0 = sum(l * B[j] for l, (_, j) in zip(lam, pairs))
    return np.asarray(a0), np.asarray(b0), float(np.linalg.norm(a0 - b0))


def separation_convex(lattice: LatticeGraph, X, Y) -> SeparationProfile:
    """Affine separation ``s(x) = b . (x - w0)`` across the gap between the convex hulls.

    ``w0`` is the midpoint of the closest pair of hull points and ``b`` the unit
    vector pointing from the Y-hull to the X-hull.

    Raises
    ------
    GeometryDegenerateError
        If the hulls intersect or their distance is smaller than d_XY, in
        which case the hyperplane cannot place X at s >= d_XY/2.
    """
    X, Y = _check_pair(lattice, X, Y)
    d = region_distance(lattice, X, Y)
    x0, y0, dh = hull_closest_points(lattice.coords[X], lattice.coords[Y])
    if dh <= 1e-12 * max(1.0, d):
        raise GeometryDegenerateError("convex hulls of X and Y intersect")
    w0 = 0.5 * (x0 + y0)
    b = (x0 - y0) / dh
    s = (lattice.coords - w0) @ b
    half = 0.5 * d
    slack = 1e-9 * max(1.0, d)
    if s[X].min() < half - slack or s[Y].max() > -half + slack:
        raise GeometryDegenerateError(
            f"hull distance {dh:.6g} < d_XY = {d:.6g}; use a general separation strategy")
    s[X] = np.maximum(s[X], half)
    s[Y] = np.minimum(s[Y], -half)
    return SeparationProfile(s, d, "convex-hull", tuple(map(int, X)), tuple(map(int, Y)), w0=w0, b=b)


def _gap_function(lattice, X, Y):
    tx = cKDTree(lattice.coords[X])
    ty = cKDTree(lattice.coords[Y])
    return lambda pts: ty.query(pts)[0] - tx.query(pts)[0]


def _zero_set_samples(g, lo, hi, pitch, refine=8, bisect_steps=60):
    """Points on {g = 0} inside the box [lo, hi], found on a regular grid.

    Cells whose corner values change sign are resampled ``refine`` times
    finer, and every fine edge with a sign change is bisected to machine
    precision, so returned points lie on the zero set up to rounding.
    """
    D = len(lo)
    axes = [np.arange(lo[k], hi[k] + pitch, pitch) for k in range(D)]
    mesh = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=1)
    vals = g(mesh).reshape([len(a) for a in axes])
    sign = np.sign(vals)
    found = [mesh[vals.ravel() == 0.0]]

    # Cells (by lower corner) whose corners do not all share one strict sign.
    shape = [len(a) - 1 for a in axes]
    corners = []
    for offs in np.ndindex(*([2] * D)):
        sl = tuple(slice(o, o + n) for o, n in zip(offs, shape))
        corners.append(sign[sl])
    corners = np.stack(corners)
    mixed = ~(np.all(corners > 0, axis=0) | np.all(corners < 0, axis=0))
    cells = np.argwhere(mixed)
    if len(cells) == 0:
        return np.concatenate(found) if found else np.zeros((0, D))

    fine = np.linspace(0.0, pitch, refine + 1)
    sub = np.stack([m.ravel() for m in np.meshgrid(*([fine] * D), indexing="ij")], axis=1)
    base = np.array([[axes[k][c[k]] for k in range(D)] for c in cells])
    pts = (base[:, None, :] + sub[None, :, :])  # (cells, nodes, D)
    fvals = g(pts.reshape(-1, D)).reshape(pts.shape[:2])
    found.append(pts.reshape(-1, D)[fvals.ravel() == 0.0])
    node_shape = [refine + 1] * D
    node_idx = np.arange((refine + 1) ** D).reshape(node_shape)
    starts, ends = [], []
    for k in range(D):
        a = np.take(node_idx, np.arange(refine), axis=k).ravel()
        b = np.take(node_idx, np.arange(1, refine + 1), axis=k).ravel()
        starts.append(a)
        ends.append(b)
    starts = np.concatenate(starts)
    ends = np.concatenate(ends)
    ga = fvals[:, starts]
    gb = fvals[:, ends]
    hit = (ga * gb) < 0
    ci, ei = np.nonzero(hit)
    if len(ci):
        pa = pts[ci, starts[ei]]
        pb = pts[ci, ends[ei]]
        va = ga[ci, ei]
        for _ in range(bisect_steps):
            pm = 0.5 * (pa + pb)
            vm = g(pm)
            left = np.sign(vm) == np.sign(va)
            pa = np.where(left[:, None], pm, pa)
            va = np.where(left, vm, va)
            pb = np.where(left[:, None], pb, pm)
        found.append(0.5 * (pa + pb))
    return np.unique(np.concatenate(found), axis=0)


def separation_general(lattice: LatticeGraph, X, Y, strategy: str = "half-gap-surrogate",
                       pitch_fraction: float = 1 / 64) -> SeparationProfile:
    """Separation built from the gap function ``g = dist_Y - dist_X``.

    ``half-gap-surrogate`` returns ``g/2``.  ``signed-distance-to-S`` returns
    ``sgn(g) dist_S`` with the equidistant surface ``S = {g = 0}`` sampled on
    a grid of pitch ``d_XY * pitch_fraction`` over the lattice bounding box
    padded by ``d_XY``; only available for D <= 2.
    """
    X, Y = _check_pair(lattice, X, Y)
    d = region_distance(lattice, X, Y)
    g = _gap_function(lattice, X, Y)
    gx = g(lattice.coords)
    if strategy == "half-gap-surrogate":
        s = 0.5 * gx
    elif strategy == "signed-distance-to-S":
        if lattice.dimension > 2:
            raise ValueError("signed-distance-to-S sampling is only supported for D <= 2")
        lo = lattice.coords.min(axis=0) - d
        hi = lattice.coords.max(axis=0) + d
        Z = _zero_set_samples(g, lo, hi, d * pitch_fraction)
        if len(Z) == 0:
            raise GeometryDegenerateError("no sample of the equidistant surface found")
        s = np.sign(gx) * cKDTree(Z).query(lattice.coords)[0]
    else:
        raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    return SeparationProfile(s, d, strategy, tuple(map(int, X)), tuple(map(int, Y)))


def separation(lattice: LatticeGraph, X, Y, strategy: str = "half-gap-surrogate") -> SeparationProfile:
    """Dispatch on ``strategy`` (one of ``STRATEGIES``)."""
    if strategy == "convex-hull":
        return separation_convex(lattice, X, Y)
    return separation_general(lattice, X, Y, strategy)
