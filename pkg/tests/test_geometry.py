import csv

import numpy as np
import pytest
from hypothesis import given, strategies as st

from scipy.optimize import minimize

from massmat.geometry import (GeometryDegenerateError, InvalidRegionError, LatticeGraph, decompose,
                              hull_closest_points, ramp, region_distance, separation, separation_convex,
                              separation_general)


def test_lattice_validation():
    with pytest.raises(ValueError):
        LatticeGraph(np.array([[0.0], [0.0]]))
    with pytest.raises(ValueError):
        LatticeGraph(np.array([[0.0], [2.0]]), edges=((0, 1),))
    g = LatticeGraph.grid((3, 2))
    assert g.L == 6 and g.dimension == 2
    assert len(g.edges) == 7


@pytest.mark.parametrize("coords,X,Y,expected", [
    (np.arange(8.0), [7], [0], 7.0),
    (np.array([[0.0, 0], [3, 4]]), [0], [1], 5.0),
    (np.arange(7.0), [0, 1], [5, 6], 4.0),
])
def test_region_distance(coords, X, Y, expected):
    lat = LatticeGraph.from_coords(coords)
    assert region_distance(lat, X, Y) == pytest.approx(expected, abs=1e-14)


def test_region_errors():
    lat = LatticeGraph.chain(4)
    with pytest.raises(InvalidRegionError):
        region_distance(lat, [], [1])
    with pytest.raises(InvalidRegionError):
        region_distance(lat, [1, 2], [2])
    with pytest.raises(InvalidRegionError):
        region_distance(lat, [9], [0])


def test_ramp_values():
    assert ramp(0.0) == 0.0
    assert ramp(0.5) == 1.0
    assert ramp(-3.0) == -1.0
    assert np.all(ramp(np.linspace(-2, 2, 41)) <= 1)


def test_convex_symmetric_line():
    lat = LatticeGraph.from_coords(np.arange(-4.0, 5.0), connect=True)
    X, Y = [8], [0]
    prof = separation_convex(lat, X, Y)
    np.testing.assert_allclose(prof.s, np.arange(-4.0, 5.0), atol=1e-12)
    np.testing.assert_allclose(prof.w0, [0.0], atol=1e-12)
    np.testing.assert_allclose(prof.b, [1.0])


def test_convex_site_on_hyperplane():
    lat = LatticeGraph.from_coords(np.array([[2.0, 0], [-2, 0], [0, 1]]))
    prof = separation_convex(lat, [0], [1])
    assert prof.s[2] == pytest.approx(0.0, abs=1e-12)
    assert prof.labels[2] == "W0"


def _qp_hull_distance(A, B):
    # Independent oracle: minimise |A^T l - B^T m| over the two simplices.
    nA, nB = len(A), len(B)

    def obj(z):
        return np.sum((z[:nA] @ A - z[nA:] @ B) ** 2)

    cons = [{"type": "eq", "fun": lambda z: z[:nA].sum() - 1}, {"type": "eq", "fun": lambda z: z[nA:].sum() - 1}]
    z0 = np.r_[np.full(nA, 1 / nA), np.full(nB, 1 / nB)]
    res = minimize(obj, z0, bounds=[(0, 1)] * (nA + nB), constraints=cons, method="SLSQP",
                   options={"ftol": 1e-15, "maxiter": 500})
    return float(np.sqrt(max(res.fun, 0.0)))


def test_hull_distance_interior_points():
    # Closest points of the two segments are interior to both.
    A = np.array([[0.0, 2.0], [4.0, 2.0]])
    B = np.array([[1.0, 0.0], [3.0, -1.0]])
    a, b, dist = hull_closest_points(A, B)
    assert dist == pytest.approx(_qp_hull_distance(A, B), abs=1e-6)
    assert dist == pytest.approx(2.0, abs=1e-12)
    np.testing.assert_allclose(a, [1.0, 2.0], atol=1e-12)
    np.testing.assert_allclose(b, [1.0, 0.0], atol=1e-12)


@given(st.integers(0, 10_000))
def test_hull_distance_matches_qp(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(rng.integers(1, 5), 2))
    B = rng.normal(size=(rng.integers(1, 5), 2)) + np.array([4.0, 0.0])
    _, _, dist = hull_closest_points(A, B)
    assert dist == pytest.approx(_qp_hull_distance(A, B), abs=1e-5)


def test_convex_degenerate():
    lat = LatticeGraph.from_coords(np.array([[0.0, 0], [2, 0], [1, 1], [1, -1]]))
    with pytest.raises(GeometryDegenerateError):
        separation_convex(lat, [0, 1], [2, 3])


def test_convex_hull_closer_than_sites():
    # Hull distance 1 but site distance sqrt(2): no affine profile reaches d/2 on X.
    lat = LatticeGraph.from_coords(np.array([[-1.0, 1], [1, 1], [0, 0]]))
    with pytest.raises(GeometryDegenerateError):
        separation_convex(lat, [0, 1], [2])
    prof = separation_general(lat, [0, 1], [2])
    assert prof.separation_slack() >= -1e-12


def test_half_gap_equidistant_site():
    lat = LatticeGraph.chain(8)
    prof = separation_general(lat, [5], [1])
    assert prof.s[3] == 0.0 and prof.labels[3] == "W0"


def test_half_gap_closed_form():
    lat = LatticeGraph.chain(8)
    prof = separation(lat, [7], [0], "half-gap-surrogate")
    np.testing.assert_allclose(prof.s, np.arange(8) - 3.5, atol=1e-15)


def test_decompose_chain_by_hand():
    lat = LatticeGraph.chain(8)
    prof = separation(lat, [7], [0], "convex-hull")
    assert prof.labels[7] == "X_inf"
    expected = ["Y_inf", "W0", "W0", "W0", "W0", "W0", "W0", "X_inf"]
    assert list(prof.labels) == expected
    # closed outer sets
    assert list(decompose(np.array([-1.0, -0.999, 0.0, 1.0]), 2.0)) == ["Y_inf", "W0", "W0", "X_inf"]


def _sampling_tol(prof):
    # the zero set is sampled at pitch d/64; distances to it are exact only up to that pitch
    return prof.d_XY / 64


def test_L_shaped_regions_both_strategies():
    lat = LatticeGraph.grid((7, 7))
    idx = {tuple(c): i for i, c in enumerate(lat.coords.astype(int))}
    X = [idx[(6, k)] for k in range(3)] + [idx[(k, 0)] for k in range(4, 6)]
    Y = [idx[(0, k)] for k in range(3, 7)] + [idx[(k, 6)] for k in range(1, 3)]
    for strategy in ("half-gap-surrogate", "signed-distance-to-S"):
        prof = separation(lat, X, Y, strategy)
        tol = 1e-12 if strategy == "half-gap-surrogate" else _sampling_tol(prof)
        assert prof.lipschitz_excess(lat) <= tol
        assert prof.separation_slack() >= -tol
        assert np.all(prof.ramp[X] == 1.0) and np.all(prof.ramp[Y] == -1.0)


def test_signed_distance_rejects_3d():
    lat = LatticeGraph.grid((2, 2, 3))
    with pytest.raises(ValueError):
        separation_general(lat, [0], [11], "signed-distance-to-S")


def test_profile_csv(tmp_path):
    lat = LatticeGraph.grid((3, 3))
    prof = separation(lat, [8], [0])
    path = tmp_path / "p.csv"
    prof.to_csv(path, lat)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["site_index", "x0", "x1", "s", "ramp", "label"]
    assert len(rows) == 10 and rows[9][-1] == "X_inf"


@st.composite
def lattice_regions(draw, max_dim=2):
    D = draw(st.integers(1, max_dim))
    shape = tuple(draw(st.integers(2, 5)) for _ in range(D))
    lat = LatticeGraph.grid(shape)
    sites = draw(st.permutations(range(lat.L)))
    nx = draw(st.integers(1, max(1, lat.L // 3)))
    ny = draw(st.integers(1, max(1, lat.L // 3)))
    return lat, list(sites[:nx]), list(sites[nx:nx + ny])


@given(lattice_regions(), st.sampled_from(["half-gap-surrogate", "signed-distance-to-S"]))
def test_general_invariants(data, strategy):
    lat, X, Y = data
    prof = separation(lat, X, Y, strategy)
    tol = 1e-12 if strategy == "half-gap-surrogate" else _sampling_tol(prof)
    assert prof.lipschitz_excess(lat) <= tol
    assert prof.separation_slack() >= -tol
    assert np.all(prof.ramp[X] == 1.0) and np.all(prof.ramp[Y] == -1.0)
    assert np.all(np.abs(prof.ramp) <= 1.0)


@given(lattice_regions(max_dim=3))
def test_convex_agrees_with_general_on_labels(data):
    lat, X, Y = data
    try:
        conv = separation_convex(lat, X, Y)
    except GeometryDegenerateError:
        return
    assert conv.lipschitz_excess(lat) <= 1e-12
    gen = separation_general(lat, X, Y)
    XY = X + Y
    assert list(conv.labels[XY]) == list(gen.labels[XY])
    # monotone along b
    order = np.argsort(lat.coords @ conv.b)
    assert np.all(np.diff(conv.ramp[order]) >= -1e-12)
