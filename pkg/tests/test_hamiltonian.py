import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import minimize_scalar

from massmat.fock import build_basis
from massmat.geometry import LatticeGraph
from massmat.hamiltonian import (BoundParams, HoppingMatrix, InvalidModelError, NoSupersonicSeparationError, Piece,
                                 PotentialSpec, assemble, assemble_schedule, custom_hopping, exponential_decay,
                                 kappa, nearest_neighbor, optimal_a, schedule_velocity, velocity_v)


def test_velocity_examples():
    lat = LatticeGraph.chain(6)
    J = nearest_neighbor(lat, 1.0)
    assert velocity_v(J, lat, 1.0) == pytest.approx(2 * np.sinh(1.0), abs=1e-12)
    assert velocity_v(J, lat, 1.0) == pytest.approx(2.350402, abs=1e-6)
    assert kappa(J, lat) == 2.0
    assert abs(velocity_v(J, lat, 1e-4) - kappa(J, lat)) <= 1e-6 * kappa(J, lat)
    Z = nearest_neighbor(lat, 0.0)
    assert velocity_v(Z, lat, 0.7) == 0.0
    one = LatticeGraph.chain(1)
    assert kappa(nearest_neighbor(one), one) == 0.0


def test_velocity_grid_closed_form():
    lat = LatticeGraph.grid((4, 4))
    J = nearest_neighbor(lat, 0.5)
    for a in (0.25, 1.0, 2.0):
        assert velocity_v(J, lat, a) == pytest.approx(2 * 2 * 0.5 * np.sinh(a) / a, rel=1e-13)


def test_exponential_decay_rate_guard():
    lat = LatticeGraph.chain(5)
    J = exponential_decay(lat, 1.0, 1.5)
    velocity_v(J, lat, 1.0)
    with pytest.raises(InvalidModelError):
        velocity_v(J, lat, 1.5)
    with pytest.raises(InvalidModelError):
        exponential_decay(lat, 1.0, 0.0)


@st.composite
def hopping_matrices(draw):
    L = draw(st.integers(2, 6))
    seed = draw(st.integers(0, 10_000))
    rng = np.random.default_rng(seed)
    lat = LatticeGraph.from_coords(rng.permutation(L * 2)[:L].astype(float), connect=False)
    A = rng.normal(size=(L, L)) + 1j * rng.normal(size=(L, L))
    A = (A + A.conj().T) / 2
    A *= np.exp(-lat.distances())
    return lat, custom_hopping(A)


@given(hopping_matrices(), st.floats(0.01, 3.0), st.floats(0.01, 3.0))
def test_velocity_order(data, a, b):
    lat, J = data
    k = kappa(J, lat)
    lo, hi = sorted((a, b))
    assert velocity_v(J, lat, lo) <= velocity_v(J, lat, hi) + 1e-12
    assert velocity_v(J, lat, lo) > k


def test_hermiticity_check():
    b = build_basis("boson", 2, 1)
    with pytest.raises(InvalidModelError):
        assemble(b, HoppingMatrix(np.array([[0, 1], [2, 0]])))
    with pytest.raises(InvalidModelError):
        assemble(b, nearest_neighbor(LatticeGraph.chain(3)))


def test_potential_only_diagonal():
    lat = LatticeGraph.chain(3)
    b = build_basis("boson", 3, 3)
    H = assemble(b, nearest_neighbor(lat, 0.0), PotentialSpec.bose_hubbard(2.0, 0.5)).toarray()
    n = b.states.astype(float)
    expected = np.sum(2.0 * n * (n - 1) - 0.5 * n, axis=1)
    np.testing.assert_array_equal(H, np.diag(expected))


def test_single_particle_sector():
    lat = LatticeGraph.chain(4)
    fields = [0.1, -0.2, 0.3, 0.0]
    b = build_basis("boson", 4, 1)
    H = assemble(b, nearest_neighbor(lat, 1.0), PotentialSpec("zero", fields=fields)).toarray()
    h = nearest_neighbor(lat).entries + np.diag(fields)
    perm = [int(np.argmax(s)) for s in b.states]
    np.testing.assert_allclose(H, h[np.ix_(perm, perm)], atol=1e-15)


def test_hand_assembled_L3_N2():
    # states (n0, n1, n2) and the nonzero matrix elements of sum_<xy> a_x^dagger a_y
    lat = LatticeGraph.chain(3)
    b = build_basis("boson", 3, 2)
    r2 = np.sqrt(2.0)
    pairs = {((2, 0, 0), (1, 1, 0)): r2, ((0, 2, 0), (1, 1, 0)): r2, ((0, 2, 0), (0, 1, 1)): r2,
             ((0, 0, 2), (0, 1, 1)): r2, ((1, 1, 0), (1, 0, 1)): 1.0, ((0, 1, 1), (1, 0, 1)): 1.0}
    H_hand = np.zeros((6, 6))
    for (s1, s2), v in pairs.items():
        i, j = b.lookup(np.array([s1, s2]))
        H_hand[i, j] = H_hand[j, i] = v
    H = assemble(b, nearest_neighbor(lat, 1.0)).toarray()
    np.testing.assert_array_equal(H, H_hand)


@given(st.sampled_from(["boson", "fermion"]), st.integers(2, 5), st.integers(1, 3), st.integers(0, 1000))
def test_assembled_hermitian(stat, L, N, seed):
    if stat == "fermion" and N > L:
        return
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(L, L)) + 1j * rng.normal(size=(L, L))
    b = build_basis(stat, L, N)
    H = assemble(b, custom_hopping(A + A.conj().T), PotentialSpec.bose_hubbard(rng.uniform(0, 3))).toarray()
    assert np.max(np.abs(H - H.conj().T)) == 0.0


def test_custom_potential():
    b = build_basis("boson", 2, 2)
    V = PotentialSpec("custom", func=lambda n: n[:, 0] * n[:, 1])
    H = assemble(b, custom_hopping(np.zeros((2, 2))), V).toarray()
    k = b.lookup(np.array([1, 1]))[0]
    assert H[k, k] == 1.0
    with pytest.raises(InvalidModelError):
        PotentialSpec("custom", func=lambda n: 1j * n[:, 0]).evaluate(b.states)


def test_optimal_a_examples():
    assert optimal_a(1.0, 1, 1.0, 4.0, 1.0).a_star == pytest.approx(np.arccosh(2.0), abs=1e-12)
    assert optimal_a(1.0, 1, 1.0, 4.0, 1.0).a_star == pytest.approx(1.316958, abs=1e-6)
    with pytest.raises(NoSupersonicSeparationError):
        optimal_a(1.0, 1, 1.0, 2.0, 1.0)
    with pytest.raises(NoSupersonicSeparationError):
        optimal_a(1.0, 1, 1.0, 2.0, 0.0)


@given(st.floats(0.1, 2.0), st.integers(1, 3), st.floats(0.1, 1.0), st.floats(0.1, 3.0), st.floats(1.05, 20.0))
def test_optimal_a_vs_golden(J, D, dba, t, ratio):
    d = ratio * 2 * D * J * t / dba
    opt = optimal_a(J, D, dba, d, t)

    def neg_gain(a):
        return -(a * dba * d - 2 * D * J * np.sinh(a) * t)

    # three-point bracket from a coarse grid, independent of the closed form
    grid = np.linspace(1e-9, 10.0, 2001)
    k = int(np.argmin([neg_gain(a) for a in grid]))
    k = min(max(k, 1), len(grid) - 2)
    res = minimize_scalar(neg_gain, bracket=(grid[k - 1], grid[k], grid[k + 1]), method="golden", tol=1e-12)
    assert opt.a_star == pytest.approx(res.x, abs=1e-6)
    assert opt.exponent <= 0


def test_bound_params_validation():
    BoundParams(1.0, 2.35, 2.0, 0.0, 0.5, 3.0, 2)
    with pytest.raises(ValueError):
        BoundParams(1.0, 2.35, 2.0, 0.5, 0.5, 3.0, 2)
    with pytest.raises(ValueError):
        BoundParams(0.0, 2.35, 2.0, 0.0, 0.5, 3.0, 2)
    with pytest.raises(ValueError):
        BoundParams(1.0, 1.0, 2.0, 0.0, 0.5, 3.0, 2)
    lat = LatticeGraph.chain(4)
    p = BoundParams.from_model(nearest_neighbor(lat), lat, 1.0, 0.0, 1.0, 3.0, 2)
    assert p.v == pytest.approx(2 * np.sinh(1.0))


def test_schedule():
    lat = LatticeGraph.chain(4)
    b = build_basis("boson", 4, 2)
    sched = [Piece(0.5, nearest_neighbor(lat, 1.0)), Piece(0.5, nearest_neighbor(lat, 2.0),
                                                          PotentialSpec.bose_hubbard(1.0))]
    pieces = assemble_schedule(b, sched)
    assert [d for d, _ in pieces] == [0.5, 0.5]
    assert schedule_velocity(sched, lat, 1.0) == pytest.approx(4 * np.sinh(1.0))
    with pytest.raises(InvalidModelError):
        assemble_schedule(b, [Piece(-1.0, nearest_neighbor(lat))])
