import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from massmat.bounds import log_norm_bound
from massmat.evolution import cone_norm
from massmat.fock import build_basis
from massmat.geometry import LatticeGraph, separation
from massmat.hamiltonian import PotentialSpec, assemble, nearest_neighbor, velocity_v
from massmat.tilting import (TiltingOverflowError, deformed_hopping, imag_tilted_hopping_norm, log_bound_factors,
                             projector_tilt_bounds, tilting_diagonal, tilting_weights,
                             verify_deformed_propagator)


def chain_setup(L=5, X=(4,), Y=(0,), strategy="convex-hull"):
    lat = LatticeGraph.chain(L)
    return lat, separation(lat, list(X), list(Y), strategy)


def test_weights_on_regions():
    lat, prof = chain_setup()
    w = tilting_weights(prof, 0.8)
    assert w.mu == 0.5 * 0.8 * 4
    assert w.site_weights[4] == pytest.approx(np.exp(w.mu))
    assert w.site_weights[0] == pytest.approx(np.exp(-w.mu))
    assert np.all(w.site_weights > 0)


def test_identity_at_mu_zero():
    lat, prof = chain_setup()
    b = build_basis("boson", 5, 3)
    T, Ti = tilting_diagonal(b, tilting_weights(prof, 0.0))
    np.testing.assert_array_equal(T, np.ones(b.dim))


def test_single_site_value_and_inverse():
    lat, prof = chain_setup(4, (3,), (0,))
    b = build_basis("boson", 4, 2)
    w = tilting_weights(prof, 1.3)
    T, Ti = tilting_diagonal(b, w)
    for x in range(4):
        occ = np.zeros(4, int)
        occ[x] = 2
        k = b.lookup(occ)[0]
        assert T[k] == pytest.approx(np.exp(2 * w.mu * prof.ramp[x]), rel=1e-14)
    np.testing.assert_allclose(T * Ti, 1.0, atol=1e-14)


def test_overflow_guard():
    lat, prof = chain_setup(6, (5,), (0,))
    b = build_basis("boson", 6, 40)
    w = tilting_weights(prof, 8.0)
    with pytest.raises(TiltingOverflowError):
        tilting_diagonal(b, w)
    assert np.isfinite(tilting_diagonal(b, w, log=True)).all()


def test_deformed_hopping_zero_mu():
    lat, prof = chain_setup()
    dh = deformed_hopping(nearest_neighbor(lat), tilting_weights(prof, 0.0), lat)
    assert np.all(dh.matrix == 0)


@pytest.mark.parametrize("a", [0.25, 0.5, 1.0, 2.0])
@pytest.mark.parametrize("strategy", ["convex-hull", "half-gap-surrogate"])
def test_deformed_hopping_entrywise_and_schur(a, strategy):
    lat, prof = chain_setup(9, (8,), (0, 1), strategy)
    J = nearest_neighbor(lat, 0.7)
    dh = deformed_hopping(J, tilting_weights(prof, a), lat)
    r = lat.distances()
    assert np.all(np.abs(dh.matrix) <= np.abs(J.entries) * np.sinh(a * np.minimum(prof.d_XY, r)) + 1e-14)
    assert dh.schur_bound <= a * velocity_v(J, lat, a) * (1 + 1e-12)
    assert dh.norm <= dh.schur_bound + 1e-12
    np.testing.assert_allclose(dh.matrix, dh.matrix.conj().T, atol=1e-15)


def test_projector_bounds_trivial_cases():
    lat, prof = chain_setup()
    b = build_basis("boson", 5, 3)
    pb = projector_tilt_bounds(b, tilting_weights(prof, 0.0), [4], [0], 0.0, 0.5)
    assert pb.lhs == (1.0, 1.0) and pb.rhs == (1.0, 1.0)
    pb = projector_tilt_bounds(b, tilting_weights(prof, 1.0), [4], [0], 0.0, 1.0)
    w = tilting_weights(prof, 1.0)
    assert pb.log_lhs_X == pytest.approx(-w.mu * 3) and pb.log_lhs_X == pytest.approx(pb.log_rhs_X)


@settings(max_examples=40)
@given(st.integers(3, 6), st.integers(1, 4), st.floats(0.05, 2.0), st.floats(0.0, 0.6), st.floats(0.05, 1.0),
       st.integers(0, 1000), st.sampled_from(["half-gap-surrogate", "convex-hull"]))
def test_projector_bounds_random(L, N, a, alpha, gap, seed, strategy):
    beta = min(1.0, alpha + gap)
    if not alpha < beta:
        return
    rng = np.random.default_rng(seed)
    lat = LatticeGraph.chain(L)
    sites = rng.permutation(L)
    k = rng.integers(1, L)
    X = sorted(sites[:k].tolist())
    Y = sorted(sites[k:].tolist())
    try:
        prof = separation(lat, X, Y, strategy)
    except ValueError:
        return
    pb = projector_tilt_bounds(build_basis("boson", L, N), tilting_weights(prof, a), X, Y, alpha, beta)
    assert pb.holds()


def test_potential_commutes_with_tilting():
    lat, prof = chain_setup()
    b = build_basis("boson", 5, 2)
    H = assemble(b, nearest_neighbor(lat, 0.0), PotentialSpec.bose_hubbard(1.0))
    chk = verify_deformed_propagator(H, b, tilting_weights(prof, 1.0), 1.0, 0.0, np.linspace(0, 2, 5))
    np.testing.assert_allclose(chk.measured, 1.0, atol=1e-12)


@pytest.mark.parametrize("U", [0.0, 1.0])
def test_deformed_propagator_bound(U):
    lat, prof = chain_setup()
    b = build_basis("boson", 5, 2)
    H = assemble(b, nearest_neighbor(lat), PotentialSpec.bose_hubbard(U))
    a = 1.0
    chk = verify_deformed_propagator(H, b, tilting_weights(prof, a), a, velocity_v(nearest_neighbor(lat), lat, a),
                                     np.linspace(0, 2, 21))
    assert chk.measured[0] == pytest.approx(1.0) and chk.bound[0] == 1.0
    assert chk.ok


def test_imag_part_bound():
    lat, prof = chain_setup(6, (5,), (0,))
    J = nearest_neighbor(lat)
    for N in (1, 2, 3):
        b = build_basis("boson", 6, N)
        for a in (0.5, 1.0, 2.0):
            w = tilting_weights(prof, a)
            im = imag_tilted_hopping_norm(b, J, w)
            dh = deformed_hopping(J, w, lat)
            assert im <= N * dh.norm + 1e-10
            assert N * dh.norm <= N * a * velocity_v(J, lat, a) + 1e-10


def test_factorisation_and_composition():
    lat, prof = chain_setup(6, (5,), (0,))
    b = build_basis("boson", 6, 2)
    J = nearest_neighbor(lat)
    H = assemble(b, J, PotentialSpec.bose_hubbard(1.0))
    a, alpha, beta = 0.7, 0.0, 0.5
    v = velocity_v(J, lat, a)
    w = tilting_weights(prof, a)
    pb = projector_tilt_bounds(b, w, [5], [0], alpha, beta)
    for t in (0.5, 1.0, 2.0):
        chk = verify_deformed_propagator(H, b, w, a, v, [t])
        lhs = pb.lhs[0] * chk.measured[0] * pb.lhs[1]
        assert cone_norm(H, b, [5], [0], alpha, beta, t).value <= lhs * (1 + 1e-10)
        f1, f2, f3, total = log_bound_factors(w.mu, a, v, 2, alpha, beta, t)
        assert total == pytest.approx(log_norm_bound(a, v, alpha, beta, prof.d_XY, 2, t), rel=1e-14, abs=1e-14)
