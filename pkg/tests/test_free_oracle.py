import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from massmat.evolution import transport_sweep
from massmat.fock import build_basis, threshold_count
from massmat.free_oracle import (OneBodyChain, binomial_envelope, cluster_probability, free_massmat_check,
                                 one_body_amplitude, product_state, tail_weight)
from massmat.geometry import LatticeGraph
from massmat.hamiltonian import PotentialSpec, assemble, nearest_neighbor


def delta(L, x=0):
    f = np.zeros(L)
    f[x] = 1.0
    return f


def test_amplitude_examples():
    c = OneBodyChain(5)
    assert one_body_amplitude(c, delta(5), 0, 0.0) == 1.0
    two = OneBodyChain(2)
    for t in (0.3, 1.0, 2.5):
        amp = one_body_amplitude(two, delta(2), 1, t)
        assert amp == pytest.approx(-1j * np.sin(t), abs=1e-14)


@given(st.integers(2, 8), st.floats(0, 5), st.integers(0, 100))
def test_unitarity(L, t, seed):
    rng = np.random.default_rng(seed)
    f = rng.normal(size=L) + 1j * rng.normal(size=L)
    f /= np.linalg.norm(f)
    c = OneBodyChain(L, fields=rng.normal(size=L))
    total = sum(abs(one_body_amplitude(c, f, x, t)) ** 2 for x in range(L))
    assert total == pytest.approx(1.0, abs=1e-12)


def test_cluster_probability_limits():
    c = OneBodyChain(6)
    assert cluster_probability(c, delta(6), 2, 0.5, 3, 0.0) == 0.0
    N, r, t = 4, 3, 1.7
    p = tail_weight(c, delta(6), r, t)
    assert threshold_count(0.1, N) == 1
    assert cluster_probability(c, delta(6), r, 0.1, N, t) == pytest.approx(1 - (1 - p) ** N, abs=1e-14)
    with pytest.raises(ValueError):
        cluster_probability(c, delta(6), r, 1.0, N, t)


@settings(max_examples=50)
@given(st.integers(3, 8), st.integers(1, 6), st.floats(0.05, 0.95), st.floats(0, 4), st.data())
def test_probability_range_and_envelope(L, N, theta, t, data):
    r = data.draw(st.integers(1, L - 1))
    c = OneBodyChain(L)
    P = cluster_probability(c, delta(L), r, theta, N, t)
    p = tail_weight(c, delta(L), r, t)
    assert 0.0 <= P <= 1.0 + 1e-14
    assert P <= binomial_envelope(p, theta, N) * (1 + 1e-12) + 1e-300
    # monotone in p: a larger tail (smaller r) never lowers the probability
    if r > 1:
        assert cluster_probability(c, delta(L), r - 1, theta, N, t) >= P - 1e-14


@pytest.mark.parametrize("L,N", [(4, 2), (5, 3), (6, 3), (6, 1)])
def test_engine_agreement(L, N):
    lat = LatticeGraph.chain(L)
    fields = np.linspace(-0.3, 0.3, L)
    chain = OneBodyChain(L, fields=fields)
    b = build_basis("boson", L, N)
    H = assemble(b, nearest_neighbor(lat), PotentialSpec("zero", fields=fields))
    ts = np.linspace(0, 3, 16)
    for r in range(1, L):
        res = transport_sweep(H, b, product_state(b, delta(L)), list(range(r, L)), [0], 0.0, 0.5, ts)
        oracle = [cluster_probability(chain, delta(L), r, 0.5, N, t) for t in ts]
        np.testing.assert_allclose(res.amplitudes, oracle, atol=1e-8)


def test_product_state_delocalised():
    L, N = 4, 2
    f = np.array([0.5, 0.5j, -0.5, 0.5])
    b = build_basis("boson", L, N)
    psi = product_state(b, f)
    assert np.linalg.norm(psi) == pytest.approx(1.0, abs=1e-14)
    k = b.lookup(np.array([2, 0, 0, 0]))[0]
    assert psi[k] == pytest.approx(np.sqrt(2 / 2) * 0.25, abs=1e-14)


def test_deep_outside_cone():
    c = OneBodyChain(30)
    assert cluster_probability(c, delta(30), 25, 0.5, 4, 1.0) < 1e-12


def test_N_scaling_outside_cone():
    c = OneBodyChain(30)
    r, t, theta = 20, 2.0, 0.5
    lp2 = np.log(cluster_probability(c, delta(30), r, theta, 2, t))
    lp6 = np.log(cluster_probability(c, delta(30), r, theta, 6, t))
    ratio = lp6 / lp2
    expected = threshold_count(theta, 6) / threshold_count(theta, 2)
    assert ratio == pytest.approx(expected, rel=0.1)


def test_free_massmat_check():
    c = OneBodyChain(14)
    rep = free_massmat_check(c, 0.5, 4, range(1, 13), np.linspace(1, 3, 5))
    assert rep.dominates and rep.envelope_ok
    assert rep.C > 0 and rep.v_prime >= 0
    assert len(rep.rows) == 12 * 5
    inside = rep.exhibited_bound[rep.r <= 1]
    assert np.all(inside >= 1.0)
    with pytest.raises(ValueError):
        free_massmat_check(c, 0.5, 4, [0, 1], [1.0])
