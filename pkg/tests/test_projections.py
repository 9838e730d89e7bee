import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlskam.checks import random_hamiltonian, random_torus
from nlskam.dynamics import sample_torus
from nlskam.hamiltonian import Hamiltonian, WeightParams
from nlskam.indexing import ModeSet
from nlskam.poisson import vector_field
from nlskam.projections import (
    TorusData,
    bourgain_representation,
    c_kappa,
    counterterm_extract,
    counterterm_hamiltonian,
    dumps_torus,
    extend_projection_affine,
    loads_torus,
    project_degree,
    project_degree_geq,
    project_degree_leq,
    project_minus2_K,
)

seeds = st.integers(0, 2**32 - 1)
M3 = ModeSet(3)


def action(j, modes=M3):
    return Hamiltonian.action(modes, j)


def shifted(j, I, modes=M3):
    return action(j, modes) - I


def re_pair(j, k, modes=M3):
    return 0.5 * (Hamiltonian.monomial(modes, {j: 1}, {k: 1}) + Hamiltonian.monomial(modes, {k: 1}, {j: 1}))


def torus(actions, modes=M3, kappa=0.5):
    return TorusData(modes, np.asarray(actions, dtype=float), kappa)


@pytest.mark.parametrize("k2, expected", [(0.25, 0.5), (0.5, 1.0), (math.exp(-0.5), 2.0)])
def test_c_kappa(k2, expected):
    assert c_kappa(math.sqrt(k2)) == pytest.approx(expected, rel=1e-14)


def test_c_kappa_domain():
    for bad in (0.0, 1.0, 1.5):
        with pytest.raises(ValueError):
            c_kappa(bad)


def test_worked_example_components():
    I = np.array([0.0, 0.0, 0.0, 0.03, 0.02, 0.01, 0.005])
    T = torus(I)
    I1, I2 = I[M3.index(1)], I[M3.index(2)]
    R = re_pair(1, 3)
    H = action(1) * action(2) * action(2) * R
    h_m2 = I1 * I2**2 * R
    h_0 = (I2**2 * shifted(1, I1) + 2 * I1 * I2 * shifted(2, I2)) * R
    assert project_degree(H, T, -2).allclose(h_m2)
    assert project_degree(H, T, 0).allclose(h_0)
    assert project_degree_geq(H, T, 2).allclose(H - h_m2 - h_0)


def test_zero_torus_keeps_pure_mass_blocks():
    rng = np.random.default_rng(0)
    modes = ModeSet(2)
    H = random_hamiltonian(modes, rng, n_terms=8)
    T = TorusData(modes, np.zeros(5))
    for q in range(0, 4):
        P = project_degree(H, T, 2 * q - 2)
        m = np.minimum(H.alpha, H.beta).sum(1)
        assert P.allclose(H.select(m == q))


def test_low_order_vanishing_examples():
    I = np.array([0.0, 0.0, 0.0, 0.03, 0.02, 0.0, 0.0])
    T = torus(I)
    H = random_hamiltonian(M3, np.random.default_rng(1), max_mass=2)
    assert project_degree_geq(H, T, -2).allclose(H)
    # |alpha| = |beta| <= 2 gives degrees at most 2
    assert project_degree_geq(H, T, 4).is_zero()
    G = shifted(1, I[M3.index(1)]) * shifted(1, I[M3.index(1)]) * re_pair(1, 2)
    assert project_degree_leq(G, T, 0).is_zero()


def test_counterterm_extract_examples():
    I = np.array([0.0, 0.0, 0.0, 0.03, 0.02, 0.01, 0.0])
    T = torus(I)
    lam = np.array([0.0, 1.0, -2.0, 0.5, 0.0, 3.0, 0.0])
    assert np.allclose(counterterm_extract(counterterm_hamiltonian(lam, T), T).lam, lam)
    quartic = action(1) * action(1)
    got = counterterm_extract(quartic, T).lam
    expected = np.zeros(7)
    expected[M3.index(1)] = 2 * I[M3.index(1)]
    assert np.allclose(got, expected)
    assert np.allclose(counterterm_extract(re_pair(1, 2) * action(0), T).lam, 0)


def test_extend_projection_affine():
    I = np.array([0.0, 0.0, 0.01, 0.03, 0.02, 0.0, 0.0])
    T = torus(I)
    omega = np.array([9.1, 4.2, 0.3, 1.1, 4.0, 9.0, 0.0])
    parts = extend_projection_affine(omega, T)
    assert parts["minus2_K"] == pytest.approx(float(omega @ I))
    D = Hamiltonian.diagonal(M3, omega)
    assert project_minus2_K(D, T) == pytest.approx(omega @ I)
    assert np.allclose(counterterm_extract(D, T).lam, omega)
    assert extend_projection_affine(np.zeros(7), T)["minus2_K"] == 0
    Z = torus(np.zeros(7))
    assert extend_projection_affine(omega, Z)["minus2_K"] == 0
    assert project_degree(D, Z, 0).allclose(D)


def test_torus_serialization_roundtrip():
    modes = ModeSet(2, frozenset({-1, 1}))
    T = TorusData.profile(modes, 0.05, WeightParams(), kappa=0.4)
    back = loads_torus(dumps_torus(T))
    assert back.modes == T.modes
    assert np.array_equal(back.actions, T.actions)
    assert back.kappa == T.kappa and back.r == T.r


def test_torus_validity():
    params = WeightParams()
    T = TorusData.profile(ModeSet(2), 0.1, params, kappa=0.5)
    assert T.check() == []
    too_big = TorusData(ModeSet(2), T.actions * 1.5, 0.5, 0.1, params)
    assert too_big.check()
    with pytest.raises(ValueError):
        TorusData(ModeSet(1), [-1.0, 0, 0])


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_bourgain_representation_agrees(seed):
    rng = np.random.default_rng(seed)
    modes = ModeSet(2)
    H = random_hamiltonian(modes, rng)
    T = random_torus(modes, rng, 0.5)
    for q in range(0, 4):
        direct = project_degree_geq(H, T, 2 * q - 2)
        rep = bourgain_representation(H, T, q)
        assert rep.allclose(direct, rtol=1e-10, atol=1e-14 * H.max_abs())


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_projection_algebra(seed):
    rng = np.random.default_rng(seed)
    modes = ModeSet(2)
    H = random_hamiltonian(modes, rng)
    T = random_torus(modes, rng, float(rng.uniform(0.2, 0.7)))
    degs = range(-2, 7, 2)
    parts = {d: project_degree(H, T, d) for d in degs}
    total = Hamiltonian.zero(modes)
    for d, P in parts.items():
        total = total + P
        assert project_degree(P, T, d).allclose(P, atol=1e-13 * H.max_abs())
        for e in degs:
            if e != d:
                assert project_degree(P, T, e).max_abs() <= 1e-12 * H.max_abs()
    assert total.allclose(H, atol=1e-13 * H.max_abs())


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_high_degree_part_vanishes_to_first_order_on_torus(seed):
    rng = np.random.default_rng(seed)
    modes = ModeSet(2)
    H = random_hamiltonian(modes, rng)
    T = random_torus(modes, rng, 0.5)
    G = project_degree_geq(H, T, 2)
    for u in sample_torus(T, rng, 4):
        assert abs(G(u)) <= 1e-9 * max(H.max_abs(), 1)
        assert np.max(np.abs(vector_field(G, u).values)) <= 1e-9 * max(H.max_abs(), 1)
