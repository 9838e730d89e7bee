import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from nlskam.checks import random_hamiltonian
from nlskam.hamiltonian import (
    FrequencyVector,
    Hamiltonian,
    LipschitzFamily,
    WeightParams,
    dumps,
    eta_majorant,
    lipschitz_weighted_norm,
    loads,
    norm,
    project_index_set,
    project_K,
    project_mass_above,
    project_R,
    u0_weight,
)
from nlskam.indexing import ModeSet, momentum

seeds = st.integers(0, 2**32 - 1)


def sym_u0(j, r):
    jb = max(abs(j), 1)
    return sp.Integer(r) * sp.Integer(jb) ** -2 * sp.exp(-sp.sqrt(jb))


def pair(modes, j, k, c=1.0):
    return Hamiltonian.monomial(modes, {j: 1}, {k: 1}, c) + Hamiltonian.monomial(modes, {k: 1}, {j: 1}, np.conj(c))


@pytest.mark.parametrize("j, r", [(0, 1), (1, 2), (3, 1)])
def test_u0_weight_matches_symbolic(params, j, r):
    assert u0_weight(j, r, params) == pytest.approx(float(sym_u0(j, r)), rel=1e-14)


def test_u0_weight_frozen_values(params):
    assert u0_weight(0, 1.0, params) == pytest.approx(0.367879, abs=1e-6)
    assert u0_weight(1, 2.0, params) == pytest.approx(0.735759, abs=1e-6)
    assert u0_weight(5, 0, params) == 0


def test_params_validation():
    for bad in (dict(p=1.0), dict(s=0.0), dict(theta=1.0), dict(a=-1.0), dict(r=0.0)):
        with pytest.raises(ValueError):
            WeightParams(**bad)


def test_frequency_vector_bounds(modes2):
    with pytest.raises(ValueError):
        FrequencyVector(modes2, [0, 0, 0.6, 0, 0])
    w = FrequencyVector.from_omega(modes2, [4.1, 1.2, -0.3, 1.0, 4.0])
    assert np.allclose(w.xi, [0.1, 0.2, -0.3, 0.0, 0.0])


def test_norm_counterterm(params, modes2):
    lam = np.zeros(5)
    lam[modes2.index(1)], lam[modes2.index(2)] = 2.0, -3.0
    H = Hamiltonian.diagonal(modes2, lam)
    I = np.linspace(0.1, 0.5, 5)
    H = H + Hamiltonian.constant(modes2, -float(lam @ I))
    assert norm(H, 1.0, 1.0, 0.0, params) == pytest.approx(3.0, rel=1e-15)


def test_norm_zero(params, modes2):
    assert norm(Hamiltonian.zero(modes2), 1.0, 1.0, 0.0, params) == 0.0


def test_norm_real_pair_symbolic(params, modes2):
    c = 0.7 - 0.2j
    H = pair(modes2, 1, 2, c)
    # sup over j of sum |H| beta_j u0^(alpha+beta-2e_j): only one term per j
    u1, u2 = sym_u0(1, 1), sym_u0(2, 1)
    expected = abs(c) * float(sp.Max(u1 / u2, u2 / u1))
    assert norm(H, 1.0, 1.0, 0.0, params) == pytest.approx(expected, rel=1e-14)
    assert expected == pytest.approx(abs(c) * 4 * math.exp(math.sqrt(2) - 1), rel=1e-14)


def test_eta_majorant(modes2):
    H = pair(modes2, 1, 2, -2.0)
    M = eta_majorant(H, 1.0)
    assert np.allclose(M.coeffs, 2 * math.e)
    assert np.allclose(eta_majorant(H, 0.0).coeffs, 2.0)
    D = Hamiltonian.diagonal(modes2, [1, -2, 3, -4, 5])
    assert np.allclose(eta_majorant(D, 3.0).coeffs, np.abs(D.coeffs))


def test_projection_split_example(modes2):
    K = Hamiltonian.action(modes2, 1)
    R = pair(modes2, 1, 2)
    H = K + R
    assert project_K(H).allclose(K)
    assert project_R(H).allclose(R)
    assert project_R(K).is_zero()


def test_project_index_set(modes2, rng):
    H = random_hamiltonian(modes2, rng, momentum=True)
    assert project_index_set(H, lambda a, b: True).allclose(H)
    kept = project_index_set(H, lambda a, b: momentum(a) == momentum(b))
    assert kept.allclose(H)
    assert project_index_set(H, lambda a, b: False).is_zero()


def test_lipschitz_norm_examples(params, modes2):
    base = np.zeros(5)
    w1 = FrequencyVector(modes2, base)
    shifted = base.copy()
    shifted[modes2.index(1)] = 0.3
    w2 = FrequencyVector(modes2, shifted)
    H = pair(modes2, 1, 2)
    const = LipschitzFamily(lambda w: H, [w1, w2])
    nH = norm(H, 1.0, 1.0, 0.0, params)
    assert lipschitz_weighted_norm(const, 2.0, 1.0, 1.0, 0.0, params) == pytest.approx(nH)
    lin = LipschitzFamily(lambda w: w.omega[modes2.index(1)] * Hamiltonian.action(modes2, 1), [w1, w2])
    assert lipschitz_weighted_norm(lin, 0.5, 1.0, 1.0, 0.0, params) == pytest.approx(1.3 + 0.5)
    assert lipschitz_weighted_norm(lin, 0.0, 1.0, 1.0, 0.0, params) == pytest.approx(1.3)
    with pytest.raises(ValueError):
        lipschitz_weighted_norm(LipschitzFamily(lambda w: H, [w1]), 1.0, 1.0, 1.0, 0.0, params)


def test_serialization_roundtrip_bit_exact(modes2, rng):
    H = random_hamiltonian(modes2, rng, n_terms=8, cutoff=8)
    G = loads(dumps(H))
    assert G.cutoff == H.cutoff
    assert np.array_equal(G.exps, H.exps)
    assert np.array_equal(G.coeffs, H.coeffs)
    assert dumps(G) == dumps(H)


def test_cutoff_enforced(modes2):
    with pytest.raises(ValueError):
        Hamiltonian.monomial(modes2, {0: 3}, {0: 3}, cutoff=4)
    H = Hamiltonian.monomial(modes2, {0: 3}, {0: 3}) + Hamiltonian.action(modes2, 0)
    assert len(H.with_cutoff(4)) == 1


def test_product_matches_evaluation(modes2, rng):
    F = random_hamiltonian(modes2, rng, n_terms=3, max_mass=2)
    G = random_hamiltonian(modes2, rng, n_terms=3, max_mass=2)
    u = rng.normal(size=5) + 1j * rng.normal(size=5)
    assert (F * G)(u) == pytest.approx(F(u) * G(u), rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_random_hamiltonians_are_valid(seed):
    H = random_hamiltonian(ModeSet(2), np.random.default_rng(seed))
    assert H.is_real()
    assert H.conserves_mass()
    assert np.all(np.abs(H.coeffs) > 0)


@settings(max_examples=40, deadline=None)
@given(seeds, st.floats(0.2, 2.0), st.floats(1.0, 3.0), st.floats(0.0, 1.0))
def test_norm_monotone_in_r_and_eta(seed, r, factor, eta):
    params = WeightParams()
    H = random_hamiltonian(ModeSet(2), np.random.default_rng(seed))
    assert norm(H, r * factor, 1.0, eta, params) >= norm(H, r, 1.0, eta, params) * (1 - 1e-12)
    assert norm(H, r, 1.0, eta + 0.5, params) >= norm(H, r, 1.0, eta, params) * (1 - 1e-12)


@settings(max_examples=40, deadline=None)
@given(seeds, st.floats(0.05, 0.9), st.integers(0, 3))
def test_projections_contract_and_mass_tail(seed, ratio, N):
    params = WeightParams()
    H = random_hamiltonian(ModeSet(2), np.random.default_rng(seed), momentum=True)
    n = norm(H, 1.0, 1.0, 0.2, params)
    R, K = project_R(H), project_K(H)
    assert (R + K).allclose(H)
    assert project_R(R).allclose(R) and project_K(K).allclose(K)
    assert norm(R, 1.0, 1.0, 0.2, params) <= n * (1 + 1e-12)
    assert norm(K, 1.0, 1.0, 0.2, params) <= n * (1 + 1e-12)
    tail = project_mass_above(H, N)
    bound = ratio ** (2 * N) * norm(tail, 1.0, 1.0, 0.0, params)
    assert norm(tail, ratio, 1.0, 0.0, params) <= bound * (1 + 1e-12)
