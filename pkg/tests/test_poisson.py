import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from nlskam.checks import random_hamiltonian
from nlskam.hamiltonian import Hamiltonian, WeightParams, norm
from nlskam.indexing import ModeSet
from nlskam.poisson import (
    FieldEvaluator,
    apply_L,
    flow_point,
    lie_transform,
    lie_transform_diagonal,
    lie_transform_with_diagnostics,
    poisson_bracket,
    vector_field,
)

seeds = st.integers(0, 2**32 - 1)
MODES = ModeSet(1)
U = sp.symbols("u0:3")
UB = sp.symbols("ub0:3")


def to_sympy(H):
    expr = 0
    for row, c in zip(H.exps, H.coeffs):
        mono = sp.Integer(1)
        for k in range(H.n):
            mono *= U[k] ** int(row[k]) * UB[k] ** int(row[H.n + k])
        expr += sp.nsimplify(complex(c).real, rational=True) * mono + sp.I * sp.nsimplify(complex(c).imag, rational=True) * mono
    return sp.expand(expr)


def sym_bracket(F, G):
    return sp.expand(sp.I * sum(sp.diff(F, UB[k]) * sp.diff(G, U[k]) - sp.diff(F, U[k]) * sp.diff(G, UB[k]) for k in range(3)))


def coeff_dict(expr):
    poly = sp.Poly(expr, *U, *UB)
    return {m: complex(c) for m, c in poly.terms()}


def rational_hamiltonian(rng, n_terms=3):
    H = random_hamiltonian(MODES, rng, n_terms=n_terms, max_mass=2)
    # round coefficients so the symbolic conversion is exact
    return Hamiltonian(MODES, H.exps, np.round(H.coeffs.real, 3) + 1j * np.round(H.coeffs.imag, 3))


@pytest.mark.parametrize("seed", range(6))
def test_bracket_matches_symbolic(seed):
    rng = np.random.default_rng(seed)
    F, G = rational_hamiltonian(rng), rational_hamiltonian(rng)
    got = poisson_bracket(F, G)
    expected = coeff_dict(sym_bracket(to_sympy(F), to_sympy(G)))
    got_d = {tuple(int(x) for x in row): complex(c) for row, c in zip(got.exps, got.coeffs)}
    assert set(got_d) == {k for k, v in expected.items() if abs(v) > 1e-15}
    for k, v in got_d.items():
        assert v == pytest.approx(expected[k], rel=1e-12, abs=1e-14)


def test_actions_commute():
    for j in MODES.modes:
        for k in MODES.modes:
            assert poisson_bracket(Hamiltonian.action(MODES, j), Hamiltonian.action(MODES, k)).is_zero()


def test_bracket_with_diagonal_is_L():
    rng = np.random.default_rng(3)
    omega = np.array([1.3, 0.2, 1.1])
    D = Hamiltonian.diagonal(MODES, omega)
    H = random_hamiltonian(MODES, rng)
    got = poisson_bracket(D, H)
    div = (H.alpha.astype(float) - H.beta) @ omega
    assert got.allclose(Hamiltonian(MODES, H.exps, 1j * div * H.coeffs))
    assert got.allclose(apply_L(H, omega))


def test_vector_field_examples():
    u = np.array([0.3 + 0.1j, -0.2j, 0.5])
    X = vector_field(Hamiltonian.action(MODES, 1), u)
    assert np.allclose(X.values, [0, 0, 1j * u[2]])
    assert np.allclose(vector_field(Hamiltonian.zero(MODES), u).values, 0)
    H = Hamiltonian.monomial(MODES, {0: 2}, {1: 1, -1: 1}) + Hamiltonian.monomial(MODES, {1: 1, -1: 1}, {0: 2})
    assert np.allclose(vector_field(H, np.zeros(3)).values, 0)


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_field_evaluator_matches_derivative(seed):
    rng = np.random.default_rng(seed)
    H = random_hamiltonian(ModeSet(2), rng, n_terms=6)
    u = rng.normal(size=(3, 5)) + 1j * rng.normal(size=(3, 5))
    u[:, 1] = 0.0
    batch = FieldEvaluator(H)(u)
    for row, x in zip(u, batch):
        assert np.allclose(x, vector_field(H, row).values, rtol=1e-12, atol=1e-14)


def test_lie_transform_identity_and_one_bracket():
    rng = np.random.default_rng(1)
    H = random_hamiltonian(MODES, rng)
    assert lie_transform(H, Hamiltonian.zero(MODES)).allclose(H)
    omega = np.array([1.3, 0.2, 1.1])
    D = Hamiltonian.diagonal(MODES, omega)
    S = Hamiltonian.monomial(MODES, {1: 1}, {-1: 1}, 0.1j) + Hamiltonian.monomial(MODES, {-1: 1}, {1: 1}, -0.1j)
    assert lie_transform(D, S, k_max=1).allclose(D + poisson_bracket(S, D))


def test_lie_transform_diagonal_agrees():
    rng = np.random.default_rng(2)
    omega = np.array([1.3, 0.2, 1.1])
    S = 0.05 * random_hamiltonian(MODES, rng, cutoff=6)
    D = Hamiltonian.diagonal(MODES, omega, cutoff=6)
    assert lie_transform_diagonal(omega, S, cutoff=6).allclose(lie_transform(D, S, cutoff=6) - D, rtol=1e-12, atol=1e-15)


def test_lie_transform_is_composition_with_flow():
    rng = np.random.default_rng(4)
    H = random_hamiltonian(MODES, rng, max_mass=2)
    S = Hamiltonian.monomial(MODES, {1: 1}, {0: 1}, 0.2 + 0.1j) + Hamiltonian.monomial(MODES, {0: 1}, {1: 1}, 0.2 - 0.1j)
    u = np.array([0.3 + 0.1j, -0.2j, 0.25])
    # S is quadratic, so the Lie series terminates only in the limit; 20 terms suffice here
    lhs = lie_transform(H, S, k_max=20)(u)
    rhs = H(flow_point(S, u, steps=200).values)
    assert lhs == pytest.approx(rhs, rel=1e-9)


def test_flow_point_examples():
    u = np.array([0.1, 0.2 + 0.1j, -0.3j])
    assert np.array_equal(flow_point(Hamiltonian.zero(MODES), u).values, u)
    lam = 0.7
    S = lam * Hamiltonian.action(MODES, 1)
    out = flow_point(S, u, steps=100).values
    exact = u.copy()
    exact[2] *= np.exp(1j * lam)
    assert np.allclose(out, exact, atol=1e-8)
    assert abs(abs(out[2]) - abs(u[2])) < 1e-10


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_bracket_algebra(seed):
    rng = np.random.default_rng(seed)
    modes = ModeSet(2)
    F = random_hamiltonian(modes, rng, momentum=True)
    G = random_hamiltonian(modes, rng, momentum=True)
    K = random_hamiltonian(modes, rng, momentum=True)
    FG = poisson_bracket(F, G)
    assert FG.allclose(-poisson_bracket(G, F), rtol=1e-12)
    assert poisson_bracket(F, 2.0 * G + K).allclose(2.0 * FG + poisson_bracket(F, K), rtol=1e-12)
    assert FG.is_real(1e-12) and FG.conserves_mass() and FG.conserves_momentum()
    jac = poisson_bracket(F, poisson_bracket(G, K)) + poisson_bracket(G, poisson_bracket(K, F)) + poisson_bracket(K, poisson_bracket(F, G))
    scale = max(F.max_abs() * G.max_abs() * K.max_abs(), 1e-300)
    assert jac.max_abs() <= 1e-10 * scale


@settings(max_examples=30, deadline=None)
@given(seeds, st.floats(0.1, 1.0), st.floats(0.05, 1.0))
def test_bracket_norm_bound(seed, r, rho):
    rng = np.random.default_rng(seed)
    params = WeightParams()
    F = random_hamiltonian(ModeSet(2), rng)
    G = random_hamiltonian(ModeSet(2), rng)
    lhs = norm(poisson_bracket(F, G), r, 1.0, 0.0, params)
    rhs = 8 * max(1, r / rho) * norm(F, r + rho, 1.0, 0.0, params) * norm(G, r + rho, 1.0, 0.0, params)
    assert lhs <= rhs * (1 + 1e-12)


def test_lie_diagnostics_smallness_flag():
    params = WeightParams()
    rng = np.random.default_rng(7)
    H = random_hamiltonian(ModeSet(2), rng, cutoff=8)
    S = random_hamiltonian(ModeSet(2), rng, cutoff=8)
    nS = norm(S, 1.2, 1.0, 0.0, params)
    small = S * (0.2 / (16 * np.e * 1.2) / nS * 0.5)
    out, diag = lie_transform_with_diagnostics(H, small, cutoff=8, norm_ctx=(1.0, 1.0, 0.0, params), rho=0.2)
    assert diag.smallness_ok
    assert norm(out, 1.0, 1.0, 0.0, params) <= 2 * norm(H, 1.2, 1.0, 0.0, params)
    _, big = lie_transform_with_diagnostics(H, 100 * small, cutoff=8, norm_ctx=(1.0, 1.0, 0.0, params), rho=0.2)
    assert not big.smallness_ok
