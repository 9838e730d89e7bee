import math

import numpy as np
import pytest
import sympy as sp

from nlskam.checks import random_hamiltonian
from nlskam.hamiltonian import Hamiltonian, WeightParams
from nlskam.indexing import ModeSet
from nlskam.kam import (
    KamConfig,
    NeumannDivergence,
    _mcshane,
    initial_state,
    invariance_defect,
    kam_constants,
    kam_step,
    lowdim_torus,
    map_increments,
    measure_lowdim,
    melnikov_check,
    neumann_invert,
    run_counterterm_theorem,
    run_family,
    run_lowdim,
    schedule,
    solve_frequency_map,
)
from nlskam.nls import NonlinearitySpec, build_nls_perturbation, desk_config
from nlskam.hamiltonian import FrequencyVector
from nlskam.projections import TorusData, counterterm_hamiltonian, project_degree_leq

PARAMS = WeightParams()
M2 = ModeSet(2)
OMEGA = np.array([4.31, 1.17, 0.09, 0.73, 3.88])


def small_config(r=0.05, cutoff=6, **kw):
    return desk_config(r, PARAMS, 1.0, 0.05, cutoff, **kw)


def small_torus(r=0.05):
    return TorusData.profile(M2, r, PARAMS, support=1)


def test_config_validation():
    good = dict(r0=1.0, s0=1.0, eta0=1.0, rho=0.2, sigma=0.3, gamma=0.1)
    KamConfig(**good)
    for bad in (dict(rho=0.6), dict(sigma=0.5), dict(gamma=0.0), dict(cutoff=5), dict(torus_radius=0.5)):
        with pytest.raises(ValueError):
            KamConfig(**{**good, **bad})


def test_schedule_examples():
    cfg = KamConfig(r0=1.0, s0=1.0, eta0=1.0, rho=0.2, sigma=0.3, gamma=0.1)
    sv = schedule(0, cfg)
    assert (sv.rho, sv.sigma) == (pytest.approx(0.05), pytest.approx(0.3 / 8))
    assert schedule(1, cfg).sigma == pytest.approx(9 * 0.3 / (4 * math.pi**2))
    far = schedule(60, cfg)
    assert far.r == pytest.approx(cfg.limits[0], abs=1e-15)
    # the sigma tail decays like 1/n; the closed form of the full sum is checked symbolically
    n = sp.symbols("n", integer=True, positive=True)
    sig = sp.Symbol("sigma", positive=True)
    total = 2 * sig / 8 + sp.summation(2 * 9 * sig / (4 * sp.pi**2 * n**2), (n, 1, sp.oo))
    assert sp.simplify(total - sig) == 0
    assert far.s < cfg.limits[1] and far.eta > cfg.limits[2]
    assert abs(far.s - cfg.limits[1]) < 9 * 0.3 / (2 * math.pi**2 * 59)
    with pytest.raises(ValueError):
        schedule(-1, cfg)


def test_kam_constants_log_form():
    cfg = small_config()
    k = kam_constants(cfg)
    assert math.isfinite(k.log_K) and k.log_K > 0
    assert k.log_eps_bar == pytest.approx(-15 * math.log(2) - 2 * k.log_K)


def test_neumann_examples():
    rhs = np.array([1.0, -2.0])
    assert np.array_equal(neumann_invert(lambda h: 0 * h, rhs).x, rhs)
    res = neumann_invert(lambda h: 0.5 * h, np.array([1.0, 0.0]), tol=1e-17)
    assert res.x == pytest.approx([2 / 3, 0.0], abs=1e-15)
    rng = np.random.default_rng(0)
    A = rng.normal(size=(6, 6))
    A *= 0.4 / np.max(np.abs(A).sum(1))
    tol = 1e-15
    res = neumann_invert(lambda h: A @ h, rng.normal(size=6), tol=tol)
    assert res.residual < 2 * tol
    with pytest.raises(NeumannDivergence):
        neumann_invert(lambda h: 2 * h, np.ones(2))


def test_step_on_normal_form_is_trivial():
    T = small_torus()
    cfg = small_config()
    H = random_hamiltonian(M2, np.random.default_rng(1), momentum=True, cutoff=6)
    from nlskam.projections import project_degree_geq

    G0 = 1e-3 * project_degree_geq(H, T, 2)
    state = initial_state(G0, T, cfg)
    assert state.eps == 0
    new, S, lam, rec = kam_step(state, OMEGA, T, cfg)
    assert S.is_zero() and lam.sup() == 0
    assert new.G.allclose(G0)


def test_step_on_counterterm_input():
    T = small_torus()
    cfg = small_config()
    lam = np.zeros(5)
    lam[M2.index(1)] = 3e-4
    G0 = counterterm_hamiltonian(lam, T, 6)
    state = initial_state(G0, T, cfg)
    assert state.eps == pytest.approx(3e-4 / cfg.gamma)
    new, S, inc, rec = kam_step(state, OMEGA, T, cfg)
    assert rec.M_norm == 0
    assert S.max_abs() < 1e-18
    assert inc.lam == pytest.approx(-lam, abs=1e-18)
    assert new.eps < 1e-15


def test_step_cancels_low_degrees_quadratically():
    T = small_torus()
    cfg = small_config()
    c = 1e-4
    G0 = c * (Hamiltonian.monomial(M2, {1: 1}, {2: 1}, cutoff=6) + Hamiltonian.monomial(M2, {2: 1}, {1: 1}, cutoff=6))
    G0 = G0 + 1e-3 * build_nls_perturbation(NonlinearitySpec.power(1), M2, 6)
    state = initial_state(G0, T, cfg)
    new, S, lam, rec = kam_step(state, OMEGA, T, cfg)
    assert rec.solve_residual <= 1e-10 * state.eps
    assert new.eps < 50 * state.eps**2 / cfg.gamma
    X = Hamiltonian.diagonal(M2, OMEGA, 6) + new.G
    low = project_degree_leq(X - Hamiltonian.diagonal(M2, OMEGA, 6), T, 0)
    assert low.max_abs() <= 1e2 * state.eps**2


def test_run_with_zero_perturbation():
    T = small_torus()
    cfg = small_config()
    res = run_counterterm_theorem(Hamiltonian.zero(M2, 6), OMEGA, T, cfg)
    assert res.converged and res.generators == [] and res.lambda_sup == 0
    assert res.N.allclose(Hamiltonian.diagonal(M2, OMEGA, 6))


@pytest.fixture(scope="module")
def cubic_run():
    T = small_torus()
    cfg = small_config()
    P = build_nls_perturbation(NonlinearitySpec.power(1), M2, 6)
    return T, cfg, P, run_counterterm_theorem(P, OMEGA, T, cfg)


def test_run_converges_and_lambda_bounded(cubic_run):
    T, cfg, P, res = cubic_run
    assert res.converged
    eps = res.eps_history
    assert all(b < a for a, b in zip(eps, eps[1:]))
    Theta0 = res.records[0].theta
    # sup |Lambda| <= C gamma (1 + Theta) eps, with C taken from the first increment
    assert res.lambda_sup <= 2 * res.records[0].lambda_bar_sup
    assert res.lambda_sup <= 10 * cfg.gamma * (1 + Theta0) * eps[0]


def test_run_invariance(cubic_run):
    T, cfg, P, res = cubic_run
    d = invariance_defect(res.N, OMEGA, T, 10, 0, PARAMS)
    assert d <= 10 * (cfg.eps_target + res.truncation_residual)


def test_map_increments_decay(cubic_run):
    T, cfg, P, res = cubic_run
    pts = [np.sqrt(T.actions) * np.exp(1j * k) for k in range(3)]
    inc = map_increments(res.generators, pts, steps=20)
    assert all(b <= a for a, b in zip(inc, inc[1:]))
    assert inc[0] <= cfg.rho * 4


def test_zero_action_needs_no_special_path():
    T0 = TorusData.profile(M2, 0.05, PARAMS, support=1)
    I = T0.actions.copy()
    I[M2.index(0)] = 0.0
    T = TorusData(M2, I, T0.kappa, T0.r, PARAMS)
    P = build_nls_perturbation(NonlinearitySpec.power(1), M2, 6)
    res = run_counterterm_theorem(P, OMEGA, T, small_config())
    assert res.converged


def test_run_family_lipschitz():
    T = small_torus()
    cfg = small_config()
    P = build_nls_perturbation(NonlinearitySpec.power(1), M2, 6)
    ws = [FrequencyVector.from_omega(M2, OMEGA + d) for d in (0.0, 1e-3, -2e-3)]
    results, lip = run_family(lambda w: P, ws, T, cfg)
    assert all(r.converged for r in results)
    assert math.isfinite(lip)


# lower-dimensional ---------------------------------------------------------------

def lowdim_setup():
    torus = lowdim_torus(M2, {-1, 1}, {-1: 2e-4, 1: 1e-4})
    cfg = desk_config(0.05, PARAMS, 1.0, 0.05, 6)
    P = build_nls_perturbation(NonlinearitySpec.power(1), torus.modes, 6)
    return torus, cfg, P


def test_lowdim_all_tangential_matches_full():
    T = small_torus()
    cfg = small_config()
    P = build_nls_perturbation(NonlinearitySpec.power(1), M2, 6)
    full = run_counterterm_theorem(P, OMEGA, T, cfg)
    tang = TorusData(ModeSet(2, frozenset(M2.modes)), T.actions, T.kappa, T.r, PARAMS)
    low = run_lowdim(P, OMEGA, tang, cfg)
    assert np.allclose(low.Lambda.lam, full.Lambda.lam, rtol=1e-12, atol=1e-20)
    with pytest.raises(ValueError):
        run_lowdim(P, OMEGA, T, cfg)


def test_lowdim_zero_perturbation():
    torus, cfg, _ = lowdim_setup()
    res = run_lowdim(Hamiltonian.zero(torus.modes, 6), OMEGA, torus, cfg)
    assert res.lambda_sup == 0 and res.converged


def test_frequency_map_zero_perturbation():
    torus, cfg, _ = lowdim_setup()
    W = {j: 0.1 for j in (-2, 0, 2)}
    fm = solve_frequency_map({-1: 1.2, 1: 0.9}, W, torus, Hamiltonian.zero(torus.modes, 6), cfg)
    assert fm.Omega == {j: pytest.approx(j * j + 0.1, abs=0) for j in (-2, 0, 2)}
    with pytest.raises(ValueError):
        solve_frequency_map({-1: 1.2, 1: 0.9}, {-2: 0.1, 0: 0.0, 2: 0.1}, torus, Hamiltonian.zero(torus.modes, 6), cfg)


def test_frequency_map_fixed_point():
    torus, cfg, P = lowdim_setup()
    W = {j: 0.1 for j in (-2, 0, 2)}
    fm = solve_frequency_map({-1: 1.21, 1: 0.93}, W, torus, P, cfg)
    lam = fm.last_run.Lambda.lam
    for j, Om in fm.Omega.items():
        assert Om + lam[torus.modes.index(j)] == pytest.approx(j * j + W[j], abs=1e-12)


def test_mcshane_extension_interpolates():
    samples = [(np.array([0.0]), np.array([1.0])), (np.array([1.0]), np.array([3.0]))]
    assert _mcshane(samples, np.array([0.0])) == pytest.approx([1.0])
    assert _mcshane(samples, np.array([0.5])) == pytest.approx([2.0])
    assert _mcshane(samples, np.array([2.0])) == pytest.approx([5.0])


def test_melnikov_examples():
    Omega = {j: j * j + 0.1 for j in (-2, 0, 2)}
    rep = melnikov_check({-1: 1.21, 1: 0.93}, Omega, 3, 0.05)
    assert rep.ok and rep.checked > 0 and rep.min_margin > 0
    # h = 0 with one normal term balances momentum only at j = 0: margin |Omega_0| - gamma
    single = melnikov_check({-1: 1.21, 1: 0.93}, {0: 0.1}, 0, 0.05)
    # (+-Omega_0) alone and (+-2 Omega_0)
    assert single.checked == 4
    assert single.min_margin == pytest.approx(0.1 - 0.05)
    # sigma = sigma' = +1 with k = -j: margin 2 j^2 + ...
    pair = melnikov_check({-1: 1.21, 1: 0.93}, {-2: 4.1, 2: 4.1}, 0, 0.05)
    assert pair.min_margin >= 2 * 4 - 1
    bad = melnikov_check({-1: 1.0, 1: 1.0}, {j: float(j * j) for j in (-2, 0, 2)}, 2, 0.5)
    assert not bad.ok and bad.violations[0]["witness"]


def test_measure_lowdim():
    assert measure_lowdim(1e-12, [-1, 1], 3, 3, 300, seed=0) == 0.0
    a = measure_lowdim(0.05, [-1, 1], 3, 3, 500, seed=1)
    b = measure_lowdim(0.2, [-1, 1], 3, 3, 500, seed=1)
    assert a <= b
    assert a == measure_lowdim(0.05, [-1, 1], 3, 3, 500, seed=1)
