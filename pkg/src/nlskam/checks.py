"""Randomized checks of the algebraic identities and norm inequalities.

Each check draws its instances from a seeded generator and returns a
``VerifierReport``; the test suite and the ``verify`` command share them.
Brackets are taken without degree truncation here, because the degree laws
only hold exactly in the untruncated algebra.
"""

from __future__ import annotations

import math

import numpy as np

from .hamiltonian import EXP_DTYPE, Hamiltonian, WeightParams, norm, project_K, project_R, u0_weight
from .indexing import ModeSet, MultiIndex, merge, split_min
from .poisson import apply_L, lie_transform_with_diagnostics, poisson_bracket
from .projections import (
    TorusData,
    c_kappa,
    counterterm_extract,
    counterterm_hamiltonian,
    project_degree,
    project_degree_geq,
)
from .reports import VerifierReport
from .smalldivisors import homological_constant, solve_homological

REL = 1e-12


def random_hamiltonian(modes: ModeSet, rng: np.random.Generator, n_terms: int = 4, max_mass: int = 3,
                       momentum: bool = False, cutoff: int | None = None) -> Hamiltonian:
    """Real, mass-conserving random polynomial (each drawn term plus its conjugate)."""
    n = modes.n
    js = modes.mode_array()
    rows, cs = [], []
    while len(rows) < 2 * n_terms:
        k = int(rng.integers(1, max_mass + 1))
        a = np.bincount(rng.integers(0, n, k), minlength=n)
        b = np.bincount(rng.integers(0, n, k), minlength=n)
        if momentum and int((a - b) @ js) != 0:
            continue
        c = complex(rng.normal(), rng.normal())
        rows += [np.concatenate([a, b]), np.concatenate([b, a])]
        cs += [c, np.conj(c)]
    return Hamiltonian(modes, np.array(rows, dtype=EXP_DTYPE), np.array(cs), cutoff)


def random_torus(modes: ModeSet, rng: np.random.Generator, kappa: float, r: float = 1.0,
                 params: WeightParams = WeightParams(), p_zero: float = 0.2) -> TorusData:
    """Actions ``(kappa u0_j t_j)^2`` with ``t_j`` uniform, some set to zero."""
    t = rng.uniform(0, 1, modes.n) * (rng.uniform(size=modes.n) > p_zero)
    u0 = u0_weight(modes.mode_array(), r, params)
    return TorusData(modes, (kappa * u0 * t) ** 2, kappa, r, params)


def _close(a: Hamiltonian, b: Hamiltonian, scale: float) -> tuple[bool, float]:
    err = (a - b).max_abs()
    return err <= REL * max(scale, 1e-300), err


def _degrees(H: Hamiltonian) -> list[int]:
    top = int(H.degrees.max(initial=0))
    return list(range(-2, top + 1, 2))


def check_projections(n: int, seed: int, j_max: int = 2) -> VerifierReport:
    """Idempotence, mutual annihilation, completeness (``kappa^2 < 1/2``) and the R/K split."""
    rng = np.random.default_rng(seed)
    rep = VerifierReport("projections")
    modes = ModeSet(j_max)
    for i in range(n):
        H = random_hamiltonian(modes, rng)
        T = random_torus(modes, rng, float(rng.uniform(0.2, 0.7)))
        scale = H.max_abs()
        degs = _degrees(H)
        parts = {d: project_degree(H, T, d) for d in degs}
        total = Hamiltonian.zero(modes)
        for d, P in parts.items():
            total = total + P
            ok, err = _close(project_degree(P, T, d), P, scale)
            rep.check(ok, {"instance": i, "law": "idempotent", "d": d}, err, REL * scale)
            for d2 in degs:
                if d2 != d:
                    Z = project_degree(P, T, d2)
                    rep.check(Z.max_abs() <= REL * scale, {"instance": i, "law": "annihilate", "d": d, "d2": d2},
                              Z.max_abs(), REL * scale)
        ok, err = _close(total, H, scale)
        rep.check(ok, {"instance": i, "law": "complete"}, err, REL * scale)
        ok, err = _close(project_R(H) + project_K(H), H, scale)
        rep.check(ok, {"instance": i, "law": "R+K"}, err, REL * scale)
        rep.check(project_R(project_K(H)).is_zero(), {"instance": i, "law": "R.K"}, len(project_R(project_K(H))), 0)
    return rep


def check_degree_laws(n: int, seed: int, j_max: int = 2) -> VerifierReport:
    """``Pi^-2 {F, G} = 0`` when ``Pi^{<=0} G = 0``; also ``Pi^0 {F, G} = 0`` when ``Pi^-2 F = 0``; ``Pi^d L F = L Pi^d F``."""
    rng = np.random.default_rng(seed)
    rep = VerifierReport("degree_laws")
    modes = ModeSet(j_max)
    for i in range(n):
        T = random_torus(modes, rng, float(rng.uniform(0.2, 0.7)))
        F = random_hamiltonian(modes, rng, max_mass=2)
        H = random_hamiltonian(modes, rng, max_mass=3)
        G = project_degree_geq(H, T, 2)
        B = poisson_bracket(F, G)
        scale = F.max_abs() * H.max_abs() * 10
        m2 = project_degree(B, T, -2).max_abs()
        rep.check(m2 <= REL * scale, {"instance": i, "law": "minus2"}, m2, REL * scale)
        F0 = F - project_degree(F, T, -2)
        z0 = project_degree(poisson_bracket(F0, G), T, 0).max_abs()
        rep.check(z0 <= REL * scale, {"instance": i, "law": "zero"}, z0, REL * scale)
        omega = modes.mode_array() ** 2 + rng.uniform(-0.5, 0.5, modes.n)
        for d in _degrees(F):
            a = project_degree(apply_L(F, omega), T, d)
            b = apply_L(project_degree(F, T, d), omega)
            ok, err = _close(a, b, F.max_abs() * float(np.max(np.abs(omega))) * 4)
            rep.check(ok, {"instance": i, "law": "L commutes", "d": d}, err, REL)
    return rep


def check_homological_roundtrip(n: int, seed: int, j_max: int = 2) -> VerifierReport:
    rng = np.random.default_rng(seed)
    rep = VerifierReport("homological_roundtrip")
    modes = ModeSet(j_max)
    for i in range(n):
        F = project_R(random_hamiltonian(modes, rng))
        omega = modes.mode_array() ** 2 + rng.uniform(-0.5, 0.5, modes.n)
        G = solve_homological(F, omega)
        ok, err = _close(apply_L(G, omega), F, F.max_abs())
        rep.check(ok, {"instance": i}, err, REL * F.max_abs())
        rep.check(G.is_real(), {"instance": i, "law": "reality"}, 0, 0)
    return rep


def check_counterterm_identity(n: int, seed: int, j_max: int = 3) -> VerifierReport:
    """``|sum lambda_j (|u_j|^2 - I_j)| = |lambda|_inf`` and extraction recovers ``lambda``."""
    rng = np.random.default_rng(seed)
    rep = VerifierReport("counterterm_identity")
    modes = ModeSet(j_max)
    p = WeightParams()
    for i in range(n):
        lam = rng.normal(size=modes.n)
        T = random_torus(modes, rng, 0.5)
        H = counterterm_hamiltonian(lam, T)
        r = float(rng.uniform(0.1, 2))
        nm = norm(H, r, p.s, 0.0, p)
        sup = float(np.max(np.abs(lam)))
        rep.check(abs(nm - sup) <= REL * sup, {"instance": i, "law": "norm"}, nm, sup)
        back = counterterm_extract(H, T).lam
        err = float(np.max(np.abs(back - lam)))
        rep.check(err <= REL * sup, {"instance": i, "law": "extract"}, err, REL * sup)
    return rep


def check_split_merge(n: int, seed: int, j_max: int = 3) -> VerifierReport:
    rng = np.random.default_rng(seed)
    rep = VerifierReport("split_merge")
    modes = list(range(-j_max, j_max + 1))
    for i in range(n):
        a = MultiIndex((int(j), int(c)) for j, c in zip(modes, rng.integers(0, 3, len(modes))))
        b = MultiIndex((int(j), int(c)) for j, c in zip(modes, rng.integers(0, 3, len(modes))))
        m, x, y = split_min(a, b)
        disjoint = all(x.get(j) * y.get(j) == 0 for j in modes)
        rep.check(disjoint and merge(m, x, y) == (a, b), {"instance": i, "a": str(a), "b": str(b)}, 0, 0)
    return rep


# inequalities --------------------------------------------------------------

def _monomial_pair(modes, rng, max_mass=2, momentum=True):
    return random_hamiltonian(modes, rng, n_terms=1, max_mass=max_mass, momentum=momentum)


def check_bracket_bound(n: int, seed: int, j_max: int = 2) -> VerifierReport:
    """``|{F, G}|_r <= 8 max(1, r/rho) |F|_{r+rho} |G|_{r+rho}``."""
    rng = np.random.default_rng(seed)
    rep = VerifierReport("bracket_bound")
    modes = ModeSet(j_max)
    p = WeightParams()
    for i in range(n):
        F, G = _monomial_pair(modes, rng), _monomial_pair(modes, rng)
        r, rho = float(rng.uniform(0.1, 2)), float(rng.uniform(0.01, 1))
        eta = float(rng.uniform(0, 0.5))
        lhs = norm(poisson_bracket(F, G), r, p.s, eta, p)
        rhs = 8 * max(1.0, r / rho) * norm(F, r + rho, p.s, eta, p) * norm(G, r + rho, p.s, eta, p)
        rep.check(lhs <= rhs * (1 + REL), {"instance": i, "r": r, "rho": rho}, lhs, rhs)
    return rep


def check_lie_bound(n: int, seed: int, j_max: int = 2) -> VerifierReport:
    """``|e^{S} H|_r <= 2 |H|_{r+rho}`` when ``|S|_{r+rho} <= rho / (16 e (r+rho))``."""
    rng = np.random.default_rng(seed)
    rep = VerifierReport("lie_bound")
    modes = ModeSet(j_max)
    p = WeightParams()
    for i in range(n):
        H = _monomial_pair(modes, rng)
        S = _monomial_pair(modes, rng)
        r, rho = float(rng.uniform(0.1, 1)), float(rng.uniform(0.01, 0.5))
        limit = rho / (16 * math.e * (r + rho))
        S = S * (limit * float(rng.uniform(0.1, 1)) / norm(S, r + rho, p.s, 0.0, p))
        out, diag = lie_transform_with_diagnostics(H, S, k_max=8)
        lhs = norm(out, r, p.s, 0.0, p)
        rhs = 2 * norm(H, r + rho, p.s, 0.0, p)
        rep.check(lhs <= rhs * (1 + REL), {"instance": i, "r": r, "rho": rho}, lhs, rhs)
    return rep


def check_projection_bounds(n: int, seed: int, j_max: int = 2) -> VerifierReport:
    """Component bound at ``kappa_* = 1`` and the tail bound at ``kappa < kappa_* < 1``."""
    rng = np.random.default_rng(seed)
    rep = VerifierReport("projection_bounds")
    modes = ModeSet(j_max)
    p = WeightParams()
    for i in range(n):
        kappa = float(rng.uniform(0.2, 0.7))
        r = float(rng.uniform(0.5, 2))
        T = random_torus(modes, rng, kappa, r, p)
        H = random_hamiltonian(modes, rng)
        nH = norm(H, r, p.s, 0.0, p)
        ck = c_kappa(kappa)
        ks = float(rng.uniform(kappa, 1))
        cks = c_kappa(ks)
        for q in range(0, 4):
            lhs = norm(project_degree(H, T, 2 * q - 2), r, p.s, 0.0, p)
            rhs = (1 + kappa**-2) ** q * ck**q * nH
            rep.check(lhs <= rhs * (1 + REL), {"instance": i, "q": q, "bound": "component"}, lhs, rhs)
            lhs = norm(project_degree_geq(H, T, 2 * q - 2), ks * r, p.s, 0.0, p)
            rhs = ks**-2 * ((kappa**2 + ks**2) / ks**2 * cks) ** q * nH
            rep.check(lhs <= rhs * (1 + REL), {"instance": i, "q": q, "bound": "tail", "kappa_star": ks}, lhs, rhs)
    return rep


def check_smoothing(n: int, seed: int, j_max: int = 3) -> VerifierReport:
    """``|H|_{r, s+sigma, eta-sigma} <= |H|_{r, s, eta}``."""
    rng = np.random.default_rng(seed)
    rep = VerifierReport("smoothing")
    modes = ModeSet(j_max)
    for i in range(n):
        theta = float(rng.uniform(0.2, 0.8))
        p = WeightParams(theta=theta)
        H = random_hamiltonian(modes, rng)
        eta = float(rng.uniform(0.1, 1))
        sigma = float(rng.uniform(0, eta))
        s, r = float(rng.uniform(0.1, 2)), float(rng.uniform(0.1, 2))
        lhs = norm(H, r, s + sigma, eta - sigma, p)
        rhs = norm(H, r, s, eta, p)
        rep.check(lhs <= rhs * (1 + REL), {"instance": i, "sigma": sigma, "theta": theta}, lhs, rhs)
    return rep


def check_homological_bound(n: int, seed: int, j_max: int = 2, gamma: float = 0.1) -> VerifierReport:
    """``|L^{-1} F|_{r, s+sigma, eta-sigma} <= gamma^{-1} e^{C sigma^{-3/theta}} |F|_{r,s,eta}`` in log form."""
    from .smalldivisors import enumerate_ells, is_diophantine

    rng = np.random.default_rng(seed)
    rep = VerifierReport("homological_bound")
    modes = ModeSet(j_max)
    p = WeightParams()
    ells = enumerate_ells(modes.modes, 4)
    for i in range(n):
        while True:
            omega = modes.mode_array() ** 2 + rng.uniform(-0.5, 0.5, modes.n)
            if is_diophantine(omega, modes.modes, gamma, ells).ok:
                break
        F = Hamiltonian.zero(modes)
        while F.is_zero():
            F = project_R(random_hamiltonian(modes, rng, momentum=True, max_mass=2))
        eta, r = float(rng.uniform(0.2, 1)), float(rng.uniform(0.5, 2))
        sigma = float(rng.uniform(0.05, min(eta, 1)))
        G = solve_homological(F, omega)
        lhs = math.log(max(norm(G, r, p.s + sigma, eta - sigma, p), 1e-300))
        C = homological_constant(sigma, p.theta, gamma)
        rhs = -math.log(gamma) + C * sigma ** (-3 / p.theta) + math.log(norm(F, r, p.s, eta, p))
        rep.check(lhs <= rhs, {"instance": i, "sigma": sigma}, lhs, rhs)
    return rep


def check_nls_regularity(n: int, seed: int, j_max: int = 2, cutoff: int = 6) -> VerifierReport:
    """Truncated NLS perturbation against its analytic bound, at random admissible radii."""
    from .nls import NonlinearitySpec, algebra_constant, build_nls_perturbation, verify_regularity_bound

    rng = np.random.default_rng(seed)
    rep = VerifierReport("nls_regularity")
    modes = ModeSet(j_max)
    p = WeightParams()
    for i in range(n):
        coeffs = {}
        for d in (1, 2):
            if rng.uniform() < 0.7 or not coeffs:
                coeffs[(d, 0)] = float(rng.normal())
            if rng.uniform() < 0.5:
                c = complex(rng.normal(), rng.normal()) * 0.3
                k = int(rng.integers(1, 3))
                coeffs[(d, k)], coeffs[(d, -k)] = c, np.conj(c)
        strip = float(rng.uniform(0.5, 2))
        R = float(rng.uniform(0.5, 2))
        f = NonlinearitySpec(coeffs, strip, R)
        r = math.sqrt(R) / algebra_constant(p.p) * float(rng.uniform(0.1, 1))
        eta = float(rng.uniform(0, strip - p.a)) * 0.9
        P = build_nls_perturbation(f, modes, cutoff)
        res = verify_regularity_bound(P, f, r, p.s, eta, p)
        rep.check(res.ok, {"instance": i, "r": r, "eta": eta}, res.lhs, res.rhs)
    return rep


def check_counterterm_bound(n: int, seed: int, j_max: int = 1, gamma: float = 0.1) -> VerifierReport:
    """``|lam_0|_inf <= gamma K eps_0 (1 + Theta_0)`` for one step on a random small perturbation, in log form."""
    from .kam import KamConfig, initial_state, kam_constants, kam_step
    from .smalldivisors import draw_diophantine

    rng = np.random.default_rng(seed)
    rep = VerifierReport("counterterm_bound")
    modes = ModeSet(j_max)
    p = WeightParams()
    r = 1.0
    r0 = 2 * math.sqrt(2) * r
    cfg = KamConfig(r0=r0, s0=0.8, eta0=0.5, rho=r0 - 2 * r, sigma=0.2, gamma=gamma, params=p, cutoff=6,
                    torus_radius=r)
    log_K = kam_constants(cfg).log_K
    for i in range(n):
        T = random_torus(modes, rng, 0.5, r, p)
        omega = draw_diophantine(modes.modes, gamma, 4, rng)
        G0 = random_hamiltonian(modes, rng, momentum=True, max_mass=3, cutoff=6)
        G0 = G0 * (10 ** rng.uniform(-5, -2) / G0.max_abs())
        state = initial_state(G0, T, cfg)
        _, _, lam, _ = kam_step(state, omega, T, cfg)
        lhs = math.log(max(lam.sup(), 1e-300))
        rhs = math.log(gamma) + log_K + math.log(max(state.eps, 1e-300)) + math.log1p(state.Theta)
        rep.check(lhs <= rhs, {"instance": i, "eps0": state.eps}, lhs, rhs)
    return rep


ALGEBRA_CHECKS = (
    check_projections,
    check_degree_laws,
    check_homological_roundtrip,
    check_counterterm_identity,
    check_split_merge,
)

INEQUALITY_CHECKS = (
    check_bracket_bound,
    check_lie_bound,
    check_projection_bounds,
    check_smoothing,
    check_homological_bound,
    check_counterterm_bound,
    check_nls_regularity,
)
