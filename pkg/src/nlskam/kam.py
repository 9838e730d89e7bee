"""Quadratic counter-term iteration at finite truncation.

At step ``n`` the Hamiltonian is ``D_omega + G_n + (Id + L_n) Lambda_n``.  A
generating function ``S_n`` (degrees ``-2``, ``-1`` and ``0``, non-action
part) and a counterterm increment ``lam_n`` are chosen so that

    Pi^{<=0} ( G_n + (Id + L_n) lam_n + {S_n, D_omega + G_n^{high}} ) = const,

then everything is transported by ``exp({S_n, .})``.  The columns
``(Id + L_n) e_j`` are stored explicitly.  The equation is solved exactly
inside the truncated algebra: a triangular sweep (negative degrees first,
then the counterterm through a Neumann series, then degree zero) serves as
an approximate inverse inside a defect-correction loop, because degree
truncation spoils the identities that make the sweep exact.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .hamiltonian import FrequencyVector, Hamiltonian, WeightParams, norm
from .indexing import ModeSet
from .poisson import (
    apply_L,
    dropped_norm_bound,
    lie_transform_with_diagnostics,
    poisson_bracket,
    StateVector,
    flow_point,
    vector_field,
)
from .projections import (
    CounterTerm,
    TorusData,
    basis_counterterm,
    counterterm_extract,
    counterterm_hamiltonian,
    low_degrees,
    project_degree,
)
from .hamiltonian import project_R
from .smalldivisors import enumerate_ells, homological_constant, is_diophantine, solve_homological


class NonConvergence(RuntimeError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class NeumannDivergence(ArithmeticError):
    pass


@dataclass(frozen=True)
class KamConfig:
    r0: float
    s0: float
    eta0: float
    rho: float
    sigma: float
    gamma: float
    params: WeightParams = WeightParams()
    cutoff: int = 8
    max_steps: int = 8
    eps_target: float = 1e-10
    chi: float = 1.5
    frak_C: float = 2.0**10
    neumann_tol: float = 1e-17
    solve_rtol: float = 1e-14
    max_corrections: int = 12
    torus_radius: float | None = None

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ValueError("; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        if not 0 < self.rho < self.r0 / 2:
            out.append(f"need 0 < rho < r0/2 (rho={self.rho}, r0={self.r0})")
        if not 0 < self.sigma < min(self.eta0 / 2, 1):
            out.append(f"need 0 < sigma < min(eta0/2, 1) (sigma={self.sigma}, eta0={self.eta0})")
        if self.torus_radius is not None and not 0 < self.torus_radius <= self.r0 / (2 * math.sqrt(2)) * (1 + 1e-12):
            out.append("need 0 < r <= r0 / (2 sqrt 2)")
        if self.gamma <= 0:
            out.append("gamma must be positive")
        if self.cutoff < 2 or self.cutoff % 2:
            out.append("degree cutoff must be even and at least 2")
        if self.s0 <= 0:
            out.append("s0 must be positive")
        return out

    @property
    def limits(self):
        return self.r0 - self.rho, self.s0 + self.sigma, self.eta0 - self.sigma


@dataclass(frozen=True)
class ScheduleValues:
    r: float
    s: float
    eta: float
    rho: float
    sigma: float


def _rho_n(n, cfg):
    return cfg.rho / 4 * 2.0**-n


def _sigma_n(n, cfg):
    return cfg.sigma / 8 if n == 0 else 9 * cfg.sigma / (4 * math.pi**2 * n * n)


def schedule(n: int, cfg: KamConfig) -> ScheduleValues:
    """Radii and regularity indices at step ``n``."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    r, s, eta = cfg.r0, cfg.s0, cfg.eta0
    for i in range(n):
        r -= 2 * _rho_n(i, cfg)
        s += 2 * _sigma_n(i, cfg)
        eta -= 2 * _sigma_n(i, cfg)
    return ScheduleValues(r, s, eta, _rho_n(n, cfg), _sigma_n(n, cfg))


@dataclass(frozen=True)
class KamConstants:
    log_K: float
    log_eps_bar: float
    log_C_bar: float
    homological_C: float


def kam_constants(cfg: KamConfig, n_scan: int = 4000) -> KamConstants:
    """The constants of the iterative lemma, in log form (they overflow doubles)."""
    theta = cfg.params.theta
    C = homological_constant(cfg.sigma, theta, cfg.gamma, lipschitz=True)
    Cp = 2 * (4 * math.pi**2 / (9 * cfg.sigma)) ** (3 / theta) * C
    n = np.arange(n_scan, dtype=float)
    with np.errstate(over="ignore"):
        expo = 4 * n * math.log(2) + 2 * Cp * n ** (6 / theta) - cfg.chi**n * (2 - cfg.chi)
    log_K = math.log(cfg.frak_C) + 4 * math.log(cfg.r0 / cfg.rho) + float(np.max(expo))
    return KamConstants(log_K, -15 * math.log(2) - 2 * log_K, 7 * math.log(2) + log_K, C)


@dataclass(frozen=True)
class NeumannResult:
    x: np.ndarray
    terms: int
    residual: float


def neumann_invert(apply_M: Callable[[np.ndarray], np.ndarray], rhs, tol: float = 1e-17, max_terms: int = 200) -> NeumannResult:
    """``(Id + M)^{-1} rhs`` as ``sum_k (-M)^k rhs``."""
    rhs = np.asarray(rhs, dtype=float)
    x = rhs.copy()
    term = rhs.copy()
    growth = 0
    prev = float(np.max(np.abs(term))) if term.size else 0.0
    k = 0
    for k in range(1, max_terms + 1):
        term = -apply_M(term)
        size = float(np.max(np.abs(term))) if term.size else 0.0
        x = x + term
        if size <= tol:
            break
        growth = growth + 1 if size > prev else 0
        if growth >= 3:
            raise NeumannDivergence("Neumann series increments grew three times in a row")
        prev = size
    residual = float(np.max(np.abs(x + apply_M(x) - rhs))) if x.size else 0.0
    return NeumannResult(x, k, residual)


@dataclass
class StepRecord:
    n: int
    eps: float
    theta: float
    lambda_bar_sup: float = 0.0
    trunc_residual: float = 0.0
    wall_ms: float = 0.0
    M_norm: float = 0.0
    solve_residual: float = 0.0
    corrections: int = 0
    lie_smallness_ok: bool = True
    generator_norm: float = 0.0


@dataclass
class KamState:
    n: int
    G: Hamiltonian
    columns: list
    Lambda: CounterTerm
    eps: float
    Theta: float
    generators: list = field(default_factory=list)
    truncation_residual: float = 0.0


def _low_parts(H: Hamiltonian, torus: TorusData):
    degs = low_degrees(torus)
    parts = {d: project_degree(H, torus, d) for d in degs}
    rest = H
    for p in parts.values():
        rest = rest - p
    return parts, rest


def _eps_theta(G: Hamiltonian, torus, sv: ScheduleValues, cfg: KamConfig):
    parts, high = _low_parts(G, torus)
    p = cfg.params
    total = 0.0
    for d, part in parts.items():
        if d == 0:
            total += counterterm_extract(part, torus).sup()
            total += norm(project_R(part), sv.r, sv.s, sv.eta, p)
        else:
            total += norm(part, sv.r, sv.s, sv.eta, p)
    eps = total / cfg.gamma
    theta = norm(high, sv.r, sv.s, sv.eta, p) / cfg.gamma + eps
    return eps, theta


def initial_state(G0: Hamiltonian, torus: TorusData, cfg: KamConfig) -> KamState:
    G0 = G0.with_cutoff(cfg.cutoff) if G0.cutoff != cfg.cutoff else G0
    cols = [basis_counterterm(torus, j, cfg.cutoff) for j in range(torus.modes.n)]
    eps, th = _eps_theta(G0, torus, schedule(0, cfg), cfg)
    return KamState(0, G0, cols, CounterTerm(torus.modes, np.zeros(torus.modes.n)), eps, th)


class _Solver:
    """Exact solution of the linearized conjugacy equation at one step."""

    def __init__(self, G, columns, torus, omega, cfg):
        self.torus = torus
        self.omega = omega
        self.cfg = cfg
        self.columns = columns
        self.degs = low_degrees(torus)
        self.neg = [d for d in self.degs if d < 0]
        parts, self.high = _low_parts(G, torus)
        self.G = G
        n = torus.modes.n
        self.col_parts = [{d: project_degree(c, torus, d) for d in self.degs} for c in columns]
        self.basis_S, self.basis_B, self.basis_B0 = [], [], []
        IM = np.zeros((n, n))
        for j in range(n):
            S, B = self._negative(self.col_parts[j])
            self.basis_S.append(S)
            self.basis_B.append(B)
            self.basis_B0.append(project_degree(B, torus, 0))
            IM[:, j] = counterterm_extract(self.col_parts[j][0] + B, torus).lam
        self.M = IM - np.eye(n)
        self.M_norm = float(np.max(np.abs(self.M).sum(1))) if n else 0.0

    def _negative(self, parts):
        """Negative-degree part of ``S`` driven by the given low components."""
        S = Hamiltonian.zero(self.G.modes, self.cfg.cutoff)
        for d in self.neg:
            src = parts[d]
            if d > -2:
                src = src + project_degree(poisson_bracket(S, self.high, self.cfg.cutoff), self.torus, d)
            S = S + solve_homological(project_R(src), self.omega)
        B = poisson_bracket(S, self.high, self.cfg.cutoff) if not S.is_zero() else S
        return S, B

    def sweep(self, R: Hamiltonian):
        """Triangular approximate inverse: returns ``(S, lam, {S, high})``."""
        parts = {d: project_degree(R, self.torus, d) for d in self.degs}
        S_neg, B = self._negative(parts)
        k0 = counterterm_extract(parts[0] + B, self.torus).lam
        res = neumann_invert(lambda h: self.M @ h, -k0, self.cfg.neumann_tol)
        lam = res.x
        zero = parts[0] + project_degree(B, self.torus, 0)
        for j, lj in enumerate(lam):
            if lj:
                S_neg = S_neg + lj * self.basis_S[j]
                B = B + lj * self.basis_B[j]
                zero = zero + lj * (self.col_parts[j][0] + self.basis_B0[j])
        S0 = solve_homological(project_R(zero), self.omega)
        B = B + poisson_bracket(S0, self.high, self.cfg.cutoff)
        return S_neg + S0, lam, B

    def residual(self, Z: Hamiltonian, sv: ScheduleValues) -> float:
        total = 0.0
        p = self.cfg.params
        for d in self.degs:
            part = project_degree(Z, self.torus, d)
            if d == 0:
                total += counterterm_extract(part, self.torus).sup()
            total += norm(project_R(part), sv.r, sv.s, sv.eta, p)
        return total / self.cfg.gamma

    def solve(self, sv: ScheduleValues):
        S, lam, B = self.sweep(self.G)
        Z = self.G + B - apply_L(S, self.omega) + self._lam_columns(lam)
        res = self.residual(Z, sv)
        scale = max(self.residual(self.G, sv), 1e-300)
        k = 0
        while res > self.cfg.solve_rtol * scale and k < self.cfg.max_corrections:
            dS, dlam, dB = self.sweep(Z)
            Znew = Z + dB - apply_L(dS, self.omega) + self._lam_columns(dlam)
            res_new = self.residual(Znew, sv)
            if res_new >= res:
                break
            S, lam, Z, res = S + dS, lam + dlam, Znew, res_new
            k += 1
        return S, lam, res, k

    def _lam_columns(self, lam):
        out = Hamiltonian.zero(self.G.modes, self.cfg.cutoff)
        for j, lj in enumerate(lam):
            if lj:
                out = out + lj * self.columns[j]
        return out


def _transport_diagonal(S: Hamiltonian, omega, cfg: KamConfig, ctx):
    """``exp({S,.}) D_omega - D_omega`` with the truncation residual of each bracket."""
    if S.is_zero():
        return Hamiltonian.zero(S.modes, cfg.cutoff), 0.0
    term = -apply_L(S, omega)
    out = term
    trunc = 0.0
    r, s, eta, p = ctx
    for k in range(2, 21):
        trunc += dropped_norm_bound(S, term, cfg.cutoff, r, s, eta, p) / k
        term = poisson_bracket(S, term, cfg.cutoff) / k
        if term.is_zero():
            break
        out = out + term
        if term.max_abs() <= 1e-16 * out.max_abs():
            break
    return out, trunc


def kam_step(state: KamState, omega, torus: TorusData, cfg: KamConfig):
    """One iteration; returns ``(new_state, S_n, lam_n, record)``."""
    t0 = time.perf_counter()
    omega = omega.omega if isinstance(omega, FrequencyVector) else np.asarray(omega, dtype=float)
    sv = schedule(state.n, cfg)
    nxt = schedule(state.n + 1, cfg)
    solver = _Solver(state.G, state.columns, torus, omega, cfg)
    if solver.M_norm >= 1:
        raise NeumannDivergence(f"estimated |M_n| = {solver.M_norm:.3e} is not below 1")
    S, lam, res, k = solver.solve(sv)
    X = state.G + solver._lam_columns(lam)
    ctx = (nxt.r, nxt.s, nxt.eta, cfg.params)
    newX, diag = lie_transform_with_diagnostics(X, S, cutoff=cfg.cutoff, norm_ctx=ctx, rho=sv.rho)
    dD, trD = _transport_diagonal(S, omega, cfg, ctx)
    G_new = newX + dD
    cols = [lie_transform_with_diagnostics(c, S, cutoff=cfg.cutoff)[0] for c in state.columns]
    lam_ct = CounterTerm(torus.modes, lam)
    eps, th = _eps_theta(G_new, torus, nxt, cfg)
    trunc = diag.truncation_residual + trD
    new_state = KamState(
        state.n + 1,
        G_new,
        cols,
        state.Lambda + lam_ct,
        eps,
        th,
        state.generators + [S],
        state.truncation_residual + trunc,
    )
    rec = StepRecord(
        n=state.n,
        eps=state.eps,
        theta=state.Theta,
        lambda_bar_sup=lam_ct.sup(),
        trunc_residual=trunc,
        wall_ms=(time.perf_counter() - t0) * 1e3,
        M_norm=solver.M_norm,
        solve_residual=res,
        corrections=k,
        lie_smallness_ok=diag.smallness_ok,
        generator_norm=norm(S, sv.r - sv.rho, nxt.s, nxt.eta, cfg.params),
    )
    return new_state, S, lam_ct, rec


@dataclass
class KamResult:
    Lambda: CounterTerm
    N: Hamiltonian
    generators: list
    records: list
    converged: bool
    final_eps: float
    truncation_residual: float
    constants: KamConstants
    state: KamState

    @property
    def eps_history(self) -> list[float]:
        return [r.eps for r in self.records] + [self.final_eps]

    def k_fit(self, floor: float = 1e-13) -> float:
        """Geometric mean of ``eps_{n+1} / eps_n^2`` over steps above the rounding floor."""
        e = self.eps_history
        pairs = [(e[i], e[i + 1]) for i in range(len(e) - 1) if e[i] > 0]
        ratios = [b / a**2 for a, b in pairs if b > floor] or [b / a**2 for a, b in pairs]
        if not ratios:
            return 0.0
        return float(np.exp(np.mean(np.log(ratios))))

    @property
    def lambda_sup(self) -> float:
        return self.Lambda.sup()


def run_counterterm_theorem(G0: Hamiltonian, omega, torus: TorusData, cfg: KamConfig, *, raise_on_failure: bool = False) -> KamResult:
    """Iterate until ``eps_n < eps_target``; returns ``Lambda`` with ``(Lambda + H) o Psi = N``.

    ``G0`` is ``H - D_omega``.  ``Lambda`` is the sum of the increments, ``Psi``
    the composition of the time-one maps of the stored generators.
    """
    omega_v = omega.omega if isinstance(omega, FrequencyVector) else np.asarray(omega, dtype=float)
    state = initial_state(G0, torus, cfg)
    records: list[StepRecord] = []
    stalls = 0
    converged = state.eps < cfg.eps_target
    while not converged and state.n < cfg.max_steps:
        prev = state.eps
        state, S, lam, rec = kam_step(state, omega_v, torus, cfg)
        records.append(rec)
        converged = state.eps < cfg.eps_target
        stalls = stalls + 1 if state.eps >= prev else 0
        if stalls >= 3:
            break
    N = Hamiltonian.diagonal(torus.modes, omega_v, cfg.cutoff) + state.G
    result = KamResult(
        Lambda=state.Lambda,
        N=N,
        generators=state.generators,
        records=records,
        converged=converged,
        final_eps=state.eps,
        truncation_residual=state.truncation_residual,
        constants=kam_constants(cfg),
        state=state,
    )
    if raise_on_failure and not converged:
        raise NonConvergence(f"eps stuck at {state.eps:.3e} after {state.n} steps", result)
    return result


def conjugated_hamiltonian(H: Hamiltonian, Lambda: CounterTerm, torus: TorusData, generators: Sequence[Hamiltonian], cutoff: int) -> Hamiltonian:
    """``(Lambda + H) o Psi`` recomputed from the stored generators."""
    out = H + counterterm_hamiltonian(Lambda.lam, torus, cutoff)
    for S in generators:
        out = lie_transform_with_diagnostics(out, S, cutoff=cutoff)[0]
    return out


def invariance_defect(N: Hamiltonian, omega, torus: TorusData, n_points: int, seed: int, params: WeightParams) -> float:
    """Largest weighted sup-norm of ``X_{N - D_omega}`` over random points of the torus."""
    omega = omega.omega if isinstance(omega, FrequencyVector) else np.asarray(omega, dtype=float)
    G = N - Hamiltonian.diagonal(torus.modes, omega, N.cutoff)
    rng = np.random.default_rng(seed)
    amp = np.sqrt(torus.actions)
    worst = 0.0
    for _ in range(n_points):
        u = amp * np.exp(1j * rng.uniform(0, 2 * np.pi, torus.modes.n))
        worst = max(worst, vector_field(G, u).norm(params))
    return worst


def psi_apply(generators: Sequence[Hamiltonian], u, steps: int = 50):
    """``Psi(u) = Phi_{S_0}(Phi_{S_1}(... Phi_{S_{n-1}}(u)))``."""
    if not generators:
        vals = u.values if isinstance(u, StateVector) else np.asarray(u, dtype=complex)
        return StateVector(ModeSet(len(vals) // 2), vals)
    for S in reversed(generators):
        u = flow_point(S, u, steps)
    return u


def map_increments(generators: Sequence[Hamiltonian], points, steps: int = 50) -> list[float]:
    """``sup |Psi_n(u) - Psi_{n-1}(u)|`` over the given points for each ``n``."""
    out = []
    for n in range(1, len(generators) + 1):
        worst = 0.0
        for u in points:
            a = psi_apply(generators[:n], u, steps).values
            b = psi_apply(generators[: n - 1], u, steps).values
            worst = max(worst, float(np.max(np.abs(a - b))))
        out.append(worst)
    return out


def run_family(G_of_omega: Callable[[FrequencyVector], Hamiltonian], omegas: Sequence[FrequencyVector], torus: TorusData, cfg: KamConfig):
    """Run the iteration at each sampled frequency; returns results and the Lipschitz quotient of ``Lambda``."""
    results = [run_counterterm_theorem(G_of_omega(w), w, torus, cfg) for w in omegas]
    lip = 0.0
    for i in range(len(omegas)):
        for k in range(i + 1, len(omegas)):
            dist = float(np.max(np.abs(omegas[i].omega - omegas[k].omega)))
            if dist > 0:
                lip = max(lip, float(np.max(np.abs(results[i].Lambda.lam - results[k].Lambda.lam))) / dist)
    return results, lip


# lower-dimensional tori ------------------------------------------------------

def lowdim_torus(modes: ModeSet, tangential, J: dict, kappa=0.5, r=1.0, params=WeightParams()) -> TorusData:
    """Torus with actions ``J`` on the tangential modes and zero elsewhere."""
    ms = ModeSet(modes.j_max, frozenset(tangential))
    I = np.zeros(ms.n)
    for j, v in J.items():
        if j not in ms.tangential:
            raise ValueError(f"mode {j} is not tangential")
        I[ms.index(j)] = v
    return TorusData(ms, I, kappa, r, params)


def run_lowdim(G0: Hamiltonian, omega, torus: TorusData, cfg: KamConfig, **kw) -> KamResult:
    """Same iteration with the mixed grading of the tangential/normal split."""
    if torus.modes.tangential is None:
        raise ValueError("torus carries no tangential set")
    return run_counterterm_theorem(G0, omega, torus, cfg, **kw)


@dataclass
class FrequencyMapResult:
    Omega: dict
    U: dict
    iterations: int
    residual: float
    mu_samples: list
    last_run: KamResult | None


def solve_frequency_map(alpha: dict, W: dict, torus: TorusData, P: Hamiltonian, cfg: KamConfig,
                        tol: float = 1e-12, max_iter: int = 30, L: int = 4) -> FrequencyMapResult:
    """Fixed point ``Omega_j = j^2 + W_j - mu_j(alpha, Omega)`` over the normal modes.

    ``mu`` is the normal block of the counterterm from the iteration at
    ``omega = (alpha, Omega)``.  When an iterate fails the Diophantine test
    the value is taken from the McShane extension
    ``min_k (mu(Omega^k) + Lip |Omega - Omega^k|)`` of earlier samples.
    """
    modes = torus.modes
    tang = modes.tangential
    normal = [j for j in modes.modes if j not in tang]
    if 0 in normal and W.get(0, 0.0) == 0:
        raise ValueError("W_0 must be nonzero when mode 0 is normal")
    if any(abs(W[j]) > 0.25 for j in normal):
        raise ValueError("need |W_j| <= 1/4")
    idx_n = np.array([modes.index(j) for j in normal], dtype=int)
    base = np.array([j * j + W[j] for j in normal], dtype=float)
    ells = enumerate_ells(modes.modes, L, max_normal=2, normal=normal, zero_momentum=True)
    omega = np.array([alpha[j] if j in tang else 0.0 for j in modes.modes], dtype=float)
    Om = base.copy()
    samples: list[tuple[np.ndarray, np.ndarray]] = []
    last = None
    res = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        omega[idx_n] = Om
        if is_diophantine(omega, modes.modes, cfg.gamma, ells).ok or not samples:
            last = run_counterterm_theorem(P, omega, torus, cfg)
            mu = last.Lambda.lam[idx_n]
            samples.append((Om.copy(), mu.copy()))
        else:
            mu = _mcshane(samples, Om)
        new = base - mu
        res = float(np.max(np.abs(new - Om))) if new.size else 0.0
        Om = new
        if res < tol:
            break
    else:
        raise NonConvergence(f"frequency map did not contract (last step {res:.3e})")
    omega[idx_n] = Om
    lam = last.Lambda.lam if last is not None else np.zeros(modes.n)
    U = {j: alpha[j] + lam[modes.index(j)] - j * j for j in tang}
    return FrequencyMapResult({j: float(v) for j, v in zip(normal, Om)}, U, it, res, samples, last)


def _mcshane(samples, x):
    pts = np.array([s[0] for s in samples])
    vals = np.array([s[1] for s in samples])
    lip = 0.0
    for i in range(len(pts)):
        for k in range(i + 1, len(pts)):
            d = float(np.max(np.abs(pts[i] - pts[k])))
            if d > 0:
                lip = max(lip, float(np.max(np.abs(vals[i] - vals[k]))) / d)
    dist = np.max(np.abs(pts - x[None, :]), axis=1)
    return np.min(vals + lip * dist[:, None], axis=0)


@dataclass
class MelnikovReport:
    checked: int
    min_margin: float
    worst: dict
    violations: list

    @property
    def ok(self) -> bool:
        return not self.violations


def melnikov_check(alpha: dict, Omega: dict, h_mass_max: int, gamma: float) -> MelnikovReport:
    """``|alpha.h + s Omega_j + s' Omega_k| > gamma prod_n 1/(1 + |h_n|^6 <n>^6)`` with momentum balance.

    The trivial combinations (``h = 0`` and the two normal terms cancelling
    identically) are skipped.
    """
    S = sorted(alpha)
    normal = sorted(Omega)
    hs = [np.zeros(len(S), dtype=int)]
    for k in range(1, h_mass_max + 1):
        for h in _signed(len(S), k):
            hs.append(np.array(h))
    av = np.array([alpha[j] for j in S])
    Sarr = np.array(S)
    checked, worst_m, worst, viol = 0, math.inf, {}, []
    for h in hs:
        ph = int(h @ Sarr)
        thr = gamma * float(np.prod(1.0 / (1.0 + np.abs(h) ** 6 * np.maximum(np.abs(Sarr), 1) ** 6)))
        ah = float(h @ av)
        for s1 in (-1, 0, 1):
            for j in normal if s1 else [None]:
                for s2 in (-1, 0, 1):
                    for k in normal if s2 else [None]:
                        if (s2 and not s1) or (s1 and s2 and (j, s1) > (k, s2)):
                            continue
                        mom = ph + (s1 * j if s1 else 0) + (s2 * k if s2 else 0)
                        if mom != 0:
                            continue
                        if not h.any() and _trivial(s1, j, s2, k):
                            continue
                        val = abs(ah + (s1 * Omega[j] if s1 else 0) + (s2 * Omega[k] if s2 else 0))
                        checked += 1
                        margin = val - thr
                        wit = {"h": {int(a): int(b) for a, b in zip(S, h) if b}, "j": j, "sigma": s1, "k": k, "sigma_p": s2}
                        if margin < worst_m:
                            worst_m, worst = margin, wit
                        if margin <= 0:
                            viol.append({"witness": wit, "lhs": val, "rhs": thr})
    return MelnikovReport(checked, worst_m, worst, viol)


def _trivial(s1, j, s2, k):
    if not s1 and not s2:
        return True
    return bool(s1 and s2 and s1 == -s2 and j == k)


def _signed(n, mass):
    def rec(pos, left):
        if pos == n:
            if left == 0:
                yield ()
            return
        for v in range(-left, left + 1):
            for rest in rec(pos + 1, left - abs(v)):
                yield (v,) + rest

    yield from rec(0, mass)


def measure_lowdim(gamma: float, tangential, j_max: int, L: int, n_samples: int, seed: int,
                   Omega_of_alpha: Callable[[np.ndarray], np.ndarray] | None = None, W: dict | None = None) -> float:
    """Fraction of tangential frequencies whose ``(alpha, Omega(alpha))`` fails the zero-momentum condition.

    ``Omega_of_alpha`` defaults to the unperturbed surrogate ``Omega_j = j^2 + W_j``.
    """
    modes = ModeSet(j_max, frozenset(tangential))
    tang = sorted(modes.tangential)
    normal = [j for j in modes.modes if j not in modes.tangential]
    W = W or {j: 0.1 for j in normal}
    ells = enumerate_ells(modes.modes, L, max_normal=2, normal=normal, zero_momentum=True)
    # ell supported only on normal modes: the resonant set is empty there
    tmask = np.array([j in modes.tangential for j in modes.modes])
    ells = ells[np.abs(ells[:, tmask]).sum(1) > 0]
    rng = np.random.default_rng(seed)
    fails = 0
    it = np.array([modes.index(j) for j in tang])
    inn = np.array([modes.index(j) for j in normal])
    for _ in range(n_samples):
        a = np.array([j * j for j in tang], dtype=float) + rng.uniform(-0.5, 0.5, len(tang))
        Om = Omega_of_alpha(a) if Omega_of_alpha else np.array([j * j + W[j] for j in normal])
        om = np.zeros(modes.n)
        om[it] = a
        om[inn] = Om
        if not is_diophantine(om, modes.modes, gamma, ells).ok:
            fails += 1
    return fails / n_samples
