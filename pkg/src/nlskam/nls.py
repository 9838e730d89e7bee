"""Truncated NLS Hamiltonians on the circle and the Theorem-level drivers.

The nonlinearity is ``f(x, y) = sum_d f_d(x) y^d`` with ``f_d(x) = sum_k f_{d,k} e^{ikx}``
and the perturbation is ``P = int F(x, |u(x)|^2) dx / 2pi`` with
``F(x, y) = int_0^y f(x, t) dt`` and ``u(x) = sum_j u_j e^{ijx}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import zeta

from .hamiltonian import EXP_DTYPE, FrequencyVector, Hamiltonian, WeightParams, norm
from .indexing import ModeSet, multi_indices
from .projections import CounterTerm, TorusData


@dataclass(frozen=True)
class NonlinearitySpec:
    """Coefficients ``f_{d,k}`` keyed by ``(d, k)``, with strip width and radius."""

    coeffs: dict = field(default_factory=dict)
    strip: float = 1.0
    radius: float = 1.0

    def __post_init__(self):
        for (d, k), c in self.coeffs.items():
            if d < 1:
                raise ValueError("degrees start at 1")
            partner = self.coeffs.get((d, -k), 0)
            if abs(partner - np.conj(c)) > 1e-14 * max(1.0, abs(c)):
                raise ValueError(f"f_{{{d},{-k}}} must be the conjugate of f_{{{d},{k}}}")

    def analytic_norm(self) -> float:
        """``sum_d sup_k |f_{d,k}| e^{strip |k|} R^d``."""
        best: dict[int, float] = {}
        for (d, k), c in self.coeffs.items():
            best[d] = max(best.get(d, 0.0), abs(c) * math.exp(self.strip * abs(k)))
        return sum(v * self.radius**d for d, v in best.items())

    @classmethod
    def power(cls, d: int, c: float = 1.0, strip: float = 1.0, radius: float = 1.0) -> "NonlinearitySpec":
        return cls({(d, 0): c}, strip, radius)

    def dumps(self) -> str:
        lines = [f"# nonlinearity strip={self.strip!r} radius={self.radius!r}"]
        for (d, k) in sorted(self.coeffs):
            c = complex(self.coeffs[(d, k)])
            lines.append(f"{d} {k} {c.real!r} {c.imag!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "NonlinearitySpec":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines[0].startswith("# nonlinearity"):
            raise ValueError("missing nonlinearity header")
        hdr = dict(tok.split("=") for tok in lines[0].split()[2:])
        coeffs = {}
        for ln in lines[1:]:
            d, k, re, im = ln.split()
            coeffs[(int(d), int(k))] = complex(float(re), float(im))
        return cls(coeffs, float(hdr["strip"]), float(hdr["radius"]))


def _multinomial(idx) -> int:
    total = sum(idx.values())
    out = math.factorial(total)
    for c in idx.values():
        out //= math.factorial(c)
    return out


def build_nls_perturbation(f: NonlinearitySpec, modes: ModeSet, degree_cutoff: int) -> Hamiltonian:
    """Monomial expansion of ``int F(x, |u|^2) dx / 2pi``.

    ``(|u|^2)^{d+1}`` contributes ``(d+1)!^2 / (alpha! beta!) u^alpha conj(u)^beta e^{i pi(alpha-beta) x}``,
    and integration against ``f_{d,k} e^{ikx}`` keeps ``k = -pi(alpha - beta)``.
    """
    if degree_cutoff < 4:
        raise ValueError("degree cutoff must be at least 4")
    rows, cs = [], []
    degs = sorted({d for d, _ in f.coeffs})
    if degs and 2 * (degs[0] + 1) > degree_cutoff:
        raise ValueError("degree cutoff too small to hold any term of the nonlinearity")
    ms = modes.modes
    for d in degs:
        if 2 * (d + 1) > degree_cutoff:
            continue
        idx = list(multi_indices(ms, d + 1))
        arrs = np.array([i.to_array(modes) for i in idx])
        mom = arrs @ modes.mode_array()
        mult = np.array([_multinomial(i) for i in idx], dtype=float)
        for a in range(len(idx)):
            for b in range(len(idx)):
                k = -(mom[a] - mom[b])
                c = f.coeffs.get((d, int(k)))
                if c is None or c == 0:
                    continue
                rows.append(np.concatenate([arrs[a], arrs[b]]))
                cs.append(c * mult[a] * mult[b] / (d + 1))
    if not rows:
        return Hamiltonian.zero(modes, degree_cutoff)
    return Hamiltonian(modes, np.array(rows, dtype=EXP_DTYPE), np.array(cs, dtype=complex), degree_cutoff)


def nls_hamiltonian(f: NonlinearitySpec, modes: ModeSet, V, degree_cutoff: int) -> Hamiltonian:
    j = modes.mode_array().astype(float)
    return Hamiltonian.diagonal(modes, j**2 + np.asarray(V, dtype=float), degree_cutoff) + build_nls_perturbation(
        f, modes, degree_cutoff
    )


def algebra_constant(p: float) -> float:
    """``2^{p+1} (1 + 2 zeta(p))``."""
    return 2 ** (p + 1) * (1 + 2 * float(zeta(p)))


def sup_weight(p: float, s: float, t: float, theta: float, j_stop: int = 10**6) -> float:
    """``sup_j exp(-t|j| + s <j>^theta) <j>^p`` (needs ``t > 0``)."""
    if t <= 0:
        raise ValueError("t must be positive")
    j = np.arange(0, j_stop + 1, dtype=float)
    jb = np.maximum(j, 1)
    return float(np.exp(np.max(-t * j + s * jb**theta + p * np.log(jb))))


@dataclass
class RegularityReport:
    lhs: float
    rhs: float

    @property
    def ok(self) -> bool:
        return self.lhs <= self.rhs * (1 + 1e-12)

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs


def verify_regularity_bound(P: Hamiltonian, f: NonlinearitySpec, r: float, s: float, eta: float, params: WeightParams) -> RegularityReport:
    """``|P|_{r,s,eta} <= C(p, s, strip - a - eta) (C_alg r)^2 |f| / R``."""
    c_alg = algebra_constant(params.p)
    if (c_alg * r) ** 2 > f.radius:
        raise ValueError("requires (C_alg r)^2 <= R")
    t = f.strip - params.a - eta
    rhs = sup_weight(params.p, s, t, params.theta) * (c_alg * r) ** 2 * f.analytic_norm() / f.radius
    return RegularityReport(norm(P, r, s, eta, params), rhs)


def potential_from_counterterm(lam: CounterTerm, omega: FrequencyVector) -> np.ndarray:
    """``V_j = lambda_j + omega_j - j^2``."""
    return np.asarray(lam.lam) + omega.xi


@dataclass(frozen=True)
class TheoremParameters:
    r0: float
    rho: float
    eta0: float
    sigma: float
    s0: float


def theorem_parameters(r: float, s: float, strip: float, a: float) -> TheoremParameters:
    """``r0 = 2 sqrt2 r``, ``rho = r0 - 2r``, ``eta0 = (strip - a)/2``, ``sigma = min(s, eta0, 2)/2``, ``s0 = s - sigma``."""
    r0 = 2 * math.sqrt(2) * r
    eta0 = (strip - a) / 2
    sigma = 0.5 * min(s, eta0, 2.0)
    return TheoremParameters(r0, r0 - 2 * r, eta0, sigma, s - sigma)


def desk_config(r: float, params: WeightParams, strip: float, gamma: float, cutoff: int, **kw):
    """Iteration parameters derived from the torus radius ``r`` and the analyticity strip.

    ``sigma`` is pulled slightly inside ``min(eta0/2, 1)`` because the choice
    ``sigma = min(s, eta0, 2)/2`` can sit exactly on that boundary.
    """
    from .kam import KamConfig

    tp = theorem_parameters(r, params.s, strip, params.a)
    sigma = min(tp.sigma, (1 - 2.0**-20) * min(tp.eta0 / 2, 1.0))
    return KamConfig(
        r0=tp.r0, s0=params.s - sigma, eta0=tp.eta0, rho=tp.rho, sigma=sigma, gamma=gamma,
        params=params, cutoff=cutoff, torus_radius=r, **kw,
    )


def log_epsilon_star(cfg, f: NonlinearitySpec) -> float:
    """``log eps_* = log( eps_bar / (8 C_alg^2 C(p, s0, eta0)) )``."""
    from .kam import kam_constants

    p = cfg.params
    c_alg = algebra_constant(p.p)
    C = sup_weight(p.p, cfg.s0, f.strip - p.a - cfg.eta0, p.theta)
    return kam_constants(cfg).log_eps_bar - math.log(8 * c_alg**2 * C)


def initial_eps(f: NonlinearitySpec, modes: ModeSet, omega, r: float, params: WeightParams, gamma: float,
                cutoff: int, support: int | None = None, strip: float | None = None) -> float:
    from .kam import initial_state

    cfg = desk_config(r, params, f.strip if strip is None else strip, gamma, cutoff)
    torus = TorusData.profile(modes, r, params, support=support)
    return initial_state(build_nls_perturbation(f, modes, cutoff), torus, cfg).eps


def tune_radius(f: NonlinearitySpec, modes: ModeSet, omega, params: WeightParams, gamma: float, cutoff: int,
                target: float, support: int | None = None, bracket=(1e-6, 1.0)) -> float:
    """Radius ``r`` at which the initial ``eps`` equals ``target``."""
    from scipy.optimize import brentq

    def g(logr):
        return math.log(initial_eps(f, modes, omega, math.exp(logr), params, gamma, cutoff, support)) - math.log(target)

    lo, hi = (math.log(b) for b in bracket)
    return math.exp(brentq(g, lo, hi, xtol=1e-10))


@dataclass
class NlsRun:
    result: object
    V: np.ndarray
    omega: FrequencyVector
    torus: TorusData
    config: object
    log_eps_star: float
    smallness: float

    @property
    def below_threshold(self) -> bool:
        return math.log(max(self.smallness, 1e-300)) <= self.log_eps_star


def run_nls_kam(f: NonlinearitySpec, modes: ModeSet, omega, r: float, params: WeightParams, gamma: float,
                cutoff: int, support: int | None = None, **kw) -> NlsRun:
    """Find ``V`` such that the NLS with potential ``V`` has the torus of actions ``I`` at frequency ``omega``.

    ``smallness`` is ``|f| r^2 / (gamma R)`` and is reported against ``eps_*``,
    not enforced.
    """
    from .kam import run_counterterm_theorem

    omega = omega if isinstance(omega, FrequencyVector) else FrequencyVector.from_omega(modes, omega)
    cfg = desk_config(r, params, f.strip, gamma, cutoff, **kw)
    torus = TorusData.profile(modes, r, params, support=support)
    P = build_nls_perturbation(f, modes, cutoff)
    res = run_counterterm_theorem(P, omega, torus, cfg)
    return NlsRun(
        result=res,
        V=potential_from_counterterm(res.Lambda, omega),
        omega=omega,
        torus=torus,
        config=cfg,
        log_eps_star=log_epsilon_star(cfg, f),
        smallness=f.analytic_norm() * r * r / (gamma * f.radius),
    )
