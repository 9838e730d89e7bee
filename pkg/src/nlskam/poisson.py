"""Poisson brackets, Hamiltonian vector fields and Lie transforms.

Convention: ``{F, G} = i sum_j (dF/d conj(u_j) dG/du_j - dF/du_j dG/d conj(u_j))``
and ``X_H = i dH/d conj(u)``.  With it ``{D_omega, .}`` multiplies the monomial
``u^a conj(u)^b`` by ``i omega.(a-b)``, the flow of ``H`` satisfies
``dF/dt = {H, F}``, and ``exp({S, .}) H = H o Phi_S`` for the time-one map
``Phi_S`` of ``X_S``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .hamiltonian import EXP_DTYPE, Hamiltonian, WeightParams, log_u0, norm
from .indexing import ModeSet


@dataclass(frozen=True)
class StateVector:
    modes: ModeSet
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex).reshape(-1)
        if v.shape != (self.modes.n,):
            raise ValueError(f"state has {v.size} entries, expected {self.modes.n}")
        object.__setattr__(self, "values", v)

    def norm(self, params: WeightParams, s: float | None = None) -> float:
        from .hamiltonian import sequence_norm

        return sequence_norm(self.values, self.modes.modes, params, s)

    def __getitem__(self, j):
        return self.values[self.modes.index(j)]


def _cutoff(F: Hamiltonian, G: Hamiltonian, cutoff):
    if cutoff is not None:
        return cutoff
    cs = [c for c in (F.cutoff, G.cutoff) if c is not None]
    return max(cs) if cs else None


def _degree_blocks(H: Hamiltonian):
    deg = H.degrees
    return [(int(d), np.nonzero(deg == d)[0]) for d in np.unique(deg)]


def poisson_bracket(F: Hamiltonian, G: Hamiltonian, cutoff: int | None = None) -> Hamiltonian:
    """Bracket of two series; terms of degree above the cutoff are dropped."""
    cut = _cutoff(F, G, cutoff)
    n = F.n
    out_e, out_c = [], []
    for df, fi in _degree_blocks(F):
        for dg, gi in _degree_blocks(G):
            if df == 0 or dg == 0 or (cut is not None and df + dg - 2 > cut):
                continue
            Fe, Fc = F.exps[fi].astype(np.int32), F.coeffs[fi]
            Ge, Gc = G.exps[gi].astype(np.int32), G.coeffs[gi]
            for j in range(n):
                fm = np.nonzero(Fe[:, j] + Fe[:, n + j] > 0)[0]
                gm = np.nonzero(Ge[:, j] + Ge[:, n + j] > 0)[0]
                if not fm.size or not gm.size:
                    continue
                w = np.outer(Fe[fm, n + j], Ge[gm, j]) - np.outer(Fe[fm, j], Ge[gm, n + j])
                a, b = np.nonzero(w)
                if not a.size:
                    continue
                e = Fe[fm[a]] + Ge[gm[b]]
                e[:, j] -= 1
                e[:, n + j] -= 1
                out_e.append(e)
                out_c.append(1j * w[a, b] * Fc[fm[a]] * Gc[gm[b]])
    if not out_e:
        return Hamiltonian.zero(F.modes, cut)
    return Hamiltonian(F.modes, np.concatenate(out_e).astype(EXP_DTYPE), np.concatenate(out_c), cut)


def dropped_norm_bound(F: Hamiltonian, G: Hamiltonian, cutoff: int, r: float, s: float, eta: float, params: WeightParams) -> float:
    """Upper bound for the norm of the part of ``{F, G}`` above the cutoff.

    The majorant weights factor over the two inputs, so the bound is
    assembled from per-block moment matrices without forming the dropped
    monomials; cancellations between dropped terms are ignored.
    """
    if not len(F) or not len(G):
        return 0.0
    lu = log_u0(F.modes.modes, r, s, params)
    inv2 = np.exp(-2.0 * lu)

    def moments(H, idx):
        A = H.alpha[idx].astype(float)
        B = H.beta[idx].astype(float)
        phi = np.abs(H.coeffs[idx]) * np.exp((A + B) @ lu + eta * np.abs(H.momenta[idx]))
        return (
            (B * phi[:, None]).T @ B,
            (A * phi[:, None]).T @ B,
            phi @ A,
            phi @ B,
        )

    fb = _degree_blocks(F)
    gb = _degree_blocks(G)
    total = np.zeros(F.n)
    for df, fi in fb:
        for dg, gi in gb:
            if df == 0 or dg == 0 or df + dg - 2 <= cutoff:
                continue
            PF, QF, aF, bF = moments(F, fi)
            PG, QG, aG, bG = moments(G, gi)
            inner = PF * aG[:, None] + bF[:, None] * QG + QF * bG[:, None] + aF[:, None] * PG
            total += inv2 @ inner
    return float(np.max(total * inv2))


def _d_conj(H: Hamiltonian, u: np.ndarray) -> np.ndarray:
    """``dH/d conj(u_j)`` at ``u`` for every mode ``j``."""
    n = H.n
    out = np.zeros(n, dtype=complex)
    if not len(H):
        return out
    uc = np.conj(u)
    A = H.alpha.astype(np.int64)
    B = H.beta.astype(np.int64)
    ua = np.prod(u[None, :] ** A, axis=1) * H.coeffs
    for j in range(n):
        m = B[:, j] > 0
        if not m.any():
            continue
        Bj = B[m].copy()
        Bj[:, j] -= 1
        out[j] = np.sum(ua[m] * B[m, j] * np.prod(uc[None, :] ** Bj, axis=1))
    return out


def vector_field(H: Hamiltonian, u) -> StateVector:
    """``X_H(u)`` with components ``i dH/d conj(u_j)``."""
    vals = u.values if isinstance(u, StateVector) else np.asarray(u, dtype=complex)
    return StateVector(H.modes, 1j * _d_conj(H, vals))


class FieldEvaluator:
    """Precompiled evaluation of ``X_H`` for repeated calls along trajectories.

    The derivative of each monomial in ``conj(u_j)`` is the product of the
    per-mode factors for ``i != j`` (prefix times suffix products) and the
    reduced factor at ``j``; no division by ``u_j`` is needed, so zero
    coordinates are fine.
    """

    def __init__(self, H: Hamiltonian):
        self.n = H.n
        self.A = H.alpha.astype(np.int64)
        self.B = H.beta.astype(np.int64)
        self.Bm1 = np.maximum(self.B - 1, 0)
        self.coef = 1j * H.coeffs[:, None] * self.B
        self.maxdeg = int(max(self.A.max(initial=0), self.B.max(initial=0)))

    def __call__(self, u: np.ndarray) -> np.ndarray:
        """Field at ``u`` of shape ``(n,)`` or a batch ``(m, n)``."""
        u = np.asarray(u, dtype=complex)
        if not self.coef.size:
            return np.zeros(u.shape, dtype=complex)
        single = u.ndim == 1
        U = u[None, :] if single else u
        # powers table avoids repeated complex exponentiation
        k = np.arange(self.maxdeg + 1)[None, :, None]
        pu = U[:, None, :] ** k
        pc = np.conj(U)[:, None, :] ** k
        cols = np.arange(self.n)
        fa = pu[:, self.A, cols]
        full = fa * pc[:, self.B, cols]
        reduced = fa * pc[:, self.Bm1, cols]
        ones = np.ones(full.shape[:2] + (1,), dtype=complex)
        pre = np.cumprod(np.concatenate([ones, full[:, :, :-1]], axis=2), axis=2)
        suf = np.cumprod(np.concatenate([ones, full[:, :, :0:-1]], axis=2), axis=2)[:, :, ::-1]
        out = np.einsum("btn,tn->bn", pre * suf * reduced, self.coef)
        return out[0] if single else out


@dataclass
class LieDiagnostics:
    terms_used: int
    tail_bound: float
    smallness_ok: bool
    truncation_residual: float


def lie_transform(H: Hamiltonian, S: Hamiltonian, k_max: int | None = None, cutoff: int | None = None) -> Hamiltonian:
    """``sum_k ad_S^k H / k!`` truncated at degree and at order ``k_max``."""
    return lie_transform_with_diagnostics(H, S, k_max, cutoff)[0]


def lie_transform_with_diagnostics(
    H: Hamiltonian,
    S: Hamiltonian,
    k_max: int | None = None,
    cutoff: int | None = None,
    *,
    norm_ctx: tuple | None = None,
    rho: float | None = None,
    cap: int = 20,
    rel_tol: float = 1e-14,
):
    """Lie series with a tail estimate.

    ``norm_ctx = (r, s, eta, params)`` enables the majorant diagnostics: the
    smallness condition ``|S|_{r+rho} <= rho / (16 e (r + rho))``, the
    geometric tail bound ``2 |H| (|S| / 2 delta)^(h)`` and the norm of the
    terms dropped by degree truncation.  Without it the series stops when a
    term becomes negligible coefficientwise.
    """
    cut = _cutoff(H, S, cutoff)
    limit = cap if k_max is None else min(k_max, cap)
    result = H.with_cutoff(cut) if cut is not None else H
    term = result
    head = max(result.max_abs(), 1e-300)
    trunc = 0.0
    used = 0
    for k in range(1, limit + 1):
        if norm_ctx is not None and cut is not None:
            r, s, eta, params = norm_ctx
            trunc += dropped_norm_bound(S, term, cut, r, s, eta, params) / k
        term = poisson_bracket(S, term, cut) / k
        if term.is_zero():
            break
        result = result + term
        used = k
        head = max(head, result.max_abs())
        if k_max is None and term.max_abs() <= rel_tol * head:
            break
    tail, ok = 0.0, True
    if norm_ctx is not None and rho is not None and not S.is_zero():
        r, s, eta, params = norm_ctx
        nS = norm(S, r + rho, s, eta, params)
        delta = rho / (16 * math.e * (r + rho))
        ok = nS <= delta
        q = nS / (2 * delta)
        tail = 2 * norm(H, r + rho, s, eta, params) * q ** (used + 1) if q < 1 else math.inf
    return result, LieDiagnostics(used, tail, ok, trunc)


def lie_transform_diagonal(omega, S: Hamiltonian, cutoff: int | None = None, cap: int = 20) -> Hamiltonian:
    """``exp({S, .}) D_omega - D_omega`` computed without brackets against ``D_omega``.

    Uses ``{S, D_omega} = -L_omega S`` and continues the series with ``S``.
    """
    cut = cutoff if cutoff is not None else S.cutoff
    if S.is_zero():
        return Hamiltonian.zero(S.modes, cut)
    term = -apply_L(S, omega)
    result = term
    head = max(term.max_abs(), 1e-300)
    for k in range(2, cap + 1):
        term = poisson_bracket(S, term, cut) / k
        if term.is_zero() or term.max_abs() <= 1e-14 * head:
            if not term.is_zero():
                result = result + term
            break
        result = result + term
    return result.with_cutoff(cut) if cut is not None else result


def divisors(H: Hamiltonian, omega) -> np.ndarray:
    """``omega . (alpha - beta)`` per term."""
    d = H.alpha.astype(float) - H.beta
    return d @ np.asarray(omega, dtype=float)


def apply_L(H: Hamiltonian, omega) -> Hamiltonian:
    """``L_omega H = {D_omega, H}``."""
    return H._new(H.exps, 1j * divisors(H, omega) * H.coeffs)


def flow_point(S: Hamiltonian, u, steps: int = 100, t: float = 1.0, radius: float | None = None) -> StateVector:
    """Time-``t`` map of ``X_S`` by fixed-step RK4."""
    vals = (u.values if isinstance(u, StateVector) else np.asarray(u, dtype=complex)).copy()
    if S.is_zero():
        return StateVector(S.modes, vals)
    f = FieldEvaluator(S)
    h = t / steps
    start = float(np.max(np.abs(vals))) if vals.size else 0.0
    bound = 2 * (radius if radius is not None else max(start, 1e-300))
    for _ in range(steps):
        k1 = f(vals)
        k2 = f(vals + 0.5 * h * k1)
        k3 = f(vals + 0.5 * h * k2)
        k4 = f(vals + h * k3)
        vals = vals + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(vals)) or np.max(np.abs(vals)) > bound:
            raise FloatingPointError("flow left twice the domain radius")
    return StateVector(S.modes, vals)
