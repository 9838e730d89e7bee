"""Degree decomposition of Hamiltonians at a torus ``{|u_j|^2 = I_j}``.

Every monomial is written as ``|u|^{2m} u^a conj(u)^b`` with ``a``, ``b`` of
disjoint support.  Replacing ``|u|^2`` by an auxiliary variable ``w`` gives a
polynomial in ``w`` for each ``(a, b)``; its Taylor expansion at ``w = I``
sorted by homogeneous order ``q`` in ``w - I`` yields the degree ``2q - 2``
component.  Projections act only on the ``m`` part, so they are computed
from a per-``m`` table of output exponents and weights.

Modes outside the tangential set carry zero action and are graded by their
plain homogeneous degree, which makes odd degrees possible.  When every mode
is tangential the grading reduces to the even one.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .hamiltonian import EXP_DTYPE, Hamiltonian, WeightParams, log_u0, sequence_norm, u0_weight
from .indexing import ModeSet


def c_kappa(kappa: float) -> float:
    if not 0 < kappa < 1:
        raise ValueError("kappa must lie in (0, 1)")
    k2 = kappa * kappa
    # the branches disagree at 1/2; keep sqrt(1/2)**2 on the lower one
    if k2 > 0.5 + 4 * np.finfo(float).eps:
        return 1.0 / math.log(1.0 / k2)
    return 2.0 * k2


@dataclass(frozen=True)
class TorusData:
    """Actions ``I_j`` of the torus, with the radius data used to validate them."""

    modes: ModeSet
    actions: np.ndarray
    kappa: float = 0.5
    r: float = 1.0
    params: WeightParams = WeightParams()

    def __post_init__(self):
        I = np.asarray(self.actions, dtype=float).reshape(-1)
        if I.shape != (self.modes.n,):
            raise ValueError(f"expected {self.modes.n} actions, got {I.size}")
        if np.any(I < 0):
            raise ValueError("actions must be nonnegative")
        if not 0 < self.kappa < 1:
            raise ValueError("kappa must lie in (0, 1)")
        I.setflags(write=False)
        object.__setattr__(self, "actions", I)

    @property
    def tangential(self) -> np.ndarray:
        return self.modes.tangential_mask()

    def check(self, rtol: float = 1e-12) -> list[str]:
        """Violated validity conditions, empty when the torus is admissible."""
        problems = []
        u0 = u0_weight(np.array(self.modes.modes), self.r, self.params)
        over = self.actions > (1 + rtol) * self.kappa**2 * u0**2
        if over.any():
            problems.append(f"I_j > kappa^2 u0_j^2 at modes {list(np.array(self.modes.modes)[over])}")
        sq = sequence_norm(np.sqrt(self.actions), self.modes.modes, self.params)
        if sq > (1 + rtol) * self.kappa * self.r:
            problems.append(f"|sqrt I| = {sq:.3e} exceeds kappa r = {self.kappa * self.r:.3e}")
        normal = ~self.tangential
        if np.any(self.actions[normal] != 0):
            problems.append("modes outside the tangential set must have zero action")
        return problems

    @classmethod
    def profile(cls, modes: ModeSet, r: float, params: WeightParams, kappa: float = 0.5, support: int | None = None):
        """``sqrt(I_j) = kappa u0_j(r)`` on ``|j| <= support`` and on tangential modes, zero elsewhere."""
        j = np.array(modes.modes)
        I = (kappa * u0_weight(j, r, params)) ** 2
        mask = modes.tangential_mask()
        if support is not None:
            mask = mask & (np.abs(j) <= support)
        return cls(modes, np.where(mask, I, 0.0), kappa, r, params)


def dumps_torus(torus: TorusData) -> str:
    """Header with ``kappa``, ``r`` and the mode range, then one ``j:I_j`` line per mode."""
    tang = "" if torus.modes.tangential is None else ",".join(str(j) for j in sorted(torus.modes.tangential))
    lines = [f"# torus j_max={torus.modes.j_max} kappa={torus.kappa!r} r={torus.r!r} tangential={tang or '*'}"]
    lines += [f"{j}:{float(I)!r}" for j, I in zip(torus.modes.modes, torus.actions)]
    return "\n".join(lines) + "\n"


def loads_torus(text: str, params: WeightParams = WeightParams()) -> TorusData:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("# torus"):
        raise ValueError("missing torus header line")
    hdr = dict(tok.split("=", 1) for tok in lines[0].split()[2:])
    tang = None if hdr["tangential"] == "*" else frozenset(int(j) for j in hdr["tangential"].split(",") if j)
    modes = ModeSet(int(hdr["j_max"]), tang)
    I = np.zeros(modes.n)
    for ln in lines[1:]:
        j, v = ln.split(":")
        I[modes.index(int(j))] = float(v)
    return TorusData(modes, I, float(hdr["kappa"]), float(hdr["r"]), params)


@dataclass(frozen=True)
class CounterTerm:
    """``sum_j lambda_j (|u_j|^2 - I_j)``."""

    modes: ModeSet
    lam: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float).reshape(-1)
        if lam.shape != (self.modes.n,):
            raise ValueError(f"expected {self.modes.n} entries")
        lam.setflags(write=False)
        object.__setattr__(self, "lam", lam)

    def sup(self) -> float:
        return float(np.max(np.abs(self.lam))) if self.lam.size else 0.0

    def hamiltonian(self, torus: TorusData, cutoff=None) -> Hamiltonian:
        return counterterm_hamiltonian(self.lam, torus, cutoff)

    def __add__(self, other: "CounterTerm") -> "CounterTerm":
        return CounterTerm(self.modes, self.lam + other.lam)

    def __neg__(self):
        return CounterTerm(self.modes, -self.lam)

    def __sub__(self, other):
        return self + (-other)


def counterterm_hamiltonian(lam, torus: TorusData, cutoff=None) -> Hamiltonian:
    lam = np.asarray(lam, dtype=float)
    return Hamiltonian.diagonal(torus.modes, lam, cutoff) + Hamiltonian.constant(
        torus.modes, -float(lam @ torus.actions), cutoff
    )


def basis_counterterm(torus: TorusData, j_index: int, cutoff=None) -> Hamiltonian:
    e = np.zeros(torus.modes.n)
    e[j_index] = 1.0
    return counterterm_hamiltonian(e, torus, cutoff)


# per-m projection tables ---------------------------------------------------

def _sub_indices(m: tuple[int, ...], total: int | None = None):
    ranges = [range(c + 1) for c in m]
    for d in itertools.product(*ranges):
        if total is None or sum(d) == total:
            yield d


@lru_cache(maxsize=None)
def _table_integer(m: tuple[int, ...], q: int):
    """Integer weights ``sum_delta binom(m,delta) binom(delta,gamma) (-1)^{|delta-gamma|}``.

    Returns ``{gamma: weight}`` for the degree ``2q-2`` part of ``w^m``;
    the action power ``I^(m-gamma)`` is applied by the caller.
    """
    out: dict[tuple, int] = {}
    for delta in _sub_indices(m, q):
        bmd = math.prod(math.comb(mi, di) for mi, di in zip(m, delta))
        for gamma in _sub_indices(delta):
            w = bmd * math.prod(math.comb(di, gi) for di, gi in zip(delta, gamma))
            if (sum(delta) - sum(gamma)) % 2:
                w = -w
            out[gamma] = out.get(gamma, 0) + w
    return {g: w for g, w in out.items() if w}


def _decompose(H: Hamiltonian, tang: np.ndarray):
    n = H.n
    A = H.alpha.astype(np.int64)
    B = H.beta.astype(np.int64)
    m = np.where(tang[None, :], np.minimum(A, B), 0)
    zdeg = ((A + B) * (~tang)[None, :]).sum(1)
    return m, zdeg


def project_degree(H: Hamiltonian, torus: TorusData, d: int) -> Hamiltonian:
    """Component of torus degree ``d`` (``d >= -2``)."""
    tang = torus.tangential
    if d < -2:
        raise ValueError("torus degree is at least -2")
    if tang.all() and d % 2:
        raise ValueError("odd degrees need a proper tangential set")
    if not len(H):
        return Hamiltonian.zero(H.modes, H.cutoff)
    n = H.n
    m, zdeg = _decompose(H, tang)
    twice_q = d + 2 - zdeg
    ok = (twice_q >= 0) & (twice_q % 2 == 0) & (twice_q // 2 <= m.sum(1))
    idx = np.nonzero(ok)[0]
    if not idx.size:
        return Hamiltonian.zero(H.modes, H.cutoff)
    q = twice_q[idx] // 2
    keys = np.concatenate([m[idx], q[:, None]], axis=1)
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    I = torus.actions
    out_e, out_c = [], []
    base = H.exps[idx].astype(np.int64)
    base[:, :n] -= m[idx]
    base[:, n:] -= m[idx]
    for g, key in enumerate(uniq):
        mm = tuple(int(x) for x in key[:n])
        table = _table_integer(mm, int(key[n]))
        if not table:
            continue
        gam = np.array(list(table.keys()), dtype=np.int64)
        wts = np.array(list(table.values()), dtype=float)
        wts = wts * np.prod(I[None, :] ** (np.array(mm)[None, :] - gam), axis=1)
        rows = np.nonzero(inv == g)[0]
        e = base[rows][:, None, :] + np.concatenate([gam, gam], axis=1)[None, :, :]
        out_e.append(e.reshape(-1, 2 * n))
        out_c.append((H.coeffs[idx[rows]][:, None] * wts[None, :]).reshape(-1))
    if not out_e:
        return Hamiltonian.zero(H.modes, H.cutoff)
    return Hamiltonian(H.modes, np.concatenate(out_e).astype(EXP_DTYPE), np.concatenate(out_c), H.cutoff)


def low_degrees(torus: TorusData) -> tuple[int, ...]:
    return (-2, 0) if torus.tangential.all() else (-2, -1, 0)


def degree_split(H: Hamiltonian, torus: TorusData, upto: int = 0):
    """``({d: H^(d)} for -2 <= d <= upto, remainder of higher degree)``."""
    step = 2 if torus.tangential.all() else 1
    parts = {d: project_degree(H, torus, d) for d in range(-2, upto + 1, step)}
    rest = H
    for p in parts.values():
        rest = rest - p
    return parts, rest


def project_degree_geq(H: Hamiltonian, torus: TorusData, d: int) -> Hamiltonian:
    """``H`` minus its components of degree below ``d``."""
    step = 2 if torus.tangential.all() else 1
    rest = H
    for dd in range(-2, d, step):
        rest = rest - project_degree(H, torus, dd)
    return rest


def project_degree_leq(H: Hamiltonian, torus: TorusData, d: int) -> Hamiltonian:
    step = 2 if torus.tangential.all() else 1
    out = Hamiltonian.zero(H.modes, H.cutoff)
    for dd in range(-2, d + 1, step):
        out = out + project_degree(H, torus, dd)
    return out


def bourgain_representation(H: Hamiltonian, torus: TorusData, q: int) -> Hamiltonian:
    """``Pi^{>= 2q-2} H`` from the explicit coefficients

    ``Hc_{delta,k,a,b} = q sum_{m >= delta+k} binom(m,delta) binom(m-delta,k)
    H_{m,a,b} I^(m-delta-k) |k|! (|m|-|k|-1)! / |m|!``,
    expanded back as ``sum_{|delta|=q} (|u|^2 - I)^delta sum_k Hc |u|^{2k} u^a conj(u)^b``.
    Independent of :func:`project_degree`; used as a cross-check.  Full torus only.
    """
    if not torus.tangential.all():
        raise ValueError("representation formula is for the full torus")
    if q == 0:
        return H
    n = H.n
    I = torus.actions
    m_all, _ = _decompose(H, torus.tangential)
    out_e, out_c = [], []
    for row, c, m in zip(H.exps.astype(np.int64), H.coeffs, m_all):
        M = int(m.sum())
        if M < q:
            continue
        ab = row.copy()
        ab[:n] -= m
        ab[n:] -= m
        mt = tuple(int(x) for x in m)
        for delta in _sub_indices(mt, q):
            rem = tuple(mi - di for mi, di in zip(mt, delta))
            bmd = math.prod(math.comb(mi, di) for mi, di in zip(mt, delta))
            for k in _sub_indices(rem):
                K = sum(k)
                bk = math.prod(math.comb(ri, ki) for ri, ki in zip(rem, k))
                w = q * bmd * bk * math.factorial(K) * math.factorial(M - K - 1) / math.factorial(M)
                w *= float(np.prod(I ** (np.array(rem) - np.array(k))))
                if w == 0:
                    continue
                # (|u|^2 - I)^delta |u|^{2k} expanded in monomials
                for g in _sub_indices(delta):
                    sign = -1 if (q - sum(g)) % 2 else 1
                    bw = math.prod(math.comb(di, gi) for di, gi in zip(delta, g))
                    ipow = float(np.prod(I ** (np.array(delta) - np.array(g))))
                    coef = c * w * sign * bw * ipow
                    if coef == 0:
                        continue
                    e = ab.copy()
                    e[:n] += np.array(g) + np.array(k)
                    e[n:] += np.array(g) + np.array(k)
                    out_e.append(e)
                    out_c.append(coef)
    if not out_e:
        return Hamiltonian.zero(H.modes, H.cutoff)
    return Hamiltonian(H.modes, np.array(out_e, dtype=EXP_DTYPE), np.array(out_c), H.cutoff)


def counterterm_extract(H: Hamiltonian, torus: TorusData) -> CounterTerm:
    """Coefficients ``lambda`` of ``Pi^{0,K} H = sum_j lambda_j (|u_j|^2 - I_j)``."""
    n = H.n
    P = project_degree(_diag_part(H), torus, 0)
    lam = np.zeros(n)
    if len(P):
        single = (P.alpha.sum(1) == 1) & np.all(P.alpha == P.beta, axis=1)
        for row, c in zip(P.alpha[single], P.coeffs[single]):
            lam[int(np.argmax(row))] += c.real
    return CounterTerm(H.modes, lam)


def _diag_part(H: Hamiltonian) -> Hamiltonian:
    return H.select(np.all(H.alpha == H.beta, axis=1))


def project_zero_K(H: Hamiltonian, torus: TorusData) -> Hamiltonian:
    return counterterm_hamiltonian(counterterm_extract(H, torus).lam, torus, H.cutoff)


def project_minus2_K(H: Hamiltonian, torus: TorusData) -> complex:
    """The constant ``Pi^{-2,K} H`` (value of the action part on the torus)."""
    P = project_degree(_diag_part(H), torus, -2)
    const = P.select(P.degrees == 0)
    return complex(const.coeffs.sum()) if len(const) else 0j


def extend_projection_affine(omega, torus: TorusData):
    """Degree components of ``D_omega``: a constant, a counterterm, nothing else."""
    omega = np.asarray(omega, dtype=float)
    return {
        "minus2_K": float(omega @ torus.actions),
        "zero_K": CounterTerm(torus.modes, omega.copy()),
    }


