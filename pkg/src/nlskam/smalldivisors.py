"""Diophantine conditions, the homological solver and combinatorial verifiers."""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .hamiltonian import Hamiltonian
from .indexing import MultiIndex, multi_indices
from .poisson import divisors
from .projections import c_kappa
from .reports import VerifierReport

RESONANCE_GUARD = 1e-14


class NearResonance(ArithmeticError):
    pass


def _jb(j):
    return np.maximum(np.abs(j), 1)


def log_diophantine_threshold(ell: Mapping[int, int], gamma: float) -> float:
    items = [(j, c) for j, c in dict(ell).items() if c]
    if not items:
        raise ValueError("ell must be nonzero")
    if gamma <= 0:
        return -math.inf
    return math.log(gamma) - sum(math.log1p(c * c * float(_jb(j)) ** 2) for j, c in items)


def diophantine_threshold(ell: Mapping[int, int], gamma: float) -> float:
    """``gamma prod_n 1 / (1 + ell_n^2 <n>^2)``."""
    return math.exp(log_diophantine_threshold(ell, gamma))


def enumerate_ells(modes: Iterable[int], L: int, *, max_normal: int | None = None, normal: Iterable[int] = (),
                   zero_momentum: bool = False) -> np.ndarray:
    """Nonzero integer vectors with ``sum |ell_j| <= L``, one of each pair ``+-ell``.

    ``max_normal`` bounds the mass carried by the ``normal`` modes.
    """
    modes = list(modes)
    n = len(modes)
    normal_mask = np.array([j in set(normal) for j in modes])
    out = []

    def rec(pos, left, cur):
        if pos == n:
            if any(cur):
                out.append(tuple(cur))
            return
        for v in range(-left, left + 1):
            cur.append(v)
            rec(pos + 1, left - abs(v), cur)
            cur.pop()

    rec(0, L, [])
    arr = np.array(out, dtype=np.int64).reshape(-1, n)
    first = np.argmax(arr != 0, axis=1)
    arr = arr[arr[np.arange(len(arr)), first] > 0]
    if max_normal is not None:
        arr = arr[np.abs(arr[:, normal_mask]).sum(1) <= max_normal]
    if zero_momentum:
        arr = arr[arr @ np.array(modes) == 0]
    return arr


def log_thresholds(ells: np.ndarray, modes, gamma: float) -> np.ndarray:
    jb2 = _jb(np.asarray(modes)).astype(float) ** 2
    return math.log(gamma) - np.log1p(ells.astype(float) ** 2 * jb2[None, :]).sum(1)


@dataclass
class DiophantineReport:
    ok: bool
    worst_margin: float
    worst_ell: dict


def is_diophantine(omega, modes, gamma: float, ells: np.ndarray) -> DiophantineReport:
    """Check ``|omega . ell| > threshold(ell)`` over the listed ``ell``."""
    omega = np.asarray(omega, dtype=float)
    if not len(ells):
        return DiophantineReport(True, math.inf, {})
    vals = np.abs(ells @ omega)
    if gamma <= 0:
        ok = bool(np.all(vals > 0))
        return DiophantineReport(ok, math.inf if ok else 0.0, {})
    margins = vals / np.exp(log_thresholds(ells, modes, gamma))
    i = int(np.argmin(margins))
    worst = {int(j): int(c) for j, c in zip(modes, ells[i]) if c}
    return DiophantineReport(bool(np.all(margins > 1)), float(margins[i]), worst)


def draw_diophantine(modes, gamma: float, L: int, rng: np.random.Generator, max_tries: int = 10_000) -> np.ndarray:
    """Frequencies ``j^2 + xi`` with uniform ``xi`` in ``[-1/2, 1/2]``, redrawn until Diophantine."""
    modes = np.asarray(list(modes))
    ells = enumerate_ells(modes, L)
    base = modes.astype(float) ** 2
    for _ in range(max_tries):
        omega = base + rng.uniform(-0.5, 0.5, modes.size)
        if is_diophantine(omega, modes, gamma, ells).ok:
            return omega
    raise RuntimeError(f"no Diophantine frequency found in {max_tries} draws")


def sample_measure(gamma: float, L: int, j_max: int, n_samples: int, seed: int, chunk: int = 2048, workers: int = 1) -> float:
    """Fraction of uniformly drawn shifts ``xi`` whose frequencies fail the condition."""
    return sample_measure_sweep([gamma], L, j_max, n_samples, seed, chunk, workers)[0]


def sample_measure_sweep(gammas, L: int, j_max: int, n_samples: int, seed: int, chunk: int = 2048,
                         workers: int = 1) -> list[float]:
    """Failure fractions for several ``gamma`` on one common sample set.

    Each chunk draws from its own spawned seed, so the result does not depend
    on ``workers``.
    """
    if n_samples < 1:
        raise ValueError("need at least one sample")
    modes = np.arange(-j_max, j_max + 1)
    ells = enumerate_ells(modes, L)
    base = ells @ (modes.astype(float) ** 2)
    thr = np.exp(log_thresholds(ells, modes, 1.0))
    sizes = [min(chunk, n_samples - k) for k in range(0, n_samples, chunk)]
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))

    def run(i):
        xi = np.random.default_rng(seeds[i]).uniform(-0.5, 0.5, size=(sizes[i], modes.size))
        vals = np.abs(base[None, :] + xi @ ells.T.astype(float))
        ratio = np.min(vals / thr[None, :], axis=1)
        return [int(np.sum(ratio <= g)) if g > 0 else int(np.sum(ratio <= 0)) for g in gammas]

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            counts = list(pool.map(run, range(len(sizes))))
    else:
        counts = [run(i) for i in range(len(sizes))]
    fails = np.sum(np.array(counts, dtype=np.int64), axis=0)
    return [float(f) / n_samples for f in fails]


def solve_homological(F: Hamiltonian, omega) -> Hamiltonian:
    """``G`` with ``L_omega G = F``, i.e. ``G_ab = F_ab / (i omega.(a-b))``."""
    if not len(F):
        return F
    diag = np.all(F.alpha == F.beta, axis=1)
    if diag.any():
        k = int(np.nonzero(diag)[0][0])
        t = F.terms()
        raise ValueError(f"term {list(t)[k]} lies in the kernel of L_omega")
    div = divisors(F, omega)
    small = np.abs(div) < RESONANCE_GUARD
    if small.any():
        k = int(np.nonzero(small)[0][0])
        a = F.alpha[k].astype(int) - F.beta[k]
        ell = {j: int(c) for j, c in zip(F.modes.modes, a) if c}
        raise NearResonance(f"divisor {div[k]:.3e} for ell = {ell}")
    return F._new(F.exps, F.coeffs / (1j * div))


# constants of the homological bound -----------------------------------------

def i_sharp(sigma: float, theta: float) -> float:
    if not 0 < sigma <= 1:
        raise ValueError("sigma must lie in (0, 1]")
    c = sigma * theta * (1 - theta)
    return (312.0 / c * math.log(156.0 / c)) ** (2.0 / theta)


def f_budget(x, i, sigma: float, theta: float):
    jb = float(max(abs(i), 1))
    return -sigma * (1 - theta) * x * jb ** (theta / 2) / 13.0 + math.log1p(x * x * jb * jb)


def smoothing_budget(ell: Mapping[int, int], sigma: float, theta: float) -> float:
    """``sum_i f_i(|ell_i|, sigma)``, checked against ``21 i# ln i#``."""
    if not 0 < sigma <= 1:
        raise ValueError("sigma must lie in (0, 1]")
    total = sum(f_budget(abs(c), j, sigma, theta) for j, c in dict(ell).items() if c)
    ish = i_sharp(sigma, theta)
    if total > 21 * ish * math.log(ish):
        raise AssertionError(f"budget {total} exceeds 21 i# ln i#")
    return total


def homological_log_factor(sigma: float, theta: float, gamma: float, lipschitz: bool = False) -> float:
    """Logarithm of ``gamma e^{C sigma^{-3/theta}}`` from the proof chain.

    The value part needs ``exp(21 i#(sigma) ln i#(sigma)) <= e^{C'}/3``; the
    Lipschitz part adds ``63 i#(sigma/3) ln i#(sigma/3) + 2 ln(1/gamma)``.
    """
    ish = i_sharp(sigma, theta)
    expo = 21 * ish * math.log(ish) + math.log(3.0)
    if lipschitz:
        ish3 = i_sharp(sigma / 3, theta)
        expo = max(expo, 63 * ish3 * math.log(ish3) + 2 * math.log(1 / gamma) + math.log(3.0))
    return expo


def homological_constant(sigma: float, theta: float, gamma: float, lipschitz: bool = False) -> float:
    """The constant ``C`` with ``|L^{-1} F|_{s+sigma, eta-sigma} <= gamma^{-1} e^{C sigma^{-3/theta}} |F|``."""
    return homological_log_factor(sigma, theta, gamma, lipschitz) * sigma ** (3.0 / theta)


# verifiers -------------------------------------------------------------------

def _index_pairs(modes, mass_max):
    for k in range(1, mass_max + 1):
        idx = list(multi_indices(modes, k))
        for a in idx:
            for b in idx:
                yield a, b


def verify_small_divisor_lemma(theta: float, bound_mass: int = 3, j_max: int = 4, fault: bool = False) -> VerifierReport:
    rep = VerifierReport("small_divisor")
    modes = range(-j_max, j_max + 1)
    for a, b in _index_pairs(modes, bound_mass):
        if a == b:
            continue
        support = set(a) | set(b)
        diff = {i: a.get(i) - b.get(i) for i in support}
        l1 = sum(abs(v) for v in diff.values())
        if abs(sum(v * i * i for i, v in diff.items())) > 10 * l1:
            continue
        pi = abs(sum(i * v for i, v in diff.items()))
        lhs = sum(abs(v) * float(_jb(i)) ** (theta / 2) for i, v in diff.items())
        base = sum((a.get(i) + b.get(i)) * float(_jb(i)) ** theta for i in support) + pi
        for j in support:
            rhs = 13.0 / (1 - theta) * (base - 2 * float(_jb(j)) ** theta)
            if fault:
                rhs = -abs(rhs) - 1
            rep.checked += 1
            if lhs > rhs * (1 + 1e-12):
                rep.record({"alpha": str(a), "beta": str(b), "j": j}, lhs, rhs)
    return rep


def verify_smoothing_positivity(mass_max: int = 3, j_max: int = 4, theta: float = 0.5, fault: bool = False) -> VerifierReport:
    rep = VerifierReport("smoothing_positivity")
    modes = range(-j_max, j_max + 1)
    for a, b in _index_pairs(modes, mass_max):
        support = set(a) | set(b)
        pi = abs(sum(i * (a.get(i) - b.get(i)) for i in support))
        base = sum((a.get(i) + b.get(i)) * float(_jb(i)) ** theta for i in support) + pi
        for j in support:
            val = base - 2 * float(_jb(j)) ** theta
            if fault:
                val = -1.0
            rep.checked += 1
            if val < -1e-12:
                rep.record({"alpha": str(a), "beta": str(b), "j": j}, val, 0.0)
    return rep


def _partitions(total, max_part=None):
    if max_part is None:
        max_part = total
    if total == 0:
        yield ()
        return
    for p in range(min(total, max_part), 0, -1):
        for rest in _partitions(total - p, p):
            yield (p,) + rest


def binomial_sum_lhs(m: tuple[int, ...], q: int, kappa: float) -> float:
    total = 0
    for d in itertools.product(*[range(c + 1) for c in m]):
        if sum(d) == q:
            total += math.prod(math.comb(mi, di) for mi, di in zip(m, d))
    return kappa ** (2 * sum(m)) * total


def verify_binomial_sum(kappa: float, q_max: int = 4, m_mass_max: int = 8, fault: bool = False) -> VerifierReport:
    """``kappa^{2|m|} sum_{|delta|=q, delta<=m} binom(m, delta) <= c_kappa^q`` for ``|m| >= q``."""
    rep = VerifierReport("binomial_sum")
    ck = c_kappa(kappa)
    for M in range(0, m_mass_max + 1):
        for m in _partitions(M):
            for q in range(0, min(q_max, M) + 1):
                lhs = binomial_sum_lhs(m, q, kappa)
                rhs = ck**q
                if fault:
                    rhs = lhs / 2
                rep.checked += 1
                if lhs > rhs * (1 + 1e-12):
                    rep.record({"m": list(m), "q": q}, lhs, rhs)
    return rep
