"""Sparse Hamiltonian series in the variables ``u_j, conj(u_j)``.

Terms are stored as an integer exponent array of shape ``(nterms, 2n)``
(columns ``0..n-1`` hold the exponents of ``u``, columns ``n..2n-1`` those of
``conj(u)``) together with a complex coefficient vector.  Every constructor
canonicalizes: duplicate monomials are summed, zero coefficients dropped and
rows sorted lexicographically, so two equal Hamiltonians have identical arrays.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .indexing import ModeSet, MultiIndex, from_text, to_text

PRUNE = 1e-300
EXP_DTYPE = np.int16


@dataclass(frozen=True)
class WeightParams:
    """Parameters of the weighted sequence space and of the majorant norm."""

    p: float = 2.0
    s: float = 1.0
    a: float = 0.0
    eta: float = 0.0
    theta: float = 0.5
    r: float = 1.0

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError("p must exceed 1")
        if not self.s > 0:
            raise ValueError("s must be positive")
        if self.a < 0 or self.eta < 0:
            raise ValueError("a and eta must be nonnegative")
        if not 0 < self.theta < 1:
            raise ValueError("theta must lie in (0, 1)")
        if not self.r > 0:
            raise ValueError("r must be positive")

    def replace(self, **kw) -> "WeightParams":
        return WeightParams(**{**self.__dict__, **kw})


def bracket_j(j) -> np.ndarray:
    return np.maximum(np.abs(np.asarray(j)), 1)


def log_u0(modes, r: float, s: float, params: WeightParams) -> np.ndarray:
    j = np.asarray(modes, dtype=float)
    jb = bracket_j(j).astype(float)
    return math.log(r) - params.p * np.log(jb) - params.a * np.abs(j) - s * jb**params.theta


def u0_weight(j, r: float, params: WeightParams, s: float | None = None):
    """Profile ``r <j>^{-p} exp(-a|j| - s <j>^theta)`` of the weighted ball."""
    s = params.s if s is None else s
    if r == 0:
        return np.zeros_like(np.asarray(j, dtype=float))[()]
    return np.exp(log_u0(j, r, s, params))[()]


def sequence_norm(values, modes, params: WeightParams, s: float | None = None) -> float:
    """``sup_j |v_j| <j>^p exp(a|j| + s <j>^theta)``."""
    s = params.s if s is None else s
    v = np.abs(np.asarray(values))
    if v.size == 0:
        return 0.0
    return float(np.max(v * np.exp(-log_u0(modes, 1.0, s, params))))


@dataclass(frozen=True)
class FrequencyVector:
    """Frequencies ``omega_j = j^2 + xi_j`` with ``|xi_j| <= 1/2``."""

    modes: ModeSet
    xi: np.ndarray

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=float).reshape(-1)
        if xi.shape != (self.modes.n,):
            raise ValueError(f"xi has length {xi.size}, expected {self.modes.n}")
        if np.any(np.abs(xi) > 0.5 + 1e-15):
            raise ValueError("frequency shifts must satisfy |xi_j| <= 1/2")
        xi.setflags(write=False)
        object.__setattr__(self, "xi", xi)

    @property
    def omega(self) -> np.ndarray:
        return self.modes.mode_array().astype(float) ** 2 + self.xi

    @classmethod
    def from_omega(cls, modes: ModeSet, omega) -> "FrequencyVector":
        return cls(modes, np.asarray(omega, dtype=float) - modes.mode_array().astype(float) ** 2)


def _canonical(exps: np.ndarray, coeffs: np.ndarray):
    if exps.shape[0] == 0:
        return exps, coeffs
    order = np.lexsort(exps.T[::-1])
    exps = exps[order]
    coeffs = coeffs[order]
    new = np.ones(exps.shape[0], dtype=bool)
    new[1:] = np.any(exps[1:] != exps[:-1], axis=1)
    if not new.all():
        gid = np.cumsum(new) - 1
        ng = int(gid[-1]) + 1
        re = np.bincount(gid, weights=coeffs.real, minlength=ng)
        im = np.bincount(gid, weights=coeffs.imag, minlength=ng)
        coeffs = re + 1j * im
        exps = exps[new]
    keep = np.abs(coeffs) > PRUNE
    return exps[keep], coeffs[keep]


class Hamiltonian:
    """Finite sum ``sum H_{alpha,beta} u^alpha conj(u)^beta`` over a mode set.

    ``cutoff`` is the largest total degree ``|alpha| + |beta|`` retained by
    operations that can raise the degree (``None`` means no truncation).
    """

    __slots__ = ("modes", "cutoff", "exps", "coeffs")

    def __init__(self, modes: ModeSet, exps, coeffs, cutoff: int | None = None):
        exps = np.asarray(exps, dtype=EXP_DTYPE).reshape(-1, 2 * modes.n)
        coeffs = np.asarray(coeffs, dtype=complex).reshape(-1)
        if exps.shape[0] != coeffs.shape[0]:
            raise ValueError("exponent rows and coefficients differ in length")
        if np.any(exps < 0):
            raise ValueError("negative exponent")
        if cutoff is not None and exps.shape[0] and int(exps.sum(1).max()) > cutoff:
            raise ValueError("term exceeds the degree cutoff")
        self.modes = modes
        self.cutoff = cutoff
        self.exps, self.coeffs = _canonical(exps, coeffs)
        self.exps.setflags(write=False)
        self.coeffs.setflags(write=False)

    # construction -------------------------------------------------------
    @classmethod
    def zero(cls, modes: ModeSet, cutoff: int | None = None) -> "Hamiltonian":
        return cls(modes, np.zeros((0, 2 * modes.n)), np.zeros(0), cutoff)

    @classmethod
    def constant(cls, modes: ModeSet, c: complex, cutoff: int | None = None) -> "Hamiltonian":
        return cls(modes, np.zeros((1, 2 * modes.n)), [c], cutoff)

    @classmethod
    def from_terms(cls, modes: ModeSet, terms: Mapping, cutoff: int | None = None) -> "Hamiltonian":
        rows, cs = [], []
        for (alpha, beta), c in terms.items():
            rows.append(np.concatenate([MultiIndex(alpha).to_array(modes), MultiIndex(beta).to_array(modes)]))
            cs.append(c)
        if not rows:
            return cls.zero(modes, cutoff)
        return cls(modes, np.array(rows), np.array(cs, dtype=complex), cutoff)

    @classmethod
    def monomial(cls, modes: ModeSet, alpha, beta, c: complex = 1.0, cutoff=None) -> "Hamiltonian":
        return cls.from_terms(modes, {(MultiIndex(alpha), MultiIndex(beta)): c}, cutoff)

    @classmethod
    def diagonal(cls, modes: ModeSet, values, cutoff: int | None = None) -> "Hamiltonian":
        """``sum_j values_j |u_j|^2``."""
        n = modes.n
        exps = np.zeros((n, 2 * n), dtype=EXP_DTYPE)
        exps[np.arange(n), np.arange(n)] = 1
        exps[np.arange(n), n + np.arange(n)] = 1
        return cls(modes, exps, np.asarray(values, dtype=complex), cutoff)

    @classmethod
    def action(cls, modes: ModeSet, j: int, cutoff: int | None = None) -> "Hamiltonian":
        v = np.zeros(modes.n)
        v[modes.index(j)] = 1.0
        return cls.diagonal(modes, v, cutoff)

    def _new(self, exps, coeffs, cutoff="same") -> "Hamiltonian":
        return Hamiltonian(self.modes, exps, coeffs, self.cutoff if cutoff == "same" else cutoff)

    def with_cutoff(self, cutoff: int | None) -> "Hamiltonian":
        """Relabel the cutoff, dropping terms above it."""
        keep = np.ones(len(self), dtype=bool) if cutoff is None else self.degrees <= cutoff
        return Hamiltonian(self.modes, self.exps[keep], self.coeffs[keep], cutoff)

    # views ----------------------------------------------------------------
    def __len__(self):
        return self.coeffs.shape[0]

    @property
    def n(self) -> int:
        return self.modes.n

    @property
    def alpha(self) -> np.ndarray:
        return self.exps[:, : self.n]

    @property
    def beta(self) -> np.ndarray:
        return self.exps[:, self.n :]

    @property
    def degrees(self) -> np.ndarray:
        return self.exps.sum(1).astype(np.int64)

    @property
    def momenta(self) -> np.ndarray:
        """``pi(alpha - beta)`` per term."""
        d = self.alpha.astype(np.int64) - self.beta
        return d @ self.modes.mode_array()

    def terms(self) -> dict:
        out = {}
        for row, c in zip(self.exps, self.coeffs):
            out[(MultiIndex.from_array(row[: self.n], self.modes), MultiIndex.from_array(row[self.n :], self.modes))] = complex(c)
        return out

    def coefficient(self, alpha, beta) -> complex:
        row = np.concatenate([MultiIndex(alpha).to_array(self.modes), MultiIndex(beta).to_array(self.modes)])
        hit = np.nonzero(np.all(self.exps == row, axis=1))[0]
        return complex(self.coeffs[hit[0]]) if hit.size else 0.0j

    def is_zero(self) -> bool:
        return len(self) == 0

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.coeffs))) if len(self) else 0.0

    # invariants -----------------------------------------------------------
    def conjugate(self) -> "Hamiltonian":
        """The Hamiltonian whose value is the complex conjugate of this one."""
        return self._new(np.concatenate([self.beta, self.alpha], axis=1), np.conj(self.coeffs))

    def is_real(self, rtol: float = 1e-12) -> bool:
        diff = self - self.conjugate()
        return diff.max_abs() <= rtol * max(self.max_abs(), 1e-300)

    def real_part(self) -> "Hamiltonian":
        return 0.5 * (self + self.conjugate())

    def conserves_mass(self) -> bool:
        return bool(np.all(self.alpha.sum(1) == self.beta.sum(1)))

    def conserves_momentum(self) -> bool:
        return bool(np.all(self.momenta == 0))

    # arithmetic -----------------------------------------------------------
    def _check(self, other: "Hamiltonian"):
        if other.modes != self.modes:
            if other.modes.j_max != self.modes.j_max:
                raise ValueError("Hamiltonians live on different mode sets")

    def _join_cutoff(self, other):
        if self.cutoff is None:
            return other.cutoff
        if other.cutoff is None:
            return self.cutoff
        return max(self.cutoff, other.cutoff)

    def __add__(self, other):
        if isinstance(other, (int, float, complex)):
            other = Hamiltonian.constant(self.modes, other)
        self._check(other)
        return self._new(
            np.concatenate([self.exps, other.exps]),
            np.concatenate([self.coeffs, other.coeffs]),
            self._join_cutoff(other),
        )

    __radd__ = __add__

    def __neg__(self):
        return self._new(self.exps, -self.coeffs)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, c):
        if isinstance(c, Hamiltonian):
            return self.product(c)
        if not isinstance(c, (int, float, complex, np.number)):
            return NotImplemented
        return self._new(self.exps, self.coeffs * c)

    __rmul__ = __mul__

    def product(self, other: "Hamiltonian", cutoff="joined") -> "Hamiltonian":
        """Pointwise product, truncated at the joined cutoff."""
        self._check(other)
        cut = self._join_cutoff(other) if cutoff == "joined" else cutoff
        if not len(self) or not len(other):
            return Hamiltonian.zero(self.modes, cut)
        exps = (self.exps[:, None, :].astype(np.int64) + other.exps[None, :, :]).reshape(-1, 2 * self.n)
        coeffs = (self.coeffs[:, None] * other.coeffs[None, :]).reshape(-1)
        if cut is not None:
            keep = exps.sum(1) <= cut
            exps, coeffs = exps[keep], coeffs[keep]
        return Hamiltonian(self.modes, exps, coeffs, cut)

    def __truediv__(self, c):
        return self * (1.0 / c)

    def select(self, mask) -> "Hamiltonian":
        mask = np.asarray(mask, dtype=bool)
        return self._new(self.exps[mask], self.coeffs[mask])

    def allclose(self, other: "Hamiltonian", rtol: float = 1e-12, atol: float = 0.0) -> bool:
        scale = max(self.max_abs(), other.max_abs())
        return (self - other).max_abs() <= atol + rtol * scale

    def __repr__(self):
        return f"Hamiltonian(n_terms={len(self)}, j_max={self.modes.j_max}, cutoff={self.cutoff})"

    # evaluation ---------------------------------------------------------
    def __call__(self, u) -> complex:
        u = np.asarray(u, dtype=complex)
        if not len(self):
            return 0j
        vals = np.prod(u[None, :] ** self.alpha, axis=1) * np.prod(np.conj(u)[None, :] ** self.beta, axis=1)
        return complex(np.sum(self.coeffs * vals))


def norm(H: Hamiltonian, r: float, s: float, eta: float, params: WeightParams) -> float:
    """Majorant norm ``sup_j sum |H_ab| b_j u0^(a+b-2e_j) exp(eta |pi(a-b)|)``."""
    if not len(H):
        return 0.0
    lu = log_u0(H.modes.modes, r, s, params)
    A = H.alpha.astype(float)
    B = H.beta.astype(float)
    logt = np.log(np.abs(H.coeffs)) + (A + B) @ lu + eta * np.abs(H.momenta)
    contrib = np.exp(logt[:, None] - 2.0 * lu[None, :]) * B
    return float(np.max(contrib.sum(0)))


def norm_at(H: Hamiltonian, params: WeightParams) -> float:
    return norm(H, params.r, params.s, params.eta, params)


def project_R(H: Hamiltonian) -> Hamiltonian:
    """Keep the terms with ``alpha != beta``."""
    return H.select(np.any(H.alpha != H.beta, axis=1))


def project_K(H: Hamiltonian) -> Hamiltonian:
    """Keep the terms with ``alpha == beta`` (functions of the actions only)."""
    return H.select(np.all(H.alpha == H.beta, axis=1))


def project_index_set(H: Hamiltonian, predicate: Callable[[MultiIndex, MultiIndex], bool]) -> Hamiltonian:
    mask = [
        bool(predicate(MultiIndex.from_array(a, H.modes), MultiIndex.from_array(b, H.modes)))
        for a, b in zip(H.alpha, H.beta)
    ]
    return H.select(np.array(mask, dtype=bool))


def project_mass_above(H: Hamiltonian, N: int) -> Hamiltonian:
    """Terms with ``|alpha| = |beta| > N``."""
    return H.select(H.alpha.sum(1) > N)


def eta_majorant(H: Hamiltonian, eta: float) -> Hamiltonian:
    return H._new(H.exps, np.abs(H.coeffs) * np.exp(eta * np.abs(H.momenta)))


@dataclass
class LipschitzFamily:
    """A map frequency -> Hamiltonian known through finitely many samples."""

    eval: Callable[[FrequencyVector], Hamiltonian]
    samples: Sequence[FrequencyVector] = field(default_factory=list)


def lipschitz_weighted_norm(F: LipschitzFamily, mu: float, r: float, s: float, eta: float, params: WeightParams) -> float:
    """Sup norm over the samples plus ``mu`` times the largest difference quotient.

    Both parts are taken over the finite sample set, so the result is a lower
    bound for the norm over the whole Diophantine set.
    """
    values = [F.eval(w) for w in F.samples]
    if not values:
        raise ValueError("family has no samples")
    sup = max(norm(h, r, s, eta, params) for h in values)
    if mu == 0:
        return sup
    if len(values) < 2:
        raise ValueError("the Lipschitz part needs at least two samples")
    lip = 0.0
    for (w1, h1), (w2, h2) in itertools.combinations(zip(F.samples, values), 2):
        dist = float(np.max(np.abs(w1.omega - w2.omega)))
        if dist > 0:
            lip = max(lip, norm(h1 - h2, r, s, eta, params) / dist)
    return sup + mu * lip


# serialization ------------------------------------------------------------

def dumps(H: Hamiltonian) -> str:
    lines = [f"# hamiltonian j_max={H.modes.j_max} cutoff={H.cutoff if H.cutoff is not None else 'none'}"]
    for row, c in zip(H.exps, H.coeffs):
        a = to_text(MultiIndex.from_array(row[: H.n], H.modes))
        b = to_text(MultiIndex.from_array(row[H.n :], H.modes))
        lines.append(f"{a}|{b}|{float(c.real)!r}|{float(c.imag)!r}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> Hamiltonian:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("# hamiltonian"):
        raise ValueError("missing hamiltonian header line")
    fields = dict(tok.split("=") for tok in lines[0].split()[2:])
    modes = ModeSet(int(fields["j_max"]))
    cutoff = None if fields["cutoff"] == "none" else int(fields["cutoff"])
    terms = {}
    for ln in lines[1:]:
        if ln.startswith("#"):
            continue
        a, b, re, im = ln.split("|")
        terms[(from_text(a), from_text(b))] = complex(float(re), float(im))
    return Hamiltonian.from_terms(modes, terms, cutoff)
