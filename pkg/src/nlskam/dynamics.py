"""Trajectories of truncated Hamiltonians and stability experiments near a torus."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import TextIO

import numpy as np

from .hamiltonian import Hamiltonian, u0_weight
from .indexing import ModeSet
from .poisson import FieldEvaluator, StateVector
from .projections import TorusData


class BlowUp(FloatingPointError):
    pass


@dataclass(frozen=True)
class AnnulusSpec:
    torus: TorusData
    delta: float

    def __post_init__(self):
        bound = math.sqrt(1 - self.torus.kappa**2)
        if not 0 < self.delta < bound:
            raise ValueError(f"delta must lie in (0, {bound:.6g})")

    def contains(self, u) -> bool:
        return annulus_delta(u, self.torus) < self.delta


def _weights(torus: TorusData) -> np.ndarray:
    return u0_weight(torus.modes.mode_array(), torus.r, torus.params)


def annulus_delta(u, torus: TorusData) -> float | np.ndarray:
    """``sup_j sqrt(| |u_j|^2 - I_j |) / u0_j``; accepts a batch of states."""
    vals = u.values if isinstance(u, StateVector) else np.asarray(u)
    dev = np.sqrt(np.abs(np.abs(vals) ** 2 - torus.actions)) / _weights(torus)
    out = np.max(dev, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def action_angle_forward(J, theta, modes: ModeSet) -> StateVector:
    """``u_j = sqrt(J_j) e^{i theta_j}`` from mode-keyed maps or arrays."""
    J = _as_array(J, modes)
    theta = _as_array(theta, modes)
    if np.any(J < 0):
        raise ValueError("actions must be nonnegative")
    return StateVector(modes, np.sqrt(J) * np.exp(1j * theta))


def action_angle_inverse(u: StateVector) -> tuple[dict, dict]:
    """``(|u_j|^2, arg u_j)``; undefined where a coordinate vanishes."""
    if np.any(u.values == 0):
        j = u.modes.modes[int(np.nonzero(u.values == 0)[0][0])]
        raise ValueError(f"angle undefined at the zero coordinate u_{j}")
    J = np.abs(u.values) ** 2
    th = np.angle(u.values)
    return dict(zip(u.modes.modes, J.tolist())), dict(zip(u.modes.modes, th.tolist()))


def _as_array(x, modes: ModeSet) -> np.ndarray:
    if isinstance(x, dict):
        return np.array([float(x.get(j, 0.0)) for j in modes.modes])
    return np.asarray(x, dtype=float)


def sample_torus(torus: TorusData, rng: np.random.Generator, m: int | None = None) -> np.ndarray:
    """Points of ``T_I`` with independent uniform angles."""
    shape = (torus.modes.n,) if m is None else (m, torus.modes.n)
    return np.sqrt(torus.actions) * np.exp(1j * rng.uniform(0, 2 * np.pi, shape))


@dataclass
class Trajectory:
    modes: ModeSet
    t: np.ndarray
    u: np.ndarray
    mass_drift: float

    @property
    def final(self) -> np.ndarray:
        return self.u[-1]


def _mass(u):
    return np.sum(np.abs(u) ** 2, axis=-1)


class _Stepper:
    def __init__(self, H: Hamiltonian, method: str, dt: float, tol: float = 1e-15, max_iter: int = 60):
        if method not in ("midpoint", "rk4"):
            raise ValueError("method must be 'midpoint' or 'rk4'")
        self.f = FieldEvaluator(H)
        self.method = method
        self.dt = dt
        self.tol = tol
        self.max_iter = max_iter

    def __call__(self, u):
        f, h = self.f, self.dt
        if self.method == "rk4":
            k1 = f(u)
            k2 = f(u + 0.5 * h * k1)
            k3 = f(u + 0.5 * h * k2)
            k4 = f(u + h * k3)
            return u + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        # implicit midpoint by fixed-point iteration, started from an explicit Euler guess
        v = u + h * f(u)
        scale = max(float(np.max(np.abs(u))), 1e-300)
        for _ in range(self.max_iter):
            w = u + h * f(0.5 * (u + v))
            if float(np.max(np.abs(w - v))) <= self.tol * scale:
                return w
            v = w
        return v


def integrate(H: Hamiltonian, u0, T: float, dt: float, method: str = "midpoint", record_every: int = 1,
              blowup: float = 1e6) -> Trajectory:
    """Trajectory of ``X_H`` from ``u0`` (one state or a batch ``(m, n)``)."""
    if T < 0 or dt <= 0:
        raise ValueError("need T >= 0 and dt > 0")
    u = (u0.values if isinstance(u0, StateVector) else np.asarray(u0, dtype=complex)).copy()
    steps = int(round(T / dt))
    step = _Stepper(H, method, T / steps if steps else dt)
    m0 = _mass(u)
    ts, us = [0.0], [u.copy()]
    limit = blowup * max(float(np.max(np.abs(u))), 1.0)
    for k in range(1, steps + 1):
        u = step(u)
        if not np.all(np.isfinite(u)) or float(np.max(np.abs(u))) > limit:
            raise BlowUp(f"trajectory blew up at t = {k * step.dt:.6g}")
        if k % record_every == 0 or k == steps:
            ts.append(k * step.dt)
            us.append(u.copy())
    drift = float(np.max(np.abs(_mass(u) - m0)))
    return Trajectory(H.modes, np.array(ts), np.array(us), drift)


def annulus_samples(torus: TorusData, delta: float, rng: np.random.Generator, m: int) -> np.ndarray:
    """States with ``annulus_delta = delta``: ``|u_j|^2 = I_j +- delta^2 u0_j^2`` and uniform angles.

    The sign is random where ``I_j`` allows both, otherwise positive.
    """
    w2 = (delta * _weights(torus)) ** 2
    I = torus.actions
    sign = np.where(rng.random((m, I.size)) < 0.5, -1.0, 1.0)
    sign = np.where(I[None, :] >= w2[None, :], sign, 1.0)
    amp = np.sqrt(I[None, :] + sign * w2[None, :])
    return amp * np.exp(1j * rng.uniform(0, 2 * np.pi, (m, I.size)))


def action_derivatives(H: Hamiltonian, u) -> np.ndarray:
    """``d/dt |u_j|^2 = 2 Re(conj(u_j) X_j)`` along the flow of ``H``."""
    X = FieldEvaluator(H)(u)
    return 2 * np.real(np.conj(u) * X)


@dataclass
class DriftReport:
    deltas: list
    exit_min: list
    exit_median: list
    exited: list
    drift_sup: list
    exit_exponent: float
    drift_exponent: float
    d: int
    T_max: float
    rows: list = field(default_factory=list)


def _slope(x, y):
    x, y = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    return float(np.polyfit(x, y, 1)[0])


def drift_experiment(N: Hamiltonian, torus: TorusData, delta0: float, d: int, T_max: float, *, dt: float = 0.01,
                     n_samples: int = 16, seed: int = 0, method: str = "rk4", check_every: int = 10,
                     levels: int = 3, drift_samples: int = 1024) -> DriftReport:
    """First exits from the ``2 delta`` annulus for ``delta = delta0, delta0/2, ...``.

    Exit-time exponents are fitted on the minimum over samples (censored at
    ``T_max``); the sup of the action derivatives over the same samples gives
    the drift exponent (estimated on ``drift_samples`` extra points).
    """
    rng = np.random.default_rng(seed)
    step = _Stepper(N, method, dt)
    deltas = [delta0 / 2**k for k in range(levels)]
    ex_min, ex_med, exited, drift = [], [], [], []
    for delta in deltas:
        probe = annulus_samples(torus, delta, rng, drift_samples)
        drift.append(float(np.max(np.abs(action_derivatives(N, probe)))))
        u = annulus_samples(torus, delta, rng, n_samples)
        t_exit = np.full(n_samples, T_max)
        alive = np.ones(n_samples, dtype=bool)
        t = 0.0
        k = 0
        while alive.any() and t < T_max:
            u[alive] = step(u[alive])
            t += dt
            k += 1
            if k % check_every == 0:
                out = alive & (annulus_delta(u, torus) >= 2 * delta)
                t_exit[out] = t
                alive &= ~out
        ex_min.append(float(t_exit.min()))
        ex_med.append(float(np.median(t_exit)))
        exited.append(bool((~alive).any()))
    fit = [i for i in range(levels) if exited[i]]
    exit_exp = _slope([deltas[i] for i in fit], [ex_min[i] for i in fit]) if len(fit) >= 2 else math.nan
    pos = [i for i in range(levels) if drift[i] > 0]
    drift_exp = _slope([deltas[i] for i in pos], [drift[i] for i in pos]) if len(pos) >= 2 else math.nan
    rows = [
        {"delta": deltas[i], "exit_min": ex_min[i], "exit_median": ex_med[i], "exited": exited[i], "drift_sup": drift[i]}
        for i in range(levels)
    ]
    return DriftReport(deltas, ex_min, ex_med, exited, drift, exit_exp, drift_exp, d, T_max, rows)


@dataclass
class OrbitReport:
    defect: float
    integrator_error: float
    excess: float
    modulus_drift: float
    mass_drift: float
    T: float


def torus_orbit_defect(N: Hamiltonian, torus: TorusData, omega, T: float, dt: float, *, seed: int = 0,
                       n_points: int = 4, method: str = "rk4") -> OrbitReport:
    """Distance between the orbit of ``N`` from ``T_I`` and the rotation ``u_j e^{i omega_j t}``.

    ``integrator_error`` is the same distance for ``D_omega`` integrated with
    the same scheme, and ``excess`` the distance between the two numerical
    orbits, which isolates the contribution of ``N - D_omega``.
    """
    omega = np.asarray(getattr(omega, "omega", omega), dtype=float)
    rng = np.random.default_rng(seed)
    u0 = sample_torus(torus, rng, n_points)
    traj = integrate(N, u0, T, dt, method=method)
    lin = integrate(Hamiltonian.diagonal(torus.modes, omega), u0, T, dt, method=method)
    exact = u0[None, :, :] * np.exp(1j * omega[None, None, :] * traj.t[:, None, None])
    return OrbitReport(
        defect=float(np.max(np.abs(traj.u - exact))),
        integrator_error=float(np.max(np.abs(lin.u - exact))),
        excess=float(np.max(np.abs(traj.u - lin.u))),
        modulus_drift=float(np.max(np.abs(np.abs(traj.u) - np.abs(u0)[None]))),
        mass_drift=traj.mass_drift,
        T=T,
    )


def write_trajectory_csv(traj: Trajectory, stream: TextIO, coords: str = "complex", sample: int = 0) -> None:
    """Rows ``t`` then per mode ``re, im`` (or ``action, angle``) of one trajectory of a batch."""
    if coords not in ("complex", "action_angle"):
        raise ValueError("coords must be 'complex' or 'action_angle'")
    u = traj.u if traj.u.ndim == 2 else traj.u[:, sample, :]
    w = csv.writer(stream, lineterminator="\r\n")
    names = ("re", "im") if coords == "complex" else ("action", "angle")
    w.writerow(["t"] + [f"{nm}_{j}" for j in traj.modes.modes for nm in names])
    for t, row in zip(traj.t, u):
        if coords == "complex":
            vals = [x for z in row for x in (z.real, z.imag)]
        else:
            vals = [x for z in row for x in (abs(z) ** 2, math.atan2(z.imag, z.real))]
        w.writerow([repr(float(t))] + [repr(float(v)) for v in vals])


def coupled_resonant_normal_form(torus: TorusData, omega, pair: tuple[int, int], spectators: tuple[int, int],
                                 coupling: float) -> Hamiltonian:
    """``D_omega + c (|u_a|^2 - I_a)(|u_b|^2 - I_b)(u_j conj(u_k) + c.c.)``.

    The remainder has torus degree 2.  With ``omega_j = omega_k`` the exchange
    term is resonant, so the actions of ``j`` and ``k`` drift at rate
    ``~ delta^4`` and leave the ``2 delta`` annulus after a time ``~ delta^-2``.
    """
    modes = torus.modes
    I = torus.actions
    j, k = pair
    a, b = spectators
    if len({j, k, a, b}) < 4:
        raise ValueError("pair and spectator modes must be four distinct modes")

    def shifted(m):
        return Hamiltonian.action(modes, m) - float(I[modes.index(m)])

    exchange = Hamiltonian.monomial(modes, {j: 1}, {k: 1}) + Hamiltonian.monomial(modes, {k: 1}, {j: 1})
    D = Hamiltonian.diagonal(modes, np.asarray(getattr(omega, "omega", omega), dtype=float))
    return D + coupling * (shifted(a) * shifted(b) * exchange)
