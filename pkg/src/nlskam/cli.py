"""Batch driver: ``kam-run``, ``measure``, ``verify`` and ``stability``.

Each command reads a JSON config (``--config``), applies the flag overrides,
validates everything before writing, and emits CSV/JSON files whose first
line or field carries the config hash and the package version.  Exit codes:
0 success, 2 non-convergence or violations, 1 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from io import StringIO
from pathlib import Path

import numpy as np

from . import __version__

DEFAULTS = {
    "kam-run": {
        "j_max": 3,
        "degree_cutoff": 8,
        "p": 2.0,
        "s": 1.0,
        "a": 0.0,
        "theta": 0.5,
        "gamma": 0.1,
        "nonlinearity": {"strip": 1.0, "radius": 1.0, "coeffs": [[2, 0, 1.0, 0.0]]},
        "r": None,
        "eps0_target": 1e-3,
        "support": 2,
        "xi": None,
        "L": 4,
        "max_steps": 8,
        "eps_target": 1e-10,
        "invariance_points": 20,
        "timing": False,
    },
    "measure": {
        "gammas": [0.05, 0.1, 0.2],
        "L": 4,
        "j_max": 4,
        "n_samples": 10000,
        "chunk": 2048,
        "lowdim": None,
    },
    "verify": {
        "kappa2": [0.25, 0.5, 0.7],
        "thetas": [0.3, 0.5, 0.8],
        "q_max": 4,
        "m_mass_max": 8,
        "mass_max": 3,
        "verifier_j_max": 4,
        "instances": 100,
        "inequality_instances": 50,
        "fault": False,
    },
    "stability": {
        "j_max": 2,
        "r": 1.0,
        "kappa": 0.5,
        "omega": [4.3, 1.2, 0.1, 1.7, 1.7],
        "pair": [1, 2],
        "spectators": [0, -1],
        "coupling": 600.0,
        "delta0": 0.2,
        "levels": 3,
        "T_max": 100.0,
        "dt": 0.01,
        "n_samples": 16,
        "d": 2,
        "orbit_T": 10.0,
        "orbit_dt": 0.01,
        "kam_orbit": True,
    },
}


class ConfigError(ValueError):
    pass


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def _header(cfg: dict) -> str:
    return f"# nlskam {__version__} config_sha256={config_hash(cfg)}"


def _clean(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.generic):
        return _clean(x.item())
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    return x


class Output:
    """Collects files in memory and writes them only after the command finished."""

    def __init__(self, cfg: dict):
        self.cfg = cfg
        self.files: dict[str, str] = {}

    def csv(self, name: str, columns: list[str], rows: list[list]):
        buf = StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(columns)
        for row in rows:
            w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for v in row])
        self.files[name] = _header(self.cfg) + "\r\n" + buf.getvalue()

    def json(self, name: str, obj: dict):
        body = {"version": __version__, "config_sha256": config_hash(self.cfg), "config": self.cfg, **obj}
        self.files[name] = json.dumps(_clean(body), sort_keys=True, indent=2) + "\n"

    def flush(self, out: Path):
        out.mkdir(parents=True, exist_ok=True)
        for name, text in self.files.items():
            with open(out / name, "w", newline="") as fh:
                fh.write(text)


def resolve_config(command: str, path: str | None, seed: int | None) -> dict:
    cfg = json.loads(json.dumps(DEFAULTS[command]))
    if path:
        try:
            user = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config must be a JSON object")
        unknown = sorted(set(user) - set(cfg) - {"seed"})
        if unknown:
            raise ConfigError(f"unknown keys for {command}: {unknown}; allowed: {sorted(cfg)}")
        cfg.update(user)
    cfg["seed"] = int(seed if seed is not None else cfg.get("seed", 0))
    return cfg


def _need(cond: bool, message: str):
    if not cond:
        raise ConfigError(message)


# kam-run ----------------------------------------------------------------------

def _kam_objects(cfg: dict):
    from .hamiltonian import FrequencyVector, WeightParams
    from .indexing import ModeSet
    from .nls import NonlinearitySpec

    _need(isinstance(cfg["j_max"], int) and cfg["j_max"] >= 0, "j_max must be a nonnegative integer")
    _need(isinstance(cfg["degree_cutoff"], int) and cfg["degree_cutoff"] >= 4 and cfg["degree_cutoff"] % 2 == 0,
          "degree_cutoff must be an even integer >= 4")
    _need(cfg["gamma"] > 0, "gamma must be positive")
    try:
        params = WeightParams(p=cfg["p"], s=cfg["s"], a=cfg["a"], theta=cfg["theta"])
        nl = cfg["nonlinearity"]
        coeffs = {(int(d), int(k)): complex(re, im) for d, k, re, im in nl["coeffs"]}
        f = NonlinearitySpec(coeffs, float(nl["strip"]), float(nl["radius"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad weights or nonlinearity: {exc}") from exc
    _need(f.strip > params.a, "nonlinearity strip must exceed a")
    modes = ModeSet(cfg["j_max"])
    if cfg["xi"] is not None:
        _need(len(cfg["xi"]) == modes.n, f"xi needs {modes.n} entries")
        try:
            omega = FrequencyVector(modes, cfg["xi"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    else:
        from .smalldivisors import draw_diophantine

        omega = FrequencyVector.from_omega(
            modes, draw_diophantine(modes.modes, cfg["gamma"], cfg["L"], np.random.default_rng(cfg["seed"]))
        )
    if cfg["r"] is None:
        _need(bool(coeffs), "r must be given when the nonlinearity is zero")
        _need(cfg["eps0_target"] > 0, "eps0_target must be positive")
    else:
        _need(cfg["r"] > 0, "r must be positive")
    return params, f, modes, omega


def cmd_kam_run(cfg: dict) -> tuple[int, Output]:
    from .hamiltonian import Hamiltonian
    from .kam import conjugated_hamiltonian, invariance_defect
    from .nls import build_nls_perturbation, run_nls_kam, tune_radius

    params, f, modes, omega = _kam_objects(cfg)
    cut = cfg["degree_cutoff"]
    r = cfg["r"]
    if r is None:
        r = tune_radius(f, modes, omega.omega, params, cfg["gamma"], cut, cfg["eps0_target"], support=cfg["support"])
    try:
        run = run_nls_kam(f, modes, omega, r, params, cfg["gamma"], cut, support=cfg["support"],
                          max_steps=cfg["max_steps"], eps_target=cfg["eps_target"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    res = run.result
    H = Hamiltonian.diagonal(modes, omega.omega, cut) + build_nls_perturbation(f, modes, cut)
    N = conjugated_hamiltonian(H, res.Lambda, run.torus, res.generators, cut)
    defect = invariance_defect(N, omega, run.torus, cfg["invariance_points"], cfg["seed"], params)
    out = Output(cfg)
    rows = []
    for rec in res.records:
        rows.append([rec.n, rec.eps, rec.theta, rec.lambda_bar_sup, rec.trunc_residual,
                     rec.wall_ms if cfg["timing"] else None])
    rows.append([len(res.records), res.final_eps, None, None, None, None])
    out.csv("steps.csv", ["n", "eps", "theta", "lambda_bar_sup", "trunc_residual", "wall_ms"], rows)
    out.json("summary.json", {
        "converged": res.converged,
        "steps": len(res.records),
        "eps_initial": res.eps_history[0],
        "eps_final": res.final_eps,
        "K_fit": res.k_fit(),
        "radius": r,
        "omega": omega.omega,
        "Lambda": res.Lambda.lam,
        "V": run.V,
        "truncation_residual": res.truncation_residual,
        "invariance_defect": defect,
        "invariance_bound": 10 * (cfg["eps_target"] + res.truncation_residual),
        "log_K": res.constants.log_K,
        "log_eps_star": run.log_eps_star,
        "smallness": run.smallness,
        "below_theoretical_threshold": run.below_threshold,
    })
    return (0 if res.converged else 2), out


# measure ------------------------------------------------------------------------

def cmd_measure(cfg: dict, threads: int) -> tuple[int, Output]:
    from .smalldivisors import sample_measure_sweep

    g = [float(x) for x in cfg["gammas"]]
    _need(all(0 <= x < 1 for x in g) and g, "gammas must be a nonempty list in [0, 1)")
    _need(cfg["n_samples"] >= 1, "n_samples must be at least 1")
    fr = sample_measure_sweep(g, cfg["L"], cfg["j_max"], cfg["n_samples"], cfg["seed"], cfg["chunk"], threads)
    n = cfg["n_samples"]
    rows = [["full", x, f, math.sqrt(f * (1 - f) / n)] for x, f in zip(g, fr)]
    summary = {"fit": linear_fit(g, fr, n)}
    if cfg["lowdim"]:
        from .kam import measure_lowdim

        ld = cfg["lowdim"]
        vals = [measure_lowdim(x, ld.get("tangential", [-1, 1]), ld.get("j_max", 3), ld.get("L", 4),
                               ld.get("n_samples", 2000), cfg["seed"]) for x in g]
        rows += [["lowdim", x, f, math.sqrt(f * (1 - f) / ld.get("n_samples", 2000))] for x, f in zip(g, vals)]
        summary["lowdim_fit"] = linear_fit(g, vals, ld.get("n_samples", 2000))
    out = Output(cfg)
    out.csv("measure.csv", ["kind", "gamma", "fraction", "std_error"], rows)
    out.json("summary.json", summary)
    return 0, out


def linear_fit(gammas, fractions, n) -> dict:
    """Weighted least squares ``fraction = b0 + C gamma`` with binomial standard errors."""
    g = np.asarray(gammas, float)
    f = np.asarray(fractions, float)
    se = np.sqrt(np.maximum(f * (1 - f), 1.0 / n) / n)
    X = np.c_[np.ones_like(g), g]
    W = np.diag(1 / se**2)
    cov = np.linalg.inv(X.T @ W @ X)
    b = cov @ X.T @ W @ f
    return {"intercept": float(b[0]), "slope": float(b[1]), "intercept_se": float(math.sqrt(cov[0, 0])),
            "slope_se": float(math.sqrt(cov[1, 1]))}


# verify -------------------------------------------------------------------------

def cmd_verify(cfg: dict, threads: int) -> tuple[int, Output]:
    from . import checks
    from .smalldivisors import verify_binomial_sum, verify_small_divisor_lemma, verify_smoothing_positivity

    _need(all(0 < k < 1 for k in cfg["kappa2"]), "kappa2 entries must lie in (0, 1)")
    _need(all(0 < t < 1 for t in cfg["thetas"]), "thetas must lie in (0, 1)")
    fault = bool(cfg["fault"])
    reports = []
    for k2 in cfg["kappa2"]:
        reports.append((f"binomial_sum kappa2={k2}", verify_binomial_sum(math.sqrt(k2), cfg["q_max"], cfg["m_mass_max"], fault)))
    for t in cfg["thetas"]:
        reports.append((f"smoothing_positivity theta={t}",
                        verify_smoothing_positivity(cfg["mass_max"], cfg["verifier_j_max"], t, fault)))
        reports.append((f"small_divisor theta={t}",
                        verify_small_divisor_lemma(t, cfg["mass_max"], cfg["verifier_j_max"], fault)))
    for fn in checks.ALGEBRA_CHECKS:
        reports.append((fn.__name__[6:], fn(cfg["instances"], cfg["seed"])))
    for fn in checks.INEQUALITY_CHECKS:
        reports.append((fn.__name__[6:], fn(cfg["inequality_instances"], cfg["seed"])))
    out = Output(cfg)
    rows = [[name, r.checked, len(r.violations), "pass" if r.ok else "fail"] for name, r in reports]
    out.csv("verify.csv", ["check", "checked", "violations", "status"], rows)
    out.json("verify.json", {"reports": {name: r.to_dict() for name, r in reports},
                             "ok": all(r.ok for _, r in reports)})
    return (0 if all(r.ok for _, r in reports) else 2), out


# stability ----------------------------------------------------------------------

def cmd_stability(cfg: dict, threads: int) -> tuple[int, Output]:
    from .dynamics import AnnulusSpec, coupled_resonant_normal_form, drift_experiment, torus_orbit_defect
    from .hamiltonian import Hamiltonian, WeightParams
    from .indexing import ModeSet
    from .projections import TorusData

    modes = ModeSet(cfg["j_max"])
    _need(len(cfg["omega"]) == modes.n, f"omega needs {modes.n} entries")
    _need(0 < cfg["kappa"] < 1, "kappa must lie in (0, 1)")
    _need(cfg["dt"] > 0 and cfg["T_max"] > 0, "dt and T_max must be positive")
    params = WeightParams()
    torus = TorusData.profile(modes, cfg["r"], params, cfg["kappa"])
    try:
        AnnulusSpec(torus, cfg["delta0"])
        N = coupled_resonant_normal_form(torus, cfg["omega"], tuple(cfg["pair"]), tuple(cfg["spectators"]), cfg["coupling"])
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc
    kw = dict(dt=cfg["dt"], n_samples=cfg["n_samples"], seed=cfg["seed"], levels=cfg["levels"])
    rep = drift_experiment(N, torus, cfg["delta0"], cfg["d"], cfg["T_max"], **kw)
    D = Hamiltonian.diagonal(modes, cfg["omega"])
    ctrl = drift_experiment(D, torus, cfg["delta0"], cfg["d"], cfg["T_max"], **kw)
    rows = [["normal_form", *[row[k] for k in ("delta", "exit_min", "exit_median", "exited", "drift_sup")]] for row in rep.rows]
    rows += [["control", *[row[k] for k in ("delta", "exit_min", "exit_median", "exited", "drift_sup")]] for row in ctrl.rows]
    summary = {"exit_exponent": rep.exit_exponent, "drift_exponent": rep.drift_exponent, "d": cfg["d"],
               "control_exited": any(ctrl.exited)}
    orb = torus_orbit_defect(D, torus, cfg["omega"], cfg["orbit_T"], cfg["orbit_dt"], seed=cfg["seed"])
    summary["control_orbit_defect"] = orb.defect
    if cfg["kam_orbit"]:
        kcfg = resolve_config("kam-run", None, cfg["seed"])
        _, f, kmodes, omega = _kam_objects(kcfg)
        from .nls import run_nls_kam, tune_radius

        p = WeightParams(p=kcfg["p"], s=kcfg["s"], a=kcfg["a"], theta=kcfg["theta"])
        r = tune_radius(f, kmodes, omega.omega, p, kcfg["gamma"], kcfg["degree_cutoff"], kcfg["eps0_target"],
                        support=kcfg["support"])
        run = run_nls_kam(f, kmodes, omega, r, p, kcfg["gamma"], kcfg["degree_cutoff"], support=kcfg["support"])
        korb = torus_orbit_defect(run.result.N, run.torus, omega, cfg["orbit_T"], cfg["orbit_dt"], seed=cfg["seed"])
        summary["kam_orbit_defect"] = korb.defect
        summary["kam_orbit_excess"] = korb.excess
        summary["kam_orbit_integrator_error"] = korb.integrator_error
        summary["kam_orbit_bound"] = 100 * (kcfg["eps_target"] + run.result.truncation_residual) * cfg["orbit_T"]
        summary["kam_orbit_modulus_drift"] = korb.modulus_drift
    out = Output(cfg)
    out.csv("stability.csv", ["kind", "delta", "exit_min", "exit_median", "exited", "drift_sup"], rows)
    out.json("summary.json", summary)
    return 0, out


COMMANDS = {"kam-run", "measure", "verify", "stability"}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nlskam", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"nlskam {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in sorted(COMMANDS):
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON file with parameter overrides")
        sp.add_argument("--seed", type=int, help="seed for every random draw")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--threads", type=int, default=1, help="worker threads for sampling")
        sp.add_argument("--timing", action="store_true", help="record wall times (kam-run; breaks byte-identity)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        cfg = resolve_config(args.command, args.config, args.seed)
        if args.command == "kam-run":
            if args.timing:
                cfg["timing"] = True
            code, out = cmd_kam_run(cfg)
        elif args.command == "measure":
            code, out = cmd_measure(cfg, args.threads)
        elif args.command == "verify":
            code, out = cmd_verify(cfg, args.threads)
        else:
            code, out = cmd_stability(cfg, args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    out.flush(Path(args.out))
    return code


if __name__ == "__main__":
    sys.exit(main())
