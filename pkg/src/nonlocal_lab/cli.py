"""Command-line harness.

``nonlocal-lab run <experiment> [flags]`` validates the resolved
configuration, runs the experiment and writes ``results.csv`` and
``meta.json`` to ``--out``.  ``nonlocal-lab report <dir>`` re-checks a run
directory against the thresholds bundled with its experiment.

Exit codes: 0 success, 2 precondition error, 3 convergence error (``run``);
``report`` returns 1 when a check fails and 2 when files are missing.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .errors import ConvergenceError, DomainError, LabError, SchemeViolationError

COMMANDS = ("kernels", "eval", "wos", "ball", "rates", "ko", "spectral", "curvature")

DEFAULTS: dict[str, dict[str, Any]] = {
    "kernels": {"s": 0.5, "dim": 2, "radii": [0.25, 0.5, 1.0, 2.0]},
    "eval": {"s": 0.3, "dim": 2, "demo": "usigma", "sigma": None, "points": 10},
    "wos": {"s": 0.5, "dim": 2, "sigma": None, "samples": 100_000, "kappa": 0.5, "max_steps": 1000,
            "radii": [0.0]},
    "ball": {"s": 0.5, "dim": 2, "demo": "torsion", "sigma": None, "points": 6},
    "rates": {"s": 0.6, "dim": 1, "mode": "rhs", "beta": None, "solver": "green", "samples": 20_000,
              "kappa": 0.5, "max_steps": 1000},
    "ko": {"s": 0.5, "f": "power", "p": 2.5, "alpha": None, "beta": None},
    "spectral": {"s": 0.5, "demo": "green", "p": 2.0},
    "curvature": {"s": 0.3, "demo": "es2", "surface": "paraboloid",
                  "sigma_minus": [[math.pi / 2, math.pi / 2]], "sigma_plus": [[0.0, 0.0]]},
}

TOLERANCES: dict[str, dict[str, float]] = {
    "kernels": {"exit_mass": 1e-8},
    "eval": {"usigma_rel": 1e-4, "torsion_abs": 1e-3},
    "wos": {"sigmas": 3.0, "rel_stderr": 0.01},
    "ball": {"rel": 1e-4},
    "rates": {"exponent": 0.05},
    "ko": {},
    "spectral": {"green": 1e-6, "h1_slope": 0.05, "ladder": 1e-8, "envelope": 0.05},
    "curvature": {"closed_form": 1e-6, "nll": 1e-3, "ratio_margin": 0.02, "sweep": 0.05},
}

# flag name -> params key; flags left unset do not override config values
FLAG_KEYS = {"s": "s", "dim": "dim", "samples": "samples", "kappa": "kappa", "max_steps": "max_steps",
             "f": "f", "p": "p", "alpha": "alpha", "beta": "beta", "sigma": "sigma", "demo": "demo",
             "mode": "mode", "solver": "solver", "points": "points", "surface": "surface"}

Rows = list[list[Any]]
Plan = Callable[[], tuple[list[str], Rows]]


# ---------------------------------------------------------------------------
# CSV helpers


def _fmt(v: Any) -> str:
    if v is None:
        return "undecided"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _parse(v: str) -> Any:
    if v in ("true", "false"):
        return v == "true"
    if v == "undecided":
        return None
    try:
        return float(v)
    except ValueError:
        return v


def write_csv(path: Path, header: list[str], rows: Rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def read_csv(path: Path) -> list[dict[str, Any]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [{k: _parse(v) for k, v in row.items()} for row in csv.DictReader(fh)]


# ---------------------------------------------------------------------------
# experiments: each planner validates everything, then returns the work as a thunk


def _unknown(cmd: str, params: dict):
    extra = sorted(set(params) - set(DEFAULTS[cmd]))
    if extra:
        raise DomainError(f"unknown parameters for {cmd!r}: {extra}")


def _choice(name: str, value, options):
    if value not in options:
        raise DomainError(f"{name} must be one of {list(options)}, got {value!r}")


def _int(name: str, value, lo: int = 1) -> int:
    if isinstance(value, bool) or int(value) != value or value < lo:
        raise DomainError(f"{name} must be an integer >= {lo}, got {value!r}")
    return int(value)


def _probe_points(N: int, n: int, r_max: float) -> np.ndarray:
    """Points on a spiral of increasing radius, deterministic for given (N, n)."""
    pts = np.zeros((n, N))
    for k in range(n):
        r = r_max * k / max(n - 1, 1)
        th = 0.7 * k
        pts[k, 0] = r * math.cos(th)
        if N > 1:
            pts[k, 1] = r * math.sin(th)
    return pts


def plan_kernels(p: dict, seed: int) -> Plan:
    from scipy.integrate import quad

    from .kernels import C_Ns, KernelParams, c_Ns, gamma_radius, torsion_constant
    from ._quad import sphere_area

    kp = KernelParams(_int("dim", p["dim"]), float(p["s"]))
    radii = [float(r) for r in p["radii"]]
    if not radii or min(radii) <= 0:
        raise DomainError("radii must be a nonempty list of positive numbers")

    def run():
        N, s = kp.N, kp.s
        # exit-kernel mass in w = (r/|y|)^2: |S^{N-1}| c (1/2) int w^{s-1} (1-w)^{-s} dw
        beta_int, _ = quad(lambda w: 1.0, 0.0, 1.0, weight="alg", wvar=(s - 1, -s))
        mass = sphere_area(N) * c_Ns(N, s) * 0.5 * beta_int
        rows = [[N, s, r, C_Ns(N, s), c_Ns(N, s), torsion_constant(N, s), float(gamma_radius(N, s, r)), mass]
                for r in radii]
        return ["N", "s", "r", "C_Ns", "c_Ns", "torsion_constant", "gamma", "exit_mass"], rows

    return run


def _sigma(p: dict, s: float) -> float:
    sigma = 0.5 * (1 - s) if p.get("sigma") is None else float(p["sigma"])
    if not 0 < sigma <= 1 - s:
        raise DomainError(f"sigma must lie in (0, 1-s] = (0, {1 - s}], got sigma={sigma!r}")
    p["sigma"] = sigma
    return sigma


def plan_eval(p: dict, seed: int) -> Plan:
    from .kernels import KernelParams, explicit_sharmonic
    from .pv_eval import frac_laplacian_pv, sharmonic_field, torsion_field

    kp = KernelParams(_int("dim", p["dim"]), float(p["s"]))
    _choice("demo", p["demo"], ("usigma", "torsion"))
    n = _int("points", p["points"])
    if p["demo"] == "usigma":
        sigma = _sigma(p, kp.s)
        u = sharmonic_field(kp, sigma)
    else:
        p["sigma"] = None
        u = torsion_field(kp)
    pts = _probe_points(kp.N, n, 0.85)

    def run():
        rows = []
        for i, x in enumerate(pts):
            r = frac_laplacian_pv(u, kp, x)
            if p["demo"] == "usigma":
                target, ux = 0.0, float(explicit_sharmonic(kp, sigma, x))
            else:
                target, ux = 1.0, float(u(x[None, :])[0])
            rows.append([i, float(np.linalg.norm(x)), ux, r.value, r.err_est, target])
        return ["index", "radius", "u", "value", "err_est", "target"], rows

    return run


def plan_wos(p: dict, seed: int) -> Plan:
    from .kernels import KernelParams, explicit_sharmonic
    from .wos import WalkConfig, ball_domain, wos_field

    kp = KernelParams(_int("dim", p["dim"]), float(p["s"]))
    sigma = _sigma(p, kp.s)
    cfg = WalkConfig(kappa=float(p["kappa"]), max_steps=_int("max_steps", p["max_steps"]),
                     n_samples=_int("samples", p["samples"]), seed=seed)
    radii = [float(r) for r in p["radii"]]
    if not radii or min(radii) < 0 or max(radii) >= 1:
        raise DomainError("radii must lie in [0, 1)")
    grid = [np.eye(kp.N)[0] * r for r in radii]
    dom = ball_domain(lambda y: explicit_sharmonic(kp, sigma, y), kp.N)

    def run():
        ests = wos_field(dom, None, grid, kp, cfg)
        rows = [[i, r, e.mean, e.stderr, e.n, e.censored, float(explicit_sharmonic(kp, sigma, x))]
                for i, (r, x, e) in enumerate(zip(radii, grid, ests))]
        return ["index", "radius", "mean", "stderr", "n", "censored", "exact"], rows

    return run


def plan_ball(p: dict, seed: int) -> Plan:
    from .ball_solver import green_solve_ball, poisson_solve_ball
    from .kernels import BallGeometry, KernelParams, explicit_sharmonic, torsion_ball

    kp = KernelParams(_int("dim", p["dim"]), float(p["s"]))
    _choice("demo", p["demo"], ("torsion", "poisson"))
    n = _int("points", p["points"])
    if p["demo"] == "poisson":
        sigma = _sigma(p, kp.s)
        if abs(sigma - (1 - kp.s)) < 1e-15:
            raise DomainError("the critical sigma = 1-s has zero exterior datum")
    else:
        p["sigma"] = None
    radii = np.linspace(0.0, 0.8, n) if n > 1 else np.zeros(1)
    ball = BallGeometry(tuple(np.zeros(kp.N)), 1.0)

    def run():
        rows = []
        for i, r in enumerate(radii):
            x = np.eye(kp.N)[0] * r
            if p["demo"] == "torsion":
                val = green_solve_ball(kp, lambda y: np.ones(len(y)), x)
                exact = float(torsion_ball(kp, ball, x))
            else:
                val = poisson_solve_ball(kp, lambda y: explicit_sharmonic(kp, sigma, y), x)
                exact = float(explicit_sharmonic(kp, sigma, x))
            rows.append([i, float(r), val, exact])
        return ["index", "radius", "value", "exact"], rows

    return run


def plan_rates(p: dict, seed: int) -> Plan:
    from .kernels import KernelParams
    from .rates import _check_mode, expected_rate, make_wos_solver, rate_experiment
    from .wos import WalkConfig

    kp = KernelParams(_int("dim", p["dim"]), float(p["s"]))
    _choice("mode", p["mode"], ("rhs", "datum"))
    _choice("solver", p["solver"], ("green", "wos"))
    s = kp.s
    if p["beta"] is None:
        betas = [s / 2, s, s + 0.4] if p["mode"] == "rhs" else [(1 - s) / 4, (1 - s) / 2]
    else:
        betas = [float(b) for b in np.atleast_1d(p["beta"])]
    for b in betas:
        _check_mode(p["mode"], b, s)
    p["beta"] = betas
    if p["solver"] == "wos":
        solver = make_wos_solver(WalkConfig(kappa=float(p["kappa"]), max_steps=_int("max_steps", p["max_steps"]),
                                            n_samples=_int("samples", p["samples"]), seed=seed))
    else:
        solver = "green"

    def run():
        rows = []
        for b in betas:
            exp_a, exp_log = expected_rate(p["mode"], b, s)
            fit = rate_experiment(p["mode"], b, kp, solver)
            rows.append([p["mode"], b, s, exp_a, exp_log, fit.exponent, fit.log_factor, fit.r2,
                         fit.window[0], fit.window[1]])
        return ["mode", "beta", "s", "expected_exponent", "expected_log", "exponent", "log_factor", "r2",
                "delta_min", "delta_max"], rows

    return run


def expected_ko(name: str, s: float, param: float | None) -> tuple[bool, bool, bool]:
    """(KO, L1, E) for the profile families, from their closed-form thresholds."""
    if name == "power":
        return param > 1, param > 1 + 2 * s, param < (1 + s) / (1 - s)
    if name == "lower":
        return True, param > 2 * s, True
    if name == "upper":
        return True, True, param > 1
    return True, True, False


def plan_ko(p: dict, seed: int) -> Plan:
    from .semilinear_ko import (exponential_profile, ko_classify, lower_critical_profile, power_profile,
                                upper_critical_profile)

    s = float(p["s"])
    if not 0 < s < 1:
        raise DomainError(f"s must lie in (0, 1), got s={s!r}")
    _choice("f", p["f"], ("power", "lower", "upper", "exp"))
    key = {"power": "p", "lower": "alpha", "upper": "beta", "exp": None}[p["f"]]
    for k in ("p", "alpha", "beta"):
        if k != key:
            p[k] = None
    param = None if key is None else p[key]
    if key is not None and param is None:
        raise DomainError(f"profile {p['f']!r} needs --{key}")
    if key == "alpha" and not param > 0:
        raise DomainError(f"alpha must be positive, got alpha={param!r}")
    prof = {"power": lambda: power_profile(float(param)),
            "lower": lambda: lower_critical_profile(s, float(param)),
            "upper": lambda: upper_critical_profile(s, float(param)),
            "exp": exponential_profile}[p["f"]]()

    def run():
        c = ko_classify(prof, s)
        e = expected_ko(p["f"], s, param)
        return (["profile", "parameter", "s", "KO", "L1", "E", "expected_KO", "expected_L1", "expected_E"],
                [[p["f"], "" if param is None else float(param), s, c.KO, c.L1, c.E, *e]])

    return run


def plan_spectral(p: dict, seed: int) -> Plan:
    from . import spectral as sp

    s = float(p["s"])
    if not 0 < s < 1:
        raise DomainError(f"s must lie in (0, 1), got s={s!r}")
    _choice("demo", p["demo"], ("green", "kappa", "h1", "ladder"))
    basis = sp.EigenBasis((1.0,))
    if p["demo"] != "ladder":
        p["p"] = None
    else:
        lo, hi = sp.spectral_range(s)
        if not lo < float(p["p"]) < hi:
            raise DomainError(f"p={p['p']!r} is outside ({lo}, {hi}) for s={s}")

    def run():
        if p["demo"] == "green":
            pairs = [(x, y) for x in (0.05, 0.3, 0.5) for y in (0.1, 0.45, 0.9)]
            rows = [[x, y, float(sp.green_subordinate(s, x, y, basis)), sp.green_polylog(s, x, y)] for x, y in pairs]
            return ["x", "y", "subordinated", "series"], rows
        if p["demo"] == "kappa":
            d = np.geomspace(0.01, 0.2, 8)
            k = np.atleast_1d(sp.killing(s, d, basis))
            c = sp.half_line_killing_constant(s)
            return ["delta", "kappa", "scaled", "half_line_constant"], [[a, b, b * a ** (2 * s), c]
                                                                        for a, b in zip(d, k)]
        if p["demo"] == "h1":
            d = np.geomspace(1e-6, 1e-3, 7)
            h = sp.h1_weight(d, s, basis)
            return ["delta", "h1", "target_slope"], [[a, b, -(2 - 2 * s)] for a, b in zip(d, h)]
        lad = sp.large_solution_spectral(float(p["p"]), s, basis)
        rows = [[float(lev), float(d), float(v)] for lev, it in zip(lad.levels, lad.iterates)
                for d, v in zip(lad.deltas, it)]
        return ["level", "delta", "value"], rows

    return run


def plan_curvature(p: dict, seed: int) -> Plan:
    from . import curvature as cv

    s = float(p["s"])
    if not 0 < s < 0.5:
        raise DomainError(f"s must lie in (0, 1/2), got s={s!r}")
    _choice("demo", p["demo"], ("es2", "paraboloid", "nll", "sweep", "teoprinc"))
    surfaces = {"paraboloid": cv.paraboloid, "saddle": cv.saddle, "damped_quadratic": cv.damped_quadratic}
    if p["demo"] == "nll":
        _choice("surface", p["surface"], tuple(surfaces))
    sig_m = [tuple(map(float, a)) for a in p["sigma_minus"]]
    sig_p = [tuple(map(float, a)) for a in p["sigma_plus"]]

    def run():
        if p["demo"] == "es2":
            th = np.linspace(0.0, 2 * np.pi, 721)
            rows = [[t, cv.es2_curvature(t, s), cv.es2_closed_form(t, s)] for t in th]
            return ["theta", "K", "closed_form"], rows
        if p["demo"] == "paraboloid":
            r = cv.directional_curvature(cv.paraboloid(), [1.0, 0.0], s)
            return ["s", "K", "err_est", "closed_form"], [[s, r.value, r.err_est, cv.paraboloid_curvature(s)]]
        if p["demo"] == "nll":
            surf = surfaces[p["surface"]]()
            return (["surface", "s", "pv", "average"],
                    [[p["surface"], s, cv.mean_curvature_pv(surf, s), cv.mean_curvature_avg(surf, s)]])
        if p["demo"] == "sweep":
            s_list = sorted({s, 0.4, 0.45, 0.49, 0.499})
            res = cv.asymptotic_sweep(cv.paraboloid(), [1.0, 0.0], s_list)
            return ["s", "scaled_K", "target"], [[a, b, res.target] for a, b in res.values]
        pr = cv.prescribed_extrema(sig_m, sig_p, s)
        rows = [["minus", sig_m[0][0], pr.K_minus], ["plus", sig_p[0][0], pr.K_plus]]
        rows += [["margin", float(t), float(k)] for t, k in zip(pr.grid, pr.K_grid)]
        return ["role", "theta", "K"], rows

    return run


PLANNERS: dict[str, Callable[[dict, int], Plan]] = {
    "kernels": plan_kernels, "eval": plan_eval, "wos": plan_wos, "ball": plan_ball, "rates": plan_rates,
    "ko": plan_ko, "spectral": plan_spectral, "curvature": plan_curvature,
}


# ---------------------------------------------------------------------------
# run


def resolve(command: str | None, config: dict, flags: dict, seed: int | None, out: str | None) -> dict:
    """Merge defaults, the config file and explicit flags (flags win)."""
    command = command or config.get("command")
    if command not in COMMANDS:
        raise DomainError(f"command must be one of {list(COMMANDS)}, got {command!r}")
    file_params = dict(config.get("params", {}))
    file_params.update({k: v for k, v in config.items() if k not in ("command", "params", "seed", "out_dir",
                                                                      "tolerances", "version")})
    params = dict(DEFAULTS[command])
    params.update(file_params)
    params.update({k: v for k, v in flags.items() if v is not None})
    _unknown(command, params)
    seed = seed if seed is not None else config.get("seed", 0)
    seed = _int("seed", seed, lo=0)
    out_dir = out or config.get("out_dir") or "."
    return {"command": command, "params": params, "seed": seed, "out_dir": out_dir}


def run(config: dict) -> int:
    """Execute a resolved configuration; returns the exit status."""
    cmd, params, seed = config["command"], config["params"], config["seed"]
    out = Path(config["out_dir"])
    try:
        work = PLANNERS[cmd](params, seed)
        out.mkdir(parents=True, exist_ok=True)
        header, rows = work()
    except (DomainError, ValueError) as exc:
        print(f"precondition error: {exc}", file=sys.stderr)
        return 2
    except (ConvergenceError, SchemeViolationError, LabError) as exc:
        print(f"convergence error: {exc}", file=sys.stderr)
        return 3
    write_csv(out / "results.csv", header, rows)
    meta = {"command": cmd, "params": params, "seed": seed, "out_dir": str(out),
            "tolerances": TOLERANCES[cmd], "version": __version__}
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return 0


# ---------------------------------------------------------------------------
# report

Check = tuple[str, bool, str]


def _report_kernels(rows, p, tol) -> list[Check]:
    out = []
    for r in rows:
        dev = abs(r["exit_mass"] - 1)
        out.append((f"exit kernel mass N={int(r['N'])} s={r['s']:g}", dev <= tol["exit_mass"],
                    f"|mass-1|={dev:.3e} <= {tol['exit_mass']:g}"))
        g = r["torsion_constant"] * r["r"] ** (2 * r["s"])
        dg = abs(r["gamma"] - g) / g
        out.append((f"gamma(r) scaling r={r['r']:g}", dg <= 1e-12, f"rel dev {dg:.3e} <= 1e-12"))
    return out


def _report_eval(rows, p, tol) -> list[Check]:
    out = []
    for r in rows:
        if p["demo"] == "usigma":
            bound = max(r["err_est"], tol["usigma_rel"] * r["u"])
            out.append((f"s-harmonicity of u_sigma at probe {int(r['index'])}", abs(r["value"]) <= bound,
                        f"|Lu|={abs(r['value']):.3e} <= {bound:.3e}"))
        else:
            dev = abs(r["value"] - 1)
            out.append((f"torsion identity at probe {int(r['index'])}", dev <= tol["torsion_abs"],
                        f"|Lv-1|={dev:.3e} <= {tol['torsion_abs']:g}"))
    return out


def _report_wos(rows, p, tol) -> list[Check]:
    out = []
    for r in rows:
        dev = abs(r["mean"] - r["exact"])
        k = tol["sigmas"]
        out.append((f"walk-on-spheres vs closed form at r={r['radius']:g}", dev <= k * r["stderr"],
                    f"|mean-exact|={dev:.3e} <= {k:g} stderr={k * r['stderr']:.3e}"))
        rel = r["stderr"] / abs(r["exact"])
        out.append((f"walk-on-spheres stderr at r={r['radius']:g}", rel < tol["rel_stderr"],
                    f"stderr/value={rel:.3e} < {tol['rel_stderr']:g}"))
    return out


def _report_ball(rows, p, tol) -> list[Check]:
    out = []
    for r in rows:
        rel = abs(r["value"] - r["exact"]) / abs(r["exact"])
        out.append((f"ball {p['demo']} quadrature at r={r['radius']:g}", rel <= tol["rel"],
                    f"rel err {rel:.3e} <= {tol['rel']:g}"))
    return out


def _report_rates(rows, p, tol) -> list[Check]:
    out = []
    for r in rows:
        s, b = r["s"], r["beta"]
        if r["mode"] == "datum":
            label = "udelta datum row: exponent -beta"
        elif b < s:
            label = "udelta first row: exponent s"
        elif b == s:
            label = "udelta middle row: exponent s with log factor"
        else:
            label = "udelta last row: exponent 2s-beta"
        dev = abs(r["exponent"] - r["expected_exponent"])
        ok = dev <= tol["exponent"] and r["log_factor"] == r["expected_log"]
        out.append((label, ok, f"beta={b:g}, fitted {r['exponent']:.4f} vs {r['expected_exponent']:.4f} "
                               f"(|dev| <= {tol['exponent']:g}), log flag {r['log_factor']} "
                               f"(expected {r['expected_log']})"))
    return out


def _report_ko(rows, p, tol) -> list[Check]:
    out = []
    for r in rows:
        for k in ("KO", "L1", "E"):
            out.append((f"{k} condition for {r['profile']} profile", r[k] == r[f"expected_{k}"],
                        f"classified {r[k]}, expected {r[f'expected_{k}']}"))
    return out


def _report_spectral(rows, p, tol) -> list[Check]:
    demo, s = p["demo"], p["s"]
    if demo == "green":
        t = tol["green"]
        return [(f"green subordination at ({r['x']:g}, {r['y']:g})", abs(r["subordinated"] - r["series"]) <= t,
                 f"|diff|={abs(r['subordinated'] - r['series']):.3e} <= {t:g}") for r in rows]
    if demo == "kappa":
        c = rows[0]["half_line_constant"]
        return [(f"killing rate at delta={r['delta']:.3g}", c / 2 <= r["scaled"] <= 2 * c,
                 f"kappa delta^2s={r['scaled']:.4f} in [{c / 2:.4f}, {2 * c:.4f}]") for r in rows]
    if demo == "h1":
        d = np.array([r["delta"] for r in rows])
        h = np.array([r["h1"] for r in rows])
        slope = float(np.polyfit(np.log(d), np.log(h), 1)[0])
        target = -(2 - 2 * s)
        return [("h1-behav slope", abs(slope - target) <= tol["h1_slope"],
                 f"slope {slope:.4f} vs {target:.4f} (|dev| <= {tol['h1_slope']:g})")]
    levels = sorted({r["level"] for r in rows})
    table = {lev: np.array([r["value"] for r in rows if r["level"] == lev]) for lev in levels}
    deltas = np.array([r["delta"] for r in rows if r["level"] == levels[0]])
    worst = min(float(np.min(table[b] - table[a])) for a, b in zip(levels, levels[1:]))
    out = [("approx ladder monotone in j", worst >= -tol["ladder"],
            f"min step {worst:.3e} >= -{tol['ladder']:g}")]
    collar = (deltas <= 0.05) & (deltas >= 1e-6)
    expo = float(np.polyfit(np.log(deltas[collar]), np.log(table[levels[-1]][collar]), 1)[0])
    target = -2 * s / (p["p"] - 1)
    out.append(("supersol envelope exponent", expo >= target - tol["envelope"],
                f"exponent {expo:.4f} >= {target:.4f} - {tol['envelope']:g}"))
    return out


def _report_curvature(rows, p, tol) -> list[Check]:
    demo = p["demo"]
    if demo == "es2":
        th = np.array([r["theta"] for r in rows])
        K = np.array([r["K"] for r in rows])
        cf = np.array([r["closed_form"] for r in rows])
        step = th[1] - th[0]
        zeros = [float(K[np.argmin(np.abs(th - a))]) for a in (0.0, np.pi / 2)]
        i = int(np.argmax(K))
        off = abs((th[i] - np.pi / 4 + np.pi / 4) % (np.pi / 2) - np.pi / 4)
        H = float(np.mean(K[:-1]))
        lam_m, lam_p = float(K.min()), float(K.max())
        ratio = H / ((lam_m + lam_p) / 2)
        dev = float(np.max(np.abs(K - cf)))
        bound = 4 / np.pi - tol["ratio_margin"]
        return [("es2 minimum at 0 and pi/2", all(z == 0.0 for z in zeros), f"K(0), K(pi/2) = {zeros}"),
                ("es2 maximum at pi/4", off <= step + 1e-12, f"argmax {th[i]:.5f}, offset {off:.2e} <= {step:.2e}"),
                ("es2 mean over extremes bound", ratio >= bound, f"H/((l-+l+)/2)={ratio:.4f} >= {bound:.4f}"),
                ("es2 reduced integral vs closed form", dev <= tol["closed_form"],
                 f"max dev {dev:.3e} <= {tol['closed_form']:g}")]
    if demo == "paraboloid":
        r = rows[0]
        rel = abs(r["K"] - r["closed_form"]) / r["closed_form"]
        return [("curv closed form on the paraboloid", rel <= tol["closed_form"],
                 f"rel dev {rel:.3e} <= {tol['closed_form']:g}")]
    if demo == "nll":
        r = rows[0]
        dev = abs(r["pv"] - r["average"])
        return [(f"NLL identity on {r['surface']}", dev <= tol["nll"], f"|pv-avg|={dev:.3e} <= {tol['nll']:g}")]
    if demo == "sweep":
        dev = [abs(r["scaled_K"] - r["target"]) for r in rows]
        last = rows[-1]
        ok_tail = all(b <= a + 1e-12 for a, b in zip(dev[-3:], dev[-3:][1:]))
        ok_end = last["s"] < 0.499 or dev[-1] < tol["sweep"]
        return [("lemasintotico deviations shrink", ok_tail, f"last deviations {[round(d, 6) for d in dev[-3:]]}"),
                ("lemasintotico end point", ok_end, f"|(1-2s)K-target|={dev[-1]:.4f} < {tol['sweep']:g} "
                                                    f"at s={last['s']:g}")]
    km = next(r["K"] for r in rows if r["role"] == "minus")
    kp = next(r["K"] for r in rows if r["role"] == "plus")
    margin = [r["K"] for r in rows if r["role"] == "margin"]
    ok = bool(margin) and all(km < k < kp for k in margin)
    return [("teoprinc extrema on the margin grid", ok,
             f"{len(margin)} directions strictly inside ({km:.4e}, {kp:.4e})")]


REPORTERS = {"kernels": _report_kernels, "eval": _report_eval, "wos": _report_wos, "ball": _report_ball,
             "rates": _report_rates, "ko": _report_ko, "spectral": _report_spectral,
             "curvature": _report_curvature}


def report(out_dir) -> tuple[int, list[str]]:
    """Check a run directory; returns (exit status, summary lines)."""
    d = Path(out_dir)
    meta_p, res_p = d / "meta.json", d / "results.csv"
    if not meta_p.is_file() or not res_p.is_file():
        return 2, [f"missing meta.json or results.csv in {d}"]
    try:
        meta = json.loads(meta_p.read_text(encoding="utf-8"))
        rows = read_csv(res_p)
        checks = REPORTERS[meta["command"]](rows, meta["params"], meta["tolerances"])
    except (KeyError, ValueError, TypeError, StopIteration, IndexError) as exc:
        return 2, [f"unreadable run directory {d}: {exc!r}"]
    if not checks:
        return 2, [f"no records in {res_p}"]
    lines = [f"{label}: {detail} - {'PASS' if ok else 'FAIL'}" for label, ok, detail in checks]
    return (0 if all(ok for _, ok, _ in checks) else 1), lines


# ---------------------------------------------------------------------------
# entry point


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nonlocal-lab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="action", required=True)
    r = sub.add_parser("run", help="run an experiment")
    r.add_argument("command", nargs="?", choices=COMMANDS)
    r.add_argument("--config", help="JSON file with command, params and seed")
    r.add_argument("--out", help="output directory")
    r.add_argument("--seed", type=int)
    r.add_argument("--s", type=float)
    r.add_argument("--dim", type=int)
    r.add_argument("--samples", type=int)
    r.add_argument("--kappa", type=float)
    r.add_argument("--max-steps", dest="max_steps", type=int)
    for name in ("p", "alpha", "sigma"):
        r.add_argument(f"--{name}", type=float)
    r.add_argument("--beta", type=float, nargs="+")
    r.add_argument("--points", type=int)
    for name in ("f", "demo", "mode", "solver", "surface"):
        r.add_argument(f"--{name}")
    r.add_argument("--set", action="append", default=[], metavar="KEY=JSON",
                   help="any other parameter, value parsed as JSON")
    rep = sub.add_parser("report", help="check a completed run directory")
    rep.add_argument("out_dir")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    if args.action == "report":
        status, lines = report(args.out_dir)
        for ln in lines:
            print(ln, file=sys.stdout if status != 2 else sys.stderr)
        return status
    try:
        config = {}
        if args.config:
            config = json.loads(Path(args.config).read_text(encoding="utf-8"))
            if not isinstance(config, dict):
                raise DomainError("the config file must hold a JSON object")
        flags = {key: getattr(args, attr) for attr, key in FLAG_KEYS.items()}
        if flags.get("beta") is not None and len(flags["beta"]) == 1:
            flags["beta"] = flags["beta"][0]
        for item in args.set:
            k, sep, v = item.partition("=")
            if not sep:
                raise DomainError(f"--set expects KEY=JSON, got {item!r}")
            flags[k.replace("-", "_")] = json.loads(v)
        resolved = resolve(args.command, config, flags, args.seed, args.out)
    except (DomainError, OSError, json.JSONDecodeError) as exc:
        print(f"precondition error: {exc}", file=sys.stderr)
        return 2
    return run(resolved)


if __name__ == "__main__":
    sys.exit(main())
