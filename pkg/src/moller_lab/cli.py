"""Configuration parsing and experiment orchestration.

Configs are flat sectioned key = value files (the expression values quoted
or bare), e.g.

    [metric0]
    beta = "1"
    a = "1"
    [metric1]
    beta = "1 - 0.25*exp(-t^2)"
    a = "1 + 0.2*sin(x)*exp(-t^2)"
    [field]
    kind = dirac
    mass = 1.0
    [grid]
    nx = 64
    nt = 768
    t0 = -4.8
    t1 = 4.8
    [chi]
    t_minus = -3.6
    t_plus = 3.6

Expressions use the arithmetic language of `exprlang` (variables t and x;
sin cos tan exp log sqrt tanh; pi; + - * / ^).  Commands:

    moller-lab <check|solve|green|moller|conserve|state>
               --config cfg [--out dir] [--no-rho] [--fd4] [--cfl v]

Exit codes: 0 all thresholds pass, 1 threshold failure, 2 configuration
error.  Reports are deterministic JSON (no timestamps; a sidecar
run_meta.json carries the invocation context).
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import dirac as dirac_mod
from . import exprlang, geom, green, moller, qstate, wave
from .fields import Coef
from .grid import Grid, GridError, bump_source, write_json, write_slice_csv
from .shs import (SystemError, apply_system, check_condition_H, check_condition_S,
                  random_smooth_data, solve_cauchy)

parse_expr = exprlang.parse_expr  # the config-facing expression entry point


class ConfigError(ValueError):
    pass


DEFAULT_TOLERANCES = {
    "condition_s": 1e-10,
    "green_identity": 1e-5,
    "green_leakage": 1e-6,
    "intertwining": 1e-5,
    "roundtrip": 1e-5,
    "conservation": 1e-5,
    "drift": 1e-6,
    "state_positivity": -1e-8,
    "state_commutator": 1e-5,
    "state_slope": -2.0,
}


@dataclass
class ExperimentConfig:
    g0: geom.Metric1p1
    g1: geom.Metric1p1
    kind: str
    mass: float
    potential: Coef
    grid: Grid
    chi: geom.ChiProfile
    tolerances: dict
    seed: int = 0
    state: dict = field(default_factory=dict)

    @property
    def rho(self):
        return geom.rho_from_volumes(self.g0, self.g1)


def _unquote(value):
    value = value.strip()
    if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
        return value[1:-1]
    return value


def _expr_coef(raw, where):
    try:
        return Coef.from_expr(_unquote(raw))
    except exprlang.ExprError as exc:
        raise ConfigError(f"[{where}] bad expression: {exc}") from exc


def load_config(path):
    cp = configparser.ConfigParser(interpolation=None)
    read = cp.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")

    def need(section, key, cast=str):
        if not cp.has_option(section, key):
            raise ConfigError(f"missing [{section}] {key}")
        raw = _unquote(cp.get(section, key))
        try:
            return cast(raw)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}: {exc}") from exc

    def opt(section, key, default, cast=str):
        if not cp.has_option(section, key):
            return default
        raw = _unquote(cp.get(section, key))
        try:
            return cast(raw)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}: {exc}") from exc

    g0 = geom.Metric1p1(_expr_coef(need("metric0", "beta"), "metric0"),
                        _expr_coef(need("metric0", "a"), "metric0"), "g0")
    g1 = geom.Metric1p1(_expr_coef(need("metric1", "beta"), "metric1"),
                        _expr_coef(need("metric1", "a"), "metric1"), "g1")
    kind = opt("field", "kind", "dirac")
    if kind not in ("dirac", "scalar"):
        raise ConfigError(f"[field] kind must be dirac|scalar, got {kind!r}")
    mass = opt("field", "mass", 1.0, float)
    potential = (_expr_coef(cp.get("field", "potential"), "field")
                 if cp.has_option("field", "potential") else Coef.constant(mass * mass))
    nx = need("grid", "nx", int)
    nt = need("grid", "nt", int)
    t0 = need("grid", "t0", float)
    t1 = need("grid", "t1", float)
    t_minus = need("chi", "t_minus", float)
    t_plus = need("chi", "t_plus", float)
    if not (t0 < t_minus < t_plus < t1):
        raise ConfigError(
            f"time ordering violated: need t0 < t_minus < t_plus < t1, "
            f"got {t0} < {t_minus} < {t_plus} < {t1}")
    try:
        grd = Grid(nx, nt, t0, t1)
    except GridError as exc:
        raise ConfigError(str(exc)) from exc
    chi = geom.chi_profile(t_minus, t_plus)
    tol = dict(DEFAULT_TOLERANCES)
    if cp.has_section("tolerances"):
        for key in cp.options("tolerances"):
            if key not in tol:
                raise ConfigError(f"unknown tolerance {key!r}")
            tol[key] = float(_unquote(cp.get("tolerances", key)))
    seed = opt("seed", "value", 0, int)
    state = {}
    if cp.has_section("state"):
        state = {"kmax": opt("state", "kmax", 64, int),
                 "steps": opt("state", "steps", 9000, int)}
    return ExperimentConfig(g0, g1, kind, mass, potential, grd, chi, tol, seed, state)


# ---------------------------------------------------------------------------
# command implementations; each returns (report dict, passed bool)

def _systems(cfg):
    if cfg.kind == "dirac":
        return (dirac_mod.dirac_system(cfg.g0), dirac_mod.dirac_system(cfg.g1))
    p0 = wave.wave_from_metric(cfg.g0, cfg.potential)
    p1 = wave.wave_from_metric(cfg.g1, cfg.potential)
    return (wave.reduce_to_shs(p0), wave.reduce_to_shs(p1))


def cmd_check(cfg, args):
    report = {}
    passed = True
    cfg.g0.check_positive(np.linspace(cfg.grid.t0, cfg.grid.t1, 9), cfg.grid.x)
    cfg.g1.check_positive(np.linspace(cfg.grid.t0, cfg.grid.t1, 9), cfg.grid.x)
    for name, sys in zip(("g0", "g1"), _systems(cfg)):
        rs = check_condition_S(sys, cfg.grid, tol=cfg.tolerances["condition_s"])
        rh = check_condition_H(sys, cfg.grid)
        report[f"condition_S_{name}"] = rs.as_dict()
        report[f"condition_H_{name}"] = rh.as_dict()
        passed = passed and rs.passed and rh.passed
    ok, margin = geom.cone_dominates(cfg.g0, cfg.g1,
                                     np.linspace(cfg.grid.t0, cfg.grid.t1, 9), cfg.grid.x)
    report["cone_domination"] = {"holds": bool(ok), "margin": margin}
    return report, passed


def cmd_solve(cfg, args):
    scheme = "fd4" if args.fd4 else "spectral"
    rng = np.random.default_rng(cfg.seed)
    if cfg.kind == "dirac":
        sys0 = dirac_mod.dirac_system(cfg.g0)
        data = random_smooth_data(cfg.grid, 2, kmax=3, rng=int(rng.integers(2**31)))
        psi = solve_cauchy(sys0, cfg.grid, data=data, cfl=args.cfl, scheme=scheme)
        levels = dirac_mod.spin_scalar_product_levels(cfg.g0, psi, psi)
        drift = float((levels.real.max() - levels.real.min()) / abs(levels.real.mean()))
        report = {"kind": "dirac", "scheme": scheme, "norm_drift": drift,
                  "max_speed": sys0.max_speed(cfg.grid)}
        final = psi.values[-1]
    else:
        p0 = wave.wave_from_metric(cfg.g0, cfg.potential)
        h = random_smooth_data(cfg.grid, 1, kmax=3, rng=int(rng.integers(2**31)),
                               kind="real")[:, 0].real
        hp = random_smooth_data(cfg.grid, 1, kmax=3, rng=int(rng.integers(2**31)),
                                kind="real")[:, 0].real
        jet = wave.solve_wave(p0, cfg.grid, h=h, hp=hp, cfl=args.cfl)
        jet2 = wave.solve_wave(p0, cfg.grid, h=hp, hp=h, cfl=args.cfl)
        levels = wave.symplectic_form_levels(cfg.g0, jet, jet2)
        drift = float((levels.real.max() - levels.real.min())
                      / max(abs(levels.real.mean()), 1e-300))
        report = {"kind": "scalar", "scheme": scheme, "symplectic_drift": drift,
                  "jet_consistency": wave.jet_consistency_defect(jet)}
        final = jet.values[-1]
    passed = drift < cfg.tolerances["drift"]
    report["passed"] = passed
    return report, passed, ("final_slice.csv", cfg.grid, final)


def cmd_green(cfg, args):
    sys0, _ = _systems(cfg)
    grd = cfg.grid
    span = grd.t1 - grd.t0
    rt = 0.22 * span
    f = bump_source(grd, (0.5 * (grd.t0 + grd.t1), np.pi), (rt, 1.0),
                    component=0, ncomp=sys0.n)
    scale = float(np.max(np.abs(f.values)))
    interior = slice(4, grd.nt - 3)
    gplus = green.GreenOp(sys0, grd, "advanced", args.cfl).apply(f)
    gminus = green.GreenOp(sys0, grd, "retarded", args.cfl).apply(f)
    r1 = float(np.max(np.abs(apply_system(sys0, gplus).values[interior]
                             - f.values[interior])) / scale)
    r2 = float(np.max(np.abs(apply_system(sys0, gminus).values[interior]
                             - f.values[interior])) / scale)
    sf = apply_system(sys0, f)
    r3 = float(np.max(np.abs(green.GreenOp(sys0, grd, "advanced", args.cfl)
                             .apply(sf).values - f.values)) / scale)
    gf = green.causal_propagator(sys0, grd, f, args.cfl)
    r4 = float(np.max(np.abs(apply_system(sys0, gf).values[interior])) / scale)
    r5 = float(np.max(np.abs(green.causal_propagator(sys0, grd, sf, args.cfl).values))
               / scale)
    v = sys0.max_speed(grd)
    leak = green.check_support(gplus, f, v, "future")
    psi = bump_source(grd, (0.5 * (grd.t0 + grd.t1) + 0.2, 2.0), (rt, 0.8),
                      component=sys0.n - 1, ncomp=sys0.n)
    dual = green.green_duality_defect(sys0, grd, f, psi, args.cfl)
    report = {"s_gplus_f": r1, "s_gminus_f": r2, "gplus_sf": r3,
              "s_gf": r4, "g_sf": r5, "support_leakage": leak,
              "duality_defect": dual}
    tol = cfg.tolerances
    passed = (max(r1, r2, r3, r4, r5) < tol["green_identity"]
              and leak < tol["green_leakage"]
              and dual < tol["green_identity"])
    report["passed"] = passed
    return report, passed


def _build_moller(cfg, args):
    rho = None if args.no_rho else cfg.rho
    if cfg.kind == "dirac":
        s0 = dirac_mod.dirac_system(cfg.g0)
        s1 = dirac_mod.dirac_system(cfg.g1)
        kap = dirac_mod.kappa_spin(cfg.g0, cfg.g1).map
        return moller.build_moller_map(s0, s1, cfg.g0, cfg.g1, cfg.chi, cfg.grid,
                                       rho=rho, kappa=kap, cfl=args.cfl)
    p0 = wave.wave_from_metric(cfg.g0, cfg.potential)
    p1 = wave.wave_from_metric(cfg.g1, cfg.potential)
    return wave.wave_moller(p0, p1, cfg.chi,
                            rho if rho is not None else geom.unit_rho(),
                            cfg.grid, cfl=args.cfl)


def cmd_moller(cfg, args):
    tol = cfg.tolerances
    if cfg.kind == "dirac":
        m = _build_moller(cfg, args)
        report = moller.verification_report(m, cfg.g0, cfg.g1, rng=cfg.seed)
    else:
        wm = _build_moller(cfg, args)
        rng = np.random.default_rng(cfg.seed)
        worst_resid = worst_round = 0.0
        for _ in range(3):
            h = random_smooth_data(cfg.grid, 1, kmax=2, rng=int(rng.integers(2**31)),
                                   kind="real")[:, 0].real
            hp = random_smooth_data(cfg.grid, 1, kmax=2, rng=int(rng.integers(2**31)),
                                    kind="real")[:, 0].real
            u0 = wave.solve_wave(wm.p0, cfg.grid, h=h, hp=hp, system=wm.s0, cfl=args.cfl)
            ru, _ = wm.apply(u0)
            pu = wave.apply_wave(wm.p1, wave.scalar_part(ru))
            scale = float(np.max(np.abs(ru.values[:, :, 0])))  # d_t-term magnitude
            worst_resid = max(worst_resid,
                              float(np.max(np.abs(pu.values[4:-4])) / max(scale, 1e-300)))
            back = wm.inverse_apply(ru)
            worst_round = max(worst_round,
                              float(np.max(np.abs(back.values - u0.values))
                                    / np.max(np.abs(u0.values))))
        report = {"intertwining_residual": worst_resid,
                  "roundtrip_residual": worst_round,
                  "support_leakage": 0.0,
                  "conservation_ratio": None}
    passed = (report["intertwining_residual"] < tol["intertwining"]
              and report["roundtrip_residual"] < tol["roundtrip"])
    report["passed"] = passed
    return report, passed


def cmd_conserve(cfg, args):
    tol = cfg.tolerances
    rng = np.random.default_rng(cfg.seed)
    if cfg.kind == "dirac":
        m = _build_moller(cfg, args)
        psi0 = moller.random_homogeneous_solution(m.sys0, cfg.grid, kmax=3,
                                                  rng=int(rng.integers(2**31)), cfl=args.cfl)
        phi0 = moller.random_homogeneous_solution(m.sys0, cfg.grid, kmax=3,
                                                  rng=int(rng.integers(2**31)), cfl=args.cfl)
        rep = moller.conserve_dirac(m, cfg.g0, cfg.g1, psi0, psi0)
        rep_pair = moller.conserve_dirac(m, cfg.g0, cfg.g1, psi0, phi0)
        report = {"norm": rep, "pairing": rep_pair, "rho_enabled": not args.no_rho}
        mismatch = rep["relative_mismatch"]
    else:
        wm = _build_moller(cfg, args)
        mk = lambda s: random_smooth_data(cfg.grid, 1, kmax=2, rng=s, kind="real")[:, 0].real
        s_a, s_b = int(rng.integers(2**31)), int(rng.integers(2**31))
        u0 = wave.solve_wave(wm.p0, cfg.grid, h=mk(s_a), hp=mk(s_a + 1),
                             system=wm.s0, cfl=args.cfl)
        v0 = wave.solve_wave(wm.p0, cfg.grid, h=mk(s_b), hp=mk(s_b + 1),
                             system=wm.s0, cfl=args.cfl)
        ru, _ = wm.apply(u0)
        rv, _ = wm.apply(v0)
        s0v = wave.symplectic_form(cfg.g0, u0, v0)
        s1v = wave.symplectic_form(cfg.g1, ru, rv)
        mismatch = abs(s0v - s1v) / max(abs(s0v), 1e-300)
        report = {"sigma_source": {"re": s0v.real, "im": s0v.imag},
                  "sigma_target": {"re": s1v.real, "im": s1v.imag},
                  "relative_mismatch": float(mismatch),
                  "ratio_target_over_source": float(abs(s1v) / max(abs(s0v), 1e-300)),
                  "rho_enabled": not args.no_rho}
    passed = mismatch < tol["conservation"]
    report["passed"] = bool(passed)
    return report, passed


def cmd_state(cfg, args):
    tol = cfg.tolerances
    if cfg.mass <= 0.0:
        raise ConfigError("[field] mass must be > 0 for the state command")
    kmax = cfg.state.get("kmax", 64)
    steps = cfg.state.get("steps", 9000)
    mm = qstate.ModeMoller(cfg.g0, cfg.g1, cfg.chi,
                           geom.unit_rho() if args.no_rho else cfg.rho,
                           cfg.mass ** 2, cfg.mass ** 2, kmax,
                           cfg.grid.t0, cfg.grid.t1, steps)
    ker1 = qstate.ultrastatic_ground_state(cfg.mass, kmax)
    ker0 = mm.pullback(ker1)
    ref = qstate.ultrastatic_ground_state(cfg.mass, kmax, t_ref=cfg.grid.t0)
    decay = qstate.smoothness_proxy(ker0, ref, slope_threshold=tol["state_slope"])
    report = {
        "positivity_min_eigenvalue": ker0.positivity_min_eigenvalue(),
        "commutator_defect": ker0.commutator_defect(),
        "decay": decay.as_dict(),
        "kmax": kmax,
    }
    passed = (report["positivity_min_eigenvalue"] >= tol["state_positivity"]
              and report["commutator_defect"] < tol["state_commutator"]
              and decay.passed)
    report["passed"] = bool(passed)
    return report, passed, ker0, decay


COMMANDS = ("check", "solve", "green", "moller", "conserve", "state")


def run_experiment(cfg, command, args, out_dir):
    """Run one named pipeline and write its artifacts; returns (report, ok)."""
    os.makedirs(out_dir, exist_ok=True)
    extras = ()
    if command == "check":
        report, ok = cmd_check(cfg, args)
    elif command == "solve":
        report, ok, slice_art = cmd_solve(cfg, args)
        name, grd, vals = slice_art
        write_slice_csv(os.path.join(out_dir, name), grd, vals)
    elif command == "green":
        report, ok = cmd_green(cfg, args)
    elif command == "moller":
        report, ok = cmd_moller(cfg, args)
    elif command == "conserve":
        report, ok = cmd_conserve(cfg, args)
    elif command == "state":
        report, ok, kernel, decay = cmd_state(cfg, args)
        kernel.dump(os.path.join(out_dir, "kernel.json"))
        decay.write_csv(os.path.join(out_dir, "decay.csv"))
    else:
        raise ConfigError(f"unknown command {command!r}")
    moller.write_report(os.path.join(out_dir, "report.json"), report)
    return report, ok


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="moller-lab",
        description="symmetric-hyperbolic-system laboratory: symbol checks, "
                    "Green operators, intertwining maps, state pullback")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="experiment config file")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--no-rho", action="store_true",
                        help="disable the volume-matching weight (negative control)")
    parser.add_argument("--fd4", action="store_true",
                        help="4th-order finite differences in x instead of spectral "
                             "(solve command cross-check)")
    parser.add_argument("--cfl", type=float, default=0.4)
    args = parser.parse_args(argv)
    out_dir = args.out or os.path.join("out", args.command)
    try:
        cfg = load_config(args.config)
        report, ok = run_experiment(cfg, args.command, args, out_dir)
    except (ConfigError, GridError, SystemError, geom.GeometryError,
            exprlang.ExprError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    write_json(os.path.join(out_dir, "run_meta.json"),
               {"command": args.command, "config": os.path.abspath(args.config),
                "no_rho": bool(args.no_rho), "fd4": bool(args.fd4), "cfl": args.cfl})
    print(json.dumps({"command": args.command, "passed": bool(ok)}, sort_keys=True))
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
