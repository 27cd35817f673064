"""Intertwining operators between the solution spaces of two symmetric
hyperbolic systems sharing the time function.

With S' = kappa^rho S0 kappa^{rho,-1} on the target bundle and
S_chi = (1-chi) S' + chi S1, the map and its inverse are composed verbatim
from Green operators (no algebraic simplification):

    R_plus   = Id - G_chi^adv  chi     (S1 - S'),
    R_minus  = Id - G_1^ret    (1-chi) (S1 - S'),
    R        = R_minus . R_plus . kappa^rho,
    R_plus^-1  = Id + G_'^adv   chi     (S1 - S'),
    R_minus^-1 = Id + G_chi^ret (1-chi) (S1 - S'),
    R^-1       = kappa^{rho,-1} . R_plus^-1 . R_minus^-1.

chi vanishes before t_minus and equals 1 after t_plus, so the advanced
sources are past-compact and the retarded ones future-compact; when the two
systems coincide outside the window the sources are compactly supported in
[t_minus, t_plus].  The advanced correction is supported at t >= t_minus and
the retarded one at t <= t_plus (a retarded solve spreads into the past of
its source, so the full map differs from kappa^rho on early slices; only the
R_plus stage agrees with kappa^rho there).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dirac as dirac_mod
from .fields import Coef
from .geom import cone_dominates, unit_rho
from .green import GreenOp
from .grid import GridField, write_json
from .shs import (FiberMap, adjoint_system, apply_system, check_condition_H,
                  conjugate_system, difference_apply, interpolate_systems,
                  negated_system, solve_cauchy)


class MollerError(ValueError):
    pass


@dataclass
class MollerMap:
    sys0: object
    sys1: object
    sys01: object
    sys_chi: object
    chi: object
    rho: object
    kappa: FiberMap
    grid: object
    cfl: float = 0.4
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        span = self.grid.t1 - self.grid.t0
        lo = self.chi.t_minus - self.grid.t0
        hi = self.grid.t1 - self.chi.t_plus
        if lo < 0.1 * span or hi < 0.1 * span:
            raise MollerError(
                f"chi window [{self.chi.t_minus}, {self.chi.t_plus}] needs >= 10% "
                f"margins inside the grid window [{self.grid.t0}, {self.grid.t1}]")
        self.kappa_rho = self.kappa.scaled(self.rho.coef)
        rho_inv = Coef.constant(1.0) / self.rho.coef
        self.kappa_rho_inv = FiberMap(rho_inv / self.kappa.scalar,
                                      np.linalg.inv(self.kappa.matrix))
        self.g_chi_adv = GreenOp(self.sys_chi, self.grid, "advanced", self.cfl)
        self.g_1_ret = GreenOp(self.sys1, self.grid, "retarded", self.cfl)
        self.g_chi_ret = GreenOp(self.sys_chi, self.grid, "retarded", self.cfl)
        self.g_01_adv = GreenOp(self.sys01, self.grid, "advanced", self.cfl)

    # -- source assembly -----------------------------------------------------

    def _difference_source(self, psi, psi_system, weight_of_t, f=None):
        """weight(t) * (S1 - S') psi for a history solving psi_system
        (with source f); time derivatives via the evolution identity."""
        diff = difference_apply(self.sys1, self.sys01, psi, psi_system, source=f)
        w = np.asarray(weight_of_t(self.grid.times), dtype=float)
        return GridField(self.grid, diff.values * w[:, None, None], psi.fiber_kind)

    def _transport(self, psi0):
        return self.kappa_rho.apply_to_field(psi0)

    # -- the maps --------------------------------------------------------------

    def apply(self, psi0, f0=None, return_stages=False):
        """psi0 in Sol(S0) (source f0, None meaning homogeneous); returns
        R psi0 in Sol(S1) with source kappa^rho f0."""
        transported = self._transport(psi0)
        f1 = None if f0 is None else self.kappa_rho.apply_to_field(f0)
        src_plus = self._difference_source(transported, self.sys01, self.chi, f1)
        corr_plus = self.g_chi_adv.apply(src_plus)
        phi = GridField(self.grid, transported.values - corr_plus.values, psi0.fiber_kind)
        src_minus = self._difference_source(
            phi, self.sys_chi, lambda t: 1.0 - self.chi(t), f1)
        corr_minus = self.g_1_ret.apply(src_minus)
        out = GridField(self.grid, phi.values - corr_minus.values, psi0.fiber_kind)
        if return_stages:
            return out, {
                "transported": transported, "phi_plus": phi,
                "corr_plus": corr_plus, "corr_minus": corr_minus,
                "src_plus": src_plus, "src_minus": src_minus,
            }
        return out

    def inverse_apply(self, psi1, f1=None):
        """psi1 in Sol(S1); returns R^-1 psi1 in Sol(S0)."""
        src_minus = self._difference_source(
            psi1, self.sys1, lambda t: 1.0 - self.chi(t), f1)
        v = GridField(self.grid, psi1.values + self.g_chi_ret.apply(src_minus).values,
                      psi1.fiber_kind)
        src_plus = self._difference_source(v, self.sys_chi, self.chi, f1)
        w = GridField(self.grid, v.values + self.g_01_adv.apply(src_plus).values,
                      psi1.fiber_kind)
        return self.kappa_rho_inv.apply_to_field(w)


def build_moller_map(sys0, sys1, g0, g1, chi, grid, rho=None, kappa=None,
                     cfl=0.4, check_cones=True):
    """Assemble the intertwining map for two systems over metrics g0, g1.

    rho defaults to the volume-matching weight being *disabled* (rho = 1);
    pass geom.rho_from_volumes(g0, g1) for the conserving choice.  kappa
    defaults to the identity fiber map (the diagonal-family transport).
    """
    rho = unit_rho() if rho is None else rho
    kappa = FiberMap.identity(sys0.n) if kappa is None else kappa
    notes = {}
    if check_cones:
        ok, margin = cone_dominates(g0, g1, np.linspace(grid.t0, grid.t1, 9), grid.x)
        notes["cone_margin"] = margin
        if not ok:
            notes["warning"] = ("cone domination violated (g1 light cones exceed g0's); "
                                "condition (H) of the interpolated system may fail")
    sys01 = conjugate_system(sys0, kappa, rho, label=f"conj({sys0.label})->{sys1.label}")
    sys_chi = interpolate_systems(sys01, sys1, chi)
    m = MollerMap(sys0, sys1, sys01, sys_chi, chi, rho, kappa, grid, cfl, notes)
    if check_cones:
        rep = check_condition_H(sys_chi, grid)
        notes["sys_chi_condition_H"] = rep.as_dict()
        if not rep.passed:
            notes.setdefault("warning", "interpolated system failed condition (H)")
    return m


# ---------------------------------------------------------------------------
# verification suite

def random_homogeneous_solution(sys, grid, kmax=3, rng=None, cfl=0.4):
    from .shs import random_smooth_data
    data = random_smooth_data(grid, sys.n, kmax=kmax, rng=rng, kind=sys.fiber_kind)
    return solve_cauchy(sys, grid, source=None, data=data, direction="forward", cfl=cfl)


def intertwining_residual(m, psi0, f0=None):
    """Relative residual of S1 (R psi0) = kappa^rho (S0 psi0), measured with
    the honest operator application and normalized by the largest single
    term of S1 (R psi0) (the quality of the cancellation)."""
    out = m.apply(psi0, f0)
    applied, scale = apply_system(m.sys1, out, return_terms=True)
    rhs = np.zeros_like(applied.values) if f0 is None \
        else m.kappa_rho.apply_to_field(f0).values
    interior = slice(4, m.grid.nt - 3)
    defect = float(np.max(np.abs(applied.values[interior] - rhs[interior])))
    return defect / max(scale, 1e-300), out


def roundtrip_residual(m, psi0, f0=None):
    out = m.apply(psi0, f0)
    f1 = None if f0 is None else m.kappa_rho.apply_to_field(f0)
    back = m.inverse_apply(out, f1)
    return float(np.max(np.abs(back.values - psi0.values)) /
                 max(psi0.norm_inf(), 1e-300))


def reverse_roundtrip_residual(m, psi1, f1=None):
    back = m.inverse_apply(psi1, f1)
    f0 = None if f1 is None else m.kappa_rho_inv.apply_to_field(f1)
    again = m.apply(back, f0)
    return float(np.max(np.abs(again.values - psi1.values)) /
                 max(psi1.norm_inf(), 1e-300))


def stage_support_report(m, psi0, f0=None):
    """Support bookkeeping: the advanced correction lives at t >= t_minus,
    the retarded one at t <= t_plus, and both difference sources inside
    [t_minus, t_plus] whenever the systems agree outside the window."""
    _, stages = m.apply(psi0, f0, return_stages=True)
    times = m.grid.times
    early = times < m.chi.t_minus
    late = times > m.chi.t_plus

    def mass_outside(fieldvals, mask):
        peak = max(float(np.max(np.abs(fieldvals))), 1e-300)
        if not np.any(mask):
            return 0.0
        return float(np.max(np.abs(fieldvals[mask]))) / peak

    return {
        "corr_plus_early": mass_outside(stages["corr_plus"].values, early),
        "corr_minus_late": mass_outside(stages["corr_minus"].values, late),
        "src_plus_outside": mass_outside(stages["src_plus"].values, early | late),
        "src_minus_outside": mass_outside(stages["src_minus"].values, early | late),
        "plus_stage_early_agreement": float(
            np.max(np.abs((stages["phi_plus"].values - stages["transported"].values)[early]))
            / max(stages["transported"].norm_inf(), 1e-300)) if np.any(early) else 0.0,
    }


def chi_evolution_agreement(m, psi0, cfl=0.4):
    """The plus stage equals the S_chi evolution of the transported early
    data (the geometric description of the map): solve S_chi directly from
    kappa^rho psi0 at t0 and compare."""
    transported = m.kappa_rho.apply_to_field(psi0)
    phi = m.apply(psi0, return_stages=True)[1]["phi_plus"]
    direct = solve_cauchy(m.sys_chi, m.grid, source=None,
                          data=transported.values[0], direction="forward", cfl=cfl)
    return float(np.max(np.abs(direct.values - phi.values)) /
                 max(phi.norm_inf(), 1e-300))


def conserve_dirac(m, g0, g1, psi0, phi0):
    """Hermitian slice products before/after the map, slice-averaged, with
    the relative mismatch and the raw ratio (the negative control with
    rho = 1 shows the volume ratio instead of 1)."""
    lhs = dirac_mod.spin_scalar_product(g0, psi0, phi0)
    r_psi = m.apply(psi0)
    r_phi = m.apply(phi0)
    rhs = dirac_mod.spin_scalar_product(g1, r_psi, r_phi)
    mismatch = abs(lhs - rhs) / max(abs(lhs), 1e-300)
    return {"product_source": lhs, "product_target": rhs,
            "relative_mismatch": float(mismatch),
            "ratio_source_over_target": float(abs(lhs) / max(abs(rhs), 1e-300))}


def dual_intertwiner_check(m, g0, g1, grid, rng=0, n_tests=4, cfl=0.4):
    """Run the construction for the adjoint systems and verify that the
    adjunction map sends its output into the weak kernel of the dual
    operator: for phi0 solving the adjoint of S0 homogeneously and
    w := Upsilon (R† phi0), the dual pairing integral w(S1 Psi) vol must
    cancel for random compactly supported test sections Psi.  The reported
    weak residual is that integral divided by its absolute-value counterpart
    integral |w| |S1 Psi| vol (cancellation quality)."""
    from .grid import bump_source

    adj0 = negated_system(adjoint_system(m.sys0), label="-adj0")
    adj1 = negated_system(adjoint_system(m.sys1), label="-adj1")
    m_adj = build_moller_map(adj0, adj1, g0, g1, m.chi, grid,
                             rho=m.rho, kappa=m.kappa, cfl=cfl, check_cones=False)
    phi0 = random_homogeneous_solution(adj0, grid, kmax=2, rng=rng, cfl=cfl)
    r_phi = m_adj.apply(phi0)
    # direct residual: R† phi0 solves the adjoint system of S1
    applied, scale = apply_system(adj1, r_phi, return_terms=True)
    interior = slice(4, grid.nt - 3)
    direct = float(np.max(np.abs(applied.values[interior])) / max(scale, 1e-300))

    w_vals = dirac_mod.adjunction(r_phi.values)
    weight = g1.volume_weight()
    rng_local = np.random.default_rng(rng)
    span = grid.t1 - grid.t0
    weak = 0.0
    for _ in range(n_tests):
        tc = grid.t0 + span * rng_local.uniform(0.35, 0.65)
        xc = rng_local.uniform(0.0, 2.0 * np.pi)
        test = bump_source(grid, (tc, xc), (0.15 * span, 1.0),
                           component=int(rng_local.integers(0, m.sys1.n)),
                           ncomp=m.sys1.n)
        s_test = apply_system(m.sys1, test)
        total = 0.0 + 0.0j
        total_abs = 0.0
        for n, t in enumerate(grid.times):
            wdens = np.asarray(weight(t, grid.x), dtype=float)
            pair = np.einsum("xi,xi->x", w_vals[n], s_test.values[n])
            total += np.sum(pair * wdens)
            total_abs += float(np.sum(np.sum(np.abs(w_vals[n]) * np.abs(s_test.values[n]),
                                             axis=-1) * wdens))
        weak = max(weak, abs(total) / max(total_abs, 1e-300))
    return {"adjoint_intertwining_residual": direct,
            "weak_dual_residual": weak}


def verification_report(m, g0, g1, rng=0, n_solutions=3, kmax=3):
    """The JSON-facing summary: intertwining residual, round trip,
    conservation ratio, support leakage."""
    rng_seq = np.random.default_rng(rng)
    worst_resid = 0.0
    worst_round = 0.0
    for _ in range(n_solutions):
        psi0 = random_homogeneous_solution(m.sys0, m.grid, kmax=kmax,
                                           rng=int(rng_seq.integers(0, 2**31)), cfl=m.cfl)
        resid, _ = intertwining_residual(m, psi0)
        worst_resid = max(worst_resid, resid)
        worst_round = max(worst_round, roundtrip_residual(m, psi0))
    psi0 = random_homogeneous_solution(m.sys0, m.grid, kmax=kmax, rng=7, cfl=m.cfl)
    phi0 = random_homogeneous_solution(m.sys0, m.grid, kmax=kmax, rng=8, cfl=m.cfl)
    support = stage_support_report(m, psi0)
    report = {
        "intertwining_residual": worst_resid,
        "roundtrip_residual": worst_round,
        "support_leakage": max(support["corr_plus_early"], support["corr_minus_late"]),
        "support_detail": support,
        "notes": {k: v for k, v in m.notes.items() if k != "sys_chi_condition_H"},
    }
    if m.sys0.n == 2:
        report["conservation_ratio"] = conserve_dirac(m, g0, g1, psi0, phi0)[
            "ratio_source_over_target"]
        report["conservation_mismatch"] = conserve_dirac(m, g0, g1, psi0, psi0)[
            "relative_mismatch"]
    return report


def write_report(path, report):
    def clean(v):
        if isinstance(v, dict):
            return {k: clean(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(x) for x in v]
        if isinstance(v, np.bool_):
            return bool(v)
        if isinstance(v, complex):
            return {"re": v.real, "im": v.imag}
        if isinstance(v, np.integer):
            return int(v)
        if isinstance(v, np.floating):
            return float(v)
        return v
    write_json(path, clean(report))
