"""Normally hyperbolic scalar operators, their first-order reduction, the
symplectic slice form, and the wave-level intertwining map.

A WaveOperator is the scalar second-order operator

    P u = c_t d_t^2 u + c_x d_x^2 u + d_t_coef d_t u + d_x_coef d_x u + e u,

with c_t > 0 > c_x.  Built from a metric g = -beta^2 dt^2 + a^2 dx^2 and a
potential V it is

    P = (1/beta^2) d_t^2 + b0 d_t - (1/a) d_x((1/a) d_x .) + bx d_x + V,
    b0 = (d_t(a^2)/a^2 - d_t(beta^2)/beta^2) / (2 beta^2),
    bx = -d_x(beta^2) / (2 beta^2 a^2),

so that on the ultrastatic metric with V = m^2 a plane wave e^{i(kx - w t)}
maps to (-w^2 + k^2 + m^2) e^{i(kx - w t)}.

The reduction acts on jets Psi = (d_t u, d_x u, u):

    A0 = diag(c_t, 1, 1),  A1 = [[0, c_x, 0], [-1, 0, 0], [0, 0, 0]],
    B  = [[d_t_coef, d_x_coef, e], [0, 0, 0], [-1, 0, 0]],

with fiber metric H = diag(1/c_t, -c_x/c_t, 1), the diagonal choice that
makes both H A0 and H A1 Hermitian and H (A0 + alpha A1) positive definite
exactly for |alpha| < sqrt(-c_t/c_x) (the covector cone of the operator's
own characteristic speeds).  Scalar Green operators are realized through the
reduction: G_P f is the third component of G_S applied to (f, 0, 0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import Coef, MatrixCoef, as_coef
from .green import GreenOp
from .grid import GridField, d_dx_array, time_derivative
from .shs import SHSystem, difference_apply, solve_cauchy

def _unit(i, j):
    m = np.zeros((3, 3), dtype=complex)
    m[i, j] = 1.0
    return m


@dataclass(frozen=True)
class WaveOperator:
    c_t: Coef
    c_x: Coef
    d_t_coef: Coef
    d_x_coef: Coef
    e: Coef
    metric: object = None
    label: str = ""

    @property
    def b0(self):
        """Coefficient of d_t; for metric-built operators this equals
        (d_t(a^2)/a^2 - d_t(beta^2)/beta^2)/(2 beta^2)."""
        return self.d_t_coef

    def speed(self):
        return ((Coef.constant(-1.0) * self.c_x) / self.c_t).sqrt()


def wave_from_metric(metric, potential, label=None):
    beta, a = metric.beta, metric.a
    beta2 = beta.squared()
    a2 = a.squared()
    b0 = (a2.dt() / a2 - beta2.dt() / beta2) / (2.0 * beta2)
    bx = Coef.constant(-1.0) * beta2.dx() / (2.0 * beta2 * a2)
    # -(1/a) d_x((1/a) d_x u) = -(1/a^2) d_x^2 u + (d_x a / a^3) d_x u
    d_x_coef = a.dx() / (a2 * a) + bx
    return WaveOperator(1.0 / beta2, Coef.constant(-1.0) / a2, b0, d_x_coef,
                        as_coef(potential), metric=metric,
                        label=label or f"wave({metric.label})")


def wave_bx(operator):
    """The metric part -d_x(beta^2)/(2 beta^2 a^2) of the d_x coefficient."""
    if operator.metric is None:
        raise ValueError("bx is only defined for metric-built wave operators")
    beta2 = operator.metric.beta.squared()
    a2 = operator.metric.a.squared()
    return Coef.constant(-1.0) * beta2.dx() / (2.0 * beta2 * a2)


def conjugated_wave(op, rho, label=None):
    """rho P (rho^-1 .): principal part unchanged, first/zeroth order shift
    by the exact derivative fields of rho."""
    r = rho.coef
    ri = Coef.constant(1.0) / r
    d_t = op.d_t_coef + 2.0 * op.c_t * r * ri.dt()
    d_x = op.d_x_coef + 2.0 * op.c_x * r * ri.dx()
    e = op.e + r * (op.c_t * ri.dt().dt() + op.c_x * ri.dx().dx()
                    + op.d_t_coef * ri.dt() + op.d_x_coef * ri.dx())
    return WaveOperator(op.c_t, op.c_x, d_t, d_x, e, metric=op.metric,
                        label=label or f"conj({op.label})")


def interpolated_wave(op01, op1, chi, label=None):
    c = chi.coef
    cm = Coef.constant(1.0) - c
    mix = lambda a, b: a * cm + b * c
    return WaveOperator(mix(op01.c_t, op1.c_t), mix(op01.c_x, op1.c_x),
                        mix(op01.d_t_coef, op1.d_t_coef),
                        mix(op01.d_x_coef, op1.d_x_coef),
                        mix(op01.e, op1.e), metric=None,
                        label=label or f"chi[{op01.label},{op1.label}]")


def apply_wave(op, u, stencil=8):
    """P u on a stored scalar history (FD in t, spectral in x); the residual
    oracle for the wave-level identities."""
    grid = u.grid
    vals = u.values[:, :, 0]
    dt1 = time_derivative(vals, grid.dt, order=1, stencil=stencil)
    dt2 = time_derivative(vals, grid.dt, order=2, stencil=stencil)
    dx1 = d_dx_array(vals, grid.nx, axis=1)
    dx2 = d_dx_array(dx1, grid.nx, axis=1)
    tt, xx = grid.times[:, None], grid.x[None, :]
    shape = (grid.nt + 1, grid.nx)
    ev = lambda c: np.broadcast_to(np.asarray(c(tt, xx), dtype=float), shape)
    out = (ev(op.c_t) * dt2 + ev(op.c_x) * dx2 + ev(op.d_t_coef) * dt1
           + ev(op.d_x_coef) * dx1 + ev(op.e) * vals)
    return GridField(grid, out[:, :, None], u.fiber_kind)


def reduce_to_shs(op, label=None):
    a0 = MatrixCoef([(op.c_t, _unit(0, 0)), (1.0, _unit(1, 1) + _unit(2, 2))], 3)
    a1 = MatrixCoef([(op.c_x, _unit(0, 1)), (-1.0, _unit(1, 0))], 3)
    b = MatrixCoef([(op.d_t_coef, _unit(0, 0)), (op.d_x_coef, _unit(0, 1)),
                    (op.e, _unit(0, 2)), (-1.0, _unit(2, 0))], 3)
    minus_cx = Coef.constant(-1.0) * op.c_x
    h = MatrixCoef([(1.0 / op.c_t, _unit(0, 0)), (minus_cx / op.c_t, _unit(1, 1)),
                    (1.0, _unit(2, 2))], 3)
    return SHSystem(3, a0, a1, b, h, metric=op.metric, speed=op.speed(),
                    fiber_kind="complex", label=label or f"reduce({op.label})")


# ---------------------------------------------------------------------------
# jets

def jet_from_data(grid, h, hp):
    """Initial jet slice (d_t u, d_x u, u) = (hp, d_x h, h)."""
    h = np.asarray(h, dtype=complex)
    hp = np.asarray(hp, dtype=complex)
    return np.stack([hp, d_dx_array(h, grid.nx), h], axis=1)


def jet_scale(rho_coef, jet):
    """Jet of rho*u from the jet of u: d(rho u) = rho du + (d rho) u."""
    grid = jet.grid
    tt, xx = grid.times[:, None], grid.x[None, :]
    shape = (grid.nt + 1, grid.nx)
    ev = lambda c: np.broadcast_to(np.asarray(c(tt, xx), dtype=float), shape)
    r, r_t, r_x = ev(rho_coef), ev(rho_coef.dt()), ev(rho_coef.dx())
    u = jet.values[:, :, 2]
    out = np.empty_like(jet.values)
    out[:, :, 0] = r * jet.values[:, :, 0] + r_t * u
    out[:, :, 1] = r * jet.values[:, :, 1] + r_x * u
    out[:, :, 2] = r * u
    return GridField(grid, out, jet.fiber_kind)


def jet_consistency_defect(jet, stencil=8):
    """Max of |jet_1 - d_x jet_2| and |jet_0 - d_t jet_2| over the interior,
    relative to the field scale; measures that the reduced evolution kept the
    state on the jet subbundle (the first-order data do not outgrow u)."""
    grid = jet.grid
    u = jet.values[:, :, 2]
    scale = max(float(np.max(np.abs(jet.values))), 1e-300)
    dx_defect = float(np.max(np.abs(jet.values[:, :, 1] - d_dx_array(u, grid.nx, axis=1))))
    dtu = time_derivative(u, grid.dt, order=1, stencil=stencil)
    interior = slice(stencil // 2, grid.nt + 1 - stencil // 2)
    dt_defect = float(np.max(np.abs(jet.values[interior, :, 0] - dtu[interior])))
    return max(dx_defect, dt_defect) / scale


def _vector_source(grid, f):
    """Lift a scalar source to the reduced system's (f, 0, 0) form."""
    if f is None:
        return None
    if callable(f):
        def vec(t, x):
            out = np.zeros((len(np.atleast_1d(x)), 3), dtype=complex)
            out[:, 0] = f(t, x)
            return out
        return vec
    vals = np.zeros((grid.nt + 1, grid.nx, 3), dtype=complex)
    vals[:, :, 0] = f.values[:, :, 0]
    return GridField(grid, vals, f.fiber_kind)


def solve_wave(op, grid, f=None, h=None, hp=None, direction="forward", cfl=0.4,
               system=None):
    """Solve P u = f with Cauchy data (u, d_t u) = (h, hp) on the starting
    slice; returns the jet history (third component is u)."""
    sys_red = system if system is not None else reduce_to_shs(op)
    nx = grid.nx
    h = np.zeros(nx, dtype=complex) if h is None else np.asarray(h, dtype=complex)
    hp = np.zeros(nx, dtype=complex) if hp is None else np.asarray(hp, dtype=complex)
    data = jet_from_data(grid, h, hp)
    return solve_cauchy(sys_red, grid, source=_vector_source(grid, f), data=data,
                        direction=direction, cfl=cfl)


def scalar_part(jet):
    return GridField(jet.grid, jet.values[:, :, 2:3], jet.fiber_kind)


def green_apply_wave(op, grid, f, sign, cfl=0.4, system=None):
    """Scalar Green operator through the reduction: the jet history of
    G_S (f, 0, 0); component 2 is G_P f."""
    sys_red = system if system is not None else reduce_to_shs(op)
    return GreenOp(sys_red, grid, sign, cfl).apply(_vector_source(grid, f))


# ---------------------------------------------------------------------------
# symplectic slice form

def symplectic_form_levels(metric, u_jet, v_jet):
    """sigma(u, v)(t) = integral (v d_n u - u d_n v) a dx with n = beta^-1 d_t,
    evaluated on every slice from the stored jets."""
    grid = u_jet.grid
    tt, xx = grid.times[:, None], grid.x[None, :]
    shape = (grid.nt + 1, grid.nx)
    beta = np.broadcast_to(np.asarray(metric.beta(tt, xx), dtype=float), shape)
    density = np.broadcast_to(np.asarray(metric.a(tt, xx), dtype=float), shape)
    u, du = u_jet.values[:, :, 2], u_jet.values[:, :, 0] / beta
    v, dv = v_jet.values[:, :, 2], v_jet.values[:, :, 0] / beta
    return np.sum((v * du - u * dv) * density, axis=1) * grid.dx


def symplectic_form(metric, u_jet, v_jet, level=None):
    levels = symplectic_form_levels(metric, u_jet, v_jet)
    if level is None:
        return complex(np.mean(levels))
    return complex(levels[level])


# ---------------------------------------------------------------------------
# wave-level intertwining map

@dataclass
class WaveMollerMap:
    """R = R_minus . R_plus . rho on scalar solutions, assembled verbatim from
    the Green operators of P1 and of P_chi = (1-chi) P' + chi P1 with
    P' = rho P0 rho^-1:

        R_plus  = Id - G_chi^adv  [ chi (P1 - P') . ]
        R_minus = Id - G_1^ret    [ (1-chi)(P1 - P') . ]
        R^-1    = rho^-1 . (Id + G_'^adv chi (P1 - P') .)
                          . (Id + G_chi^ret (1-chi)(P1 - P') .)

    Operands are jet histories of homogeneous solutions; each stage knows
    which operator its input solves, so the second-order applications use
    that operator's evolution identity for the time derivatives.
    """

    p0: WaveOperator
    p1: WaveOperator
    p01: WaveOperator
    p_chi: WaveOperator
    chi: object
    rho: object
    grid: object
    cfl: float = 0.4

    def __post_init__(self):
        self.s0 = reduce_to_shs(self.p0)
        self.s1 = reduce_to_shs(self.p1)
        self.s01 = reduce_to_shs(self.p01)
        self.s_chi = reduce_to_shs(self.p_chi)
        self.g_chi_adv = GreenOp(self.s_chi, self.grid, "advanced", self.cfl)
        self.g_1_ret = GreenOp(self.s1, self.grid, "retarded", self.cfl)
        self.g_chi_ret = GreenOp(self.s_chi, self.grid, "retarded", self.cfl)
        self.g_01_adv = GreenOp(self.s01, self.grid, "advanced", self.cfl)
        self.rho_inv = Coef.constant(1.0) / self.rho.coef

    def _weighted_difference(self, jet, jet_system, weight_of_t):
        """weight(t) * (P1 - P') applied to the scalar part of `jet`, lifted
        back to the reduced (f, 0, 0) source form.  Rows 1 and 2 of the
        reduced difference vanish identically, so this is exact."""
        diff = difference_apply(self.s1, self.s01, jet, jet_system)
        w = weight_of_t(self.grid.times)
        vals = diff.values * w[:, None, None]
        vals[:, :, 1:] = 0.0
        return GridField(self.grid, vals, jet.fiber_kind)

    def apply(self, u0_jet):
        """u0_jet solves P0 homogeneously; returns the jet of R u0 in ker P1."""
        w_jet = jet_scale(self.rho.coef, u0_jet)          # solves P' = rho P0 rho^-1
        src_plus = self._weighted_difference(w_jet, self.s01, self.chi)
        phi = GridField(self.grid, w_jet.values - self.g_chi_adv.apply(src_plus).values)
        src_minus = self._weighted_difference(
            phi, self.s_chi, lambda t: 1.0 - self.chi(t))
        out = GridField(self.grid, phi.values - self.g_1_ret.apply(src_minus).values)
        return out, phi

    def inverse_apply(self, u1_jet):
        """u1_jet solves P1 homogeneously; returns the jet of R^-1 u1 in ker P0."""
        src_minus = self._weighted_difference(
            u1_jet, self.s1, lambda t: 1.0 - self.chi(t))
        v = GridField(self.grid, u1_jet.values + self.g_chi_ret.apply(src_minus).values)
        src_plus = self._weighted_difference(v, self.s_chi, self.chi)
        w = GridField(self.grid, v.values + self.g_01_adv.apply(src_plus).values)
        return jet_scale(self.rho_inv, w)


def wave_moller(p0, p1, chi, rho, grid, cfl=0.4):
    p01 = conjugated_wave(p0, rho, label=f"rho*{p0.label}*rho^-1")
    p_chi = interpolated_wave(p01, p1, chi)
    return WaveMollerMap(p0, p1, p01, p_chi, chi, rho, grid, cfl)
