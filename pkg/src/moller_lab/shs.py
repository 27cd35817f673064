"""First-order symmetric hyperbolic systems S = A0 d_t + A1 d_x + B.

A system carries its coefficient matrix fields, a Hermitian fiber metric H
(possibly indefinite) with <u,v> = u^dag H v, and enough cone information to
sample the positivity condition: condition (S) asks that H*A0 and H*A1 be
Hermitian, condition (H) that H*(A0 + alpha*A1) be positive definite for
every covector dt + alpha dx inside the forward cone.  The Cauchy solver is
method-of-lines RK4 with spectral d_x; advanced/retarded Green operators and
the intertwining machinery in the neighbouring modules are all built on
`solve_cauchy`.

Systems are immutable after construction; the mutable attributes are only
memoised coefficient tables keyed by grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import Coef, MatrixCoef, as_coef
from .grid import GridField, GridError, SliceData, d_dx_array, time_derivative


class SystemError(ValueError):
    pass


@dataclass(frozen=True)
class FiberMap:
    """Fiber map kappa = scalar(t,x) * U with U a constant invertible matrix.

    Covers the lab's needs: the diagonal metric family transports spinors by
    the identity, and rho-weights/constant unitaries multiply on top.
    """

    scalar: Coef
    matrix: np.ndarray

    @staticmethod
    def identity(n):
        return FiberMap(Coef.constant(1.0), np.eye(n, dtype=complex))

    @staticmethod
    def constant(matrix):
        m = np.asarray(matrix, dtype=complex)
        if abs(np.linalg.det(m)) < 1e-300:
            raise SystemError("fiber map matrix is singular")
        return FiberMap(Coef.constant(1.0), m)

    def scaled(self, coef):
        return FiberMap(self.scalar * as_coef(coef), self.matrix)

    def apply(self, t, x, values):
        s = np.asarray(self.scalar(t, x))
        return s[..., None] * (values @ self.matrix.T)

    def apply_inverse(self, t, x, values):
        s = np.asarray(self.scalar(t, x))
        if np.any(np.abs(s) < 1e-300):
            raise SystemError("fiber map scalar vanishes at a node")
        return (values @ np.linalg.inv(self.matrix).T) / s[..., None]

    def apply_to_field(self, field):
        grid = field.grid
        tt, xx = grid.times[:, None], grid.x[None, :]
        s = np.broadcast_to(np.asarray(self.scalar(tt, xx)), (grid.nt + 1, grid.nx))
        out = s[..., None] * (field.values @ self.matrix.T)
        return GridField(grid, out, field.fiber_kind)

    def apply_inverse_to_field(self, field):
        grid = field.grid
        tt, xx = grid.times[:, None], grid.x[None, :]
        s = np.broadcast_to(np.asarray(self.scalar(tt, xx)), (grid.nt + 1, grid.nx))
        if np.any(np.abs(s) < 1e-300):
            raise SystemError("fiber map scalar vanishes at a node")
        out = (field.values @ np.linalg.inv(self.matrix).T) / s[..., None]
        return GridField(grid, out, field.fiber_kind)


@dataclass
class SHSystem:
    n: int
    A0: MatrixCoef
    A1: MatrixCoef
    B: MatrixCoef
    H: MatrixCoef
    metric: object = None          # Metric1p1 of the underlying spacetime, if any
    speed: Coef = None             # cone speed field; beta/a for metric systems
    fiber_kind: str = "complex"
    label: str = ""
    _plans: dict = field(default_factory=dict, repr=False, compare=False)
    _speed_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.speed is None and self.metric is not None:
            object.__setattr__(self, "speed", self.metric.light_speed())

    # -- cone speeds ---------------------------------------------------------

    def char_speed(self, t, x):
        """Max |eigenvalue| of A0^-1 A1 per node (= light speed for the
        metric-built systems, where it is taken from beta/a exactly)."""
        if self.speed is not None:
            return np.abs(np.asarray(self.speed(t, x), dtype=float))
        a0 = self.A0(t, x)
        a1 = self.A1(t, x)
        eig = np.linalg.eigvals(np.linalg.solve(a0, a1))
        return np.max(np.abs(eig), axis=-1)

    def max_speed(self, grid, nt_sample=17):
        key = grid.key()
        if key not in self._speed_cache:
            ts = np.linspace(grid.t0, grid.t1, nt_sample)
            self._speed_cache[key] = float(max(np.max(self.char_speed(t, grid.x)) for t in ts))
        return self._speed_cache[key]

    # -- coefficient tables on the half-step time grid -----------------------

    def plan(self, grid):
        key = grid.key()
        if key not in self._plans:
            if len(self._plans) >= 2:
                self._plans.pop(next(iter(self._plans)))
            taus = grid.t0 + np.arange(2 * grid.nt + 1) * (grid.dt / 2.0)
            tt, xx = taus[:, None], grid.x[None, :]
            a0inv = np.linalg.inv(self.A0(tt, xx))
            m1 = -np.matmul(a0inv, self.A1(tt, xx))
            m0 = -np.matmul(a0inv, self.B(tt, xx))
            self._plans[key] = (a0inv, m1, m0)
        return self._plans[key]

    def full_tables(self, grid):
        """A0, A1, B evaluated at every full time level (for operator
        application on stored histories); cached per grid."""
        key = ("full",) + grid.key()
        if key not in self._plans:
            if len(self._plans) >= 4:
                self._plans.pop(next(iter(self._plans)))
            tt, xx = grid.times[:, None], grid.x[None, :]
            self._plans[key] = (self.A0(tt, xx), self.A1(tt, xx), self.B(tt, xx))
        return self._plans[key]


def principal_symbol(sys, xi, t, x):
    """sigma(xi) = xi_t A0 + xi_x A1 at the sampled nodes."""
    xi_t, xi_x = xi
    return xi_t * sys.A0(t, x) + xi_x * sys.A1(t, x)


# ---------------------------------------------------------------------------
# symbol condition checks

@dataclass
class CheckReport:
    name: str
    passed: bool
    value: float
    threshold: float
    details: dict

    def as_dict(self):
        return {"name": self.name, "passed": bool(self.passed), "value": float(self.value),
                "threshold": float(self.threshold), **self.details}


def _sample_times(grid, nt_sample):
    return np.linspace(grid.t0, grid.t1, nt_sample)


def check_condition_S(sys, grid, nt_sample=9, tol=1e-10):
    """Hermiticity defect of H*sigma(xi) over xi in {dt, dx}, all nodes."""
    ha0 = sys.H.matmul(sys.A0)
    ha1 = sys.H.matmul(sys.A1)
    defect = 0.0
    for t in _sample_times(grid, nt_sample):
        for mc in (ha0, ha1):
            m = mc(t, grid.x)
            defect = max(defect, float(np.max(np.abs(m - np.conj(np.swapaxes(m, -1, -2))))))
    return CheckReport("condition_S", defect < tol, defect, tol,
                       {"system": sys.label})


def check_condition_H(sys, grid, n_alpha=17, nt_sample=9, edge=1e-3):
    """Smallest eigenvalue of the Hermitian part of H*(A0 + alpha*A1) with
    alpha sweeping the open forward covector cone (|alpha| < 1/speed), the
    cone boundary excluded by the relative margin `edge`."""
    min_eig = np.inf
    worst = None
    us = np.linspace(-1.0, 1.0, n_alpha)
    ha0_mc = sys.H.matmul(sys.A0)
    ha1_mc = sys.H.matmul(sys.A1)
    for t in _sample_times(grid, nt_sample):
        ha0 = ha0_mc(t, grid.x)
        ha1 = ha1_mc(t, grid.x)
        alpha_max = (1.0 - edge) / sys.char_speed(t, grid.x)
        for u in us:
            m = ha0 + (u * alpha_max)[:, None, None] * ha1
            m = 0.5 * (m + np.conj(np.swapaxes(m, -1, -2)))
            eig = np.linalg.eigvalsh(m)
            low = float(np.min(eig))
            if low < min_eig:
                min_eig = low
                worst = {"t": float(t), "alpha_scale": float(u)}
    return CheckReport("condition_H", min_eig > 0.0, min_eig, 0.0,
                       {"system": sys.label, "worst": worst,
                        "n_alpha": n_alpha, "edge": edge})


# ---------------------------------------------------------------------------
# Cauchy solver: d_t Psi = A0^-1 (f - A1 d_x Psi - B Psi), RK4 in t

def _lagrange_weights(nodes, s):
    nodes = [float(v) for v in nodes]
    w = np.empty(len(nodes))
    for j, nj in enumerate(nodes):
        prod = 1.0
        for m, nm in enumerate(nodes):
            if m != j:
                prod *= (s - nm) / (nj - nm)
        w[j] = prod
    return w


def _source_table(source, grid, n):
    """Source values on the half-step grid.  Callables evaluate exactly;
    stored histories are interpolated to midpoints with a quintic (O(dt^6),
    comfortably below the RK4 truncation order)."""
    if source is None:
        return None
    taus = grid.t0 + np.arange(2 * grid.nt + 1) * (grid.dt / 2.0)
    if callable(source):
        tab = np.empty((len(taus), grid.nx, n), dtype=complex)
        for j, tau in enumerate(taus):
            tab[j] = source(tau, grid.x)
        return tab
    f = source.values
    if f.shape[2] != n:
        raise SystemError(f"source has {f.shape[2]} components, system has {n}")
    nt = grid.nt
    tab = np.empty((2 * nt + 1, grid.nx, n), dtype=complex)
    tab[0::2] = f
    if nt >= 5:
        w = _lagrange_weights(range(6), 2.5)
        mid = sum(wj * f[j:nt - 4 + j] for j, wj in enumerate(w))
        tab[5:2 * nt - 4:2] = mid
        for i, s in ((0, 0.5), (1, 1.5)):
            w = _lagrange_weights(range(6), s)
            tab[2 * i + 1] = np.tensordot(w, f[:6], axes=(0, 0))
            w = _lagrange_weights(range(6), 5.0 - s)
            tab[2 * (nt - 1 - i) + 1] = np.tensordot(w, f[nt - 5:nt + 1], axes=(0, 0))
    else:
        for j in range(1, 2 * nt, 2):
            tab[j] = 0.5 * (tab[j - 1] + tab[j + 1])
    return tab


def solve_cauchy(sys, grid, source=None, data=None, direction="forward",
                 cfl=0.4, check_cfl=True, scheme="spectral"):
    """Solve S Psi = f with Psi given on the first (forward) or last
    (backward) time level; returns the full history as a GridField.  The
    spatial derivative is spectral by default; scheme="fd4" switches to
    4th-order central differences (cross-check mode)."""
    if direction not in ("forward", "backward"):
        raise SystemError(f"direction must be forward|backward, got {direction!r}")
    if check_cfl:
        grid.check_cfl(sys.max_speed(grid), cfl)
    a0inv, m1, m0 = sys.plan(grid)
    ftab = _source_table(source, grid, sys.n)
    nx, n = grid.nx, sys.n
    if data is None:
        y = np.zeros((nx, n), dtype=complex)
    else:
        y = np.array(data.values if isinstance(data, SliceData) else data, dtype=complex)
        if y.shape != (nx, n):
            raise SystemError(f"Cauchy data shape {y.shape}, expected {(nx, n)}")
    k_modes = 1j * grid.wavenumbers[:, None]
    spectral = scheme == "spectral"

    def rhs(j, state):
        if spectral:
            dxs = np.fft.ifft(np.fft.fft(state, axis=0) * k_modes, axis=0)
        else:
            dxs = d_dx_array(state, nx, scheme)
        out = np.matmul(m1[j], dxs[..., None])[..., 0] + np.matmul(m0[j], state[..., None])[..., 0]
        if ftab is not None:
            out += np.matmul(a0inv[j], ftab[j][..., None])[..., 0]
        return out

    values = np.empty((grid.nt + 1, nx, n), dtype=complex)
    dt = grid.dt if direction == "forward" else -grid.dt
    levels = range(grid.nt) if direction == "forward" else range(grid.nt, 0, -1)
    start = 0 if direction == "forward" else grid.nt
    values[start] = y
    for step, lev in enumerate(levels):
        j0 = 2 * lev
        jm = j0 + (1 if direction == "forward" else -1)
        j1 = j0 + (2 if direction == "forward" else -2)
        k1 = rhs(j0, y)
        k2 = rhs(jm, y + 0.5 * dt * k1)
        k3 = rhs(jm, y + 0.5 * dt * k2)
        k4 = rhs(j1, y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        target = lev + 1 if direction == "forward" else lev - 1
        if (step & 63) == 0 and not np.all(np.isfinite(y)):
            raise GridError(f"solution blew up near time level {target}; reduce dt")
        values[target] = y
    if not np.all(np.isfinite(values)):
        raise GridError("solution blew up (non-finite values in history); reduce dt")
    return GridField(grid, values, sys.fiber_kind)


# ---------------------------------------------------------------------------
# operator application on stored histories

def apply_system(sys, psi, source=None, stencil=8, return_terms=False):
    """S Psi evaluated honestly on a stored history: high-order FD in t,
    spectral in x.  Independent of the path that produced Psi, so it is the
    residual oracle for every solver identity."""
    grid = psi.grid
    dtv = time_derivative(psi.values, grid.dt, order=1, stencil=stencil)
    dxv = d_dx_array(psi.values, grid.nx)
    a0, a1, b = sys.full_tables(grid)
    t0m = np.matmul(a0, dtv[..., None])[..., 0]
    t1m = np.matmul(a1, dxv[..., None])[..., 0]
    out = t0m + t1m + np.matmul(b, psi.values[..., None])[..., 0]
    term_scale = max(float(np.max(np.abs(t0m))), float(np.max(np.abs(t1m)))) \
        if return_terms else 0.0
    if source is not None:
        out = out - source.values
    result = GridField(grid, out, psi.fiber_kind)
    return (result, term_scale) if return_terms else result


def dt_via_evolution(sys, psi, source=None):
    """d_t Psi from the evolution identity A0 d_t Psi = f - A1 d_x Psi - B Psi,
    exact at the grid levels when Psi solves `sys` with source f."""
    grid = psi.grid
    a0inv, m1, m0 = sys.plan(grid)
    even = slice(0, 2 * grid.nt + 1, 2)
    dxv = d_dx_array(psi.values, grid.nx)
    out = (np.matmul(m1[even], dxv[..., None])[..., 0]
           + np.matmul(m0[even], psi.values[..., None])[..., 0])
    if source is not None:
        out += np.matmul(a0inv[even], source.values[..., None])[..., 0]
    return out


def difference_apply(sys_a, sys_b, psi, psi_system, source=None):
    """(S_a - S_b) Psi for a history solving `psi_system` (with the given
    source), using the evolution identity for the time derivative."""
    grid = psi.grid
    dtv = dt_via_evolution(psi_system, psi, source)
    dxv = d_dx_array(psi.values, grid.nx)
    a0a, a1a, ba = sys_a.full_tables(grid)
    a0b, a1b, bb = sys_b.full_tables(grid)
    out = (np.matmul(a0a - a0b, dtv[..., None])[..., 0]
           + np.matmul(a1a - a1b, dxv[..., None])[..., 0]
           + np.matmul(ba - bb, psi.values[..., None])[..., 0])
    return GridField(grid, out, psi.fiber_kind)


# ---------------------------------------------------------------------------
# system algebra

def conjugate_system(sys, kappa, rho=None, label=None):
    """kappa^rho S kappa^{rho,-1} with kappa^rho = rho * kappa.

    The scalar weight s = rho * kappa.scalar drops out of the principal part
    and shifts the zeroth-order term by -(d_mu s / s) A_mu; the constant
    matrix part conjugates every coefficient.
    """
    u = kappa.matrix
    u_inv = np.linalg.inv(u)
    s = kappa.scalar if rho is None else kappa.scalar * rho.coef
    a0p = sys.A0.conjugated(u, u_inv)
    a1p = sys.A1.conjugated(u, u_inv)
    bp = sys.B.conjugated(u, u_inv) \
        + a0p.scaled(-(s.dt() / s)) \
        + a1p.scaled(-(s.dx() / s))
    h_push = sys.H.conjugated(np.linalg.inv(u.conj().T), u_inv)
    return SHSystem(sys.n, a0p, a1p, bp, h_push,
                    metric=sys.metric, speed=sys.speed, fiber_kind=sys.fiber_kind,
                    label=label or f"conj({sys.label})")


def interpolate_systems(sys01, sys1, chi, label=None):
    """Coefficientwise (1-chi) sys01 + chi sys1; chi is a function of t only,
    so no derivative terms appear.  The returned system's positivity cone is
    the one cut out by its own interpolated coefficients (its characteristic
    speeds), which sits between the two input cones."""
    if sys01.n != sys1.n:
        raise SystemError("cannot interpolate systems with different fiber dimensions")
    c = chi.coef
    one_minus = Coef.constant(1.0) - c
    mix = lambda m01, m1: m01.scaled(one_minus) + m1.scaled(c)
    return SHSystem(sys1.n, mix(sys01.A0, sys1.A0), mix(sys01.A1, sys1.A1),
                    mix(sys01.B, sys1.B), sys1.H,
                    metric=None, speed=None, fiber_kind=sys1.fiber_kind,
                    label=label or f"chi[{sys01.label},{sys1.label}]")


def adjoint_system(sys, weight=None, label=None):
    """Formal adjoint S† w.r.t. the pairing  integral <Psi, S Phi> w dt dx,
    with w the spacetime volume density of the system's metric:

        S† = -A0 d_t - A1 d_x + H^-1 [ B† H - (1/w)(d_t(w H A0) + d_x(w H A1)) ].

    The divergence correction is assembled from the exact coefficient
    derivative fields; `adjoint_defect` validates it by quadrature.
    """
    if weight is None:
        if sys.metric is None:
            raise SystemError("adjoint needs a volume weight (system has no metric)")
        weight = sys.metric.volume_weight()
    h_inv = sys.H.inverse()
    wha0 = sys.H.matmul(sys.A0).scaled(weight)
    wha1 = sys.H.matmul(sys.A1).scaled(weight)
    div = (wha0.dt() + wha1.dx()).scaled(1.0 / weight)
    b_adj = h_inv.matmul(sys.B.hermitian_conj().matmul(sys.H) - div)
    return SHSystem(sys.n, sys.A0.scaled(-1.0), sys.A1.scaled(-1.0), b_adj, sys.H,
                    metric=sys.metric, speed=sys.speed, fiber_kind=sys.fiber_kind,
                    label=label or f"adjoint({sys.label})")


def negated_system(sys, label=None):
    return SHSystem(sys.n, sys.A0.scaled(-1.0), sys.A1.scaled(-1.0), sys.B.scaled(-1.0),
                    sys.H, metric=sys.metric, speed=sys.speed, fiber_kind=sys.fiber_kind,
                    label=label or f"-({sys.label})")


def pairing_integral(sys, psi, phi, weight=None):
    """integral <psi, phi> w dt dx over the grid window (plain product rule;
    intended for compactly supported integrands)."""
    grid = psi.grid
    if weight is None:
        weight = sys.metric.volume_weight()
    total = 0.0 + 0.0j
    for nlev, t in enumerate(grid.times):
        h = sys.H(t, grid.x)
        w = np.asarray(weight(t, grid.x), dtype=float)
        pair = np.einsum("xi,xij,xj->x", np.conj(psi.values[nlev]), h, phi.values[nlev])
        total += np.sum(pair * w)
    return total * grid.dx * grid.dt


def _check_interior_support(field, margin_levels=4, tol=1e-10):
    peak = field.norm_inf()
    if peak == 0.0:
        return
    lo = float(np.max(np.abs(field.values[:margin_levels])))
    hi = float(np.max(np.abs(field.values[-margin_levels:])))
    if max(lo, hi) > tol * peak:
        raise SystemError("field support touches the grid time boundary")


def adjoint_defect(sys, psi, phi, weight=None):
    """| <Psi, S Phi> - <S† Psi, Phi> | over compactly supported histories."""
    _check_interior_support(psi)
    _check_interior_support(phi)
    s_phi = apply_system(sys, phi)
    sdag_psi = apply_system(adjoint_system(sys, weight), psi)
    lhs = pairing_integral(sys, psi, s_phi, weight)
    rhs = pairing_integral(sys, sdag_psi, phi, weight)
    return abs(lhs - rhs)


# ---------------------------------------------------------------------------
# misc helpers used across modules

def random_smooth_data(grid, ncomp, kmax=3, rng=None, kind="complex"):
    """Seeded random band-limited Cauchy data, sup-norm normalised to ~1."""
    rng = np.random.default_rng(rng)
    x = grid.x
    out = np.zeros((grid.nx, ncomp), dtype=complex)
    for c in range(ncomp):
        for k in range(-kmax, kmax + 1):
            amp = rng.normal() + 1j * rng.normal()
            out[:, c] += amp * np.exp(1j * k * x)
    if kind == "real":
        out = out.real.astype(complex)
    peak = np.max(np.abs(out))
    return out / peak if peak > 0 else out
