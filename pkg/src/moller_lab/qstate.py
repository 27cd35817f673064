"""Quasifree two-point kernels on Cauchy-data/mode representation, the
ultrastatic ground state, pullback along the wave intertwining map, and the
mode-decay smoothness proxy.

A kernel stores the Hermitian matrix W of the sesquilinear two-point form on
complexified Cauchy data at a reference slice,

    omega2(xi, xi') = xi^dag W xi',      xi = (u_k, p_k)_{k=-K..K},

with u = sum_k u_k e^{ikx} and p = d_n u on the slice.  The massive
ultrastatic ground state is block diagonal,

    W_k = 2 pi [[w_k/2, i/2], [-i/2, 1/(2 w_k)]],   w_k = sqrt(k^2 + m^2),

each block (1/2) v v^dag up to the 2 pi measure factor, hence positive
semidefinite of rank one.  Its imaginary part is pi J per mode with
J = [[0, 1], [-1, 0]]: the canonical commutation pairing at two-point level.
Pullback along a solution map is the Hermitian congruence W0 = C^dag W1 C
with C the data matrix of the map on the mode basis, which preserves
positivity exactly and preserves the commutator part exactly when the map is
symplectic.

The smoothness proxy compares kernels per mode in field-amplitude units: the
data blocks are rotated to covariance form (phi-phi entry = the p-p entry of
W_k) and momenta are scaled by 1/max(|k|,1), so a ground-state kernel has a
k^-1 tail in every entry and the difference of two ground states with
different masses decays like k^-3.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import Coef
from .grid import write_json

J_BLOCK = np.array([[0.0, 1.0], [-1.0, 0.0]], dtype=complex)
_COV_ROT = np.array([[0.0, -1.0], [1.0, 0.0]], dtype=complex)  # data -> covariance rotation


class StateError(ValueError):
    pass


@dataclass
class TwoPointKernel:
    """Hermitian two-point matrix on mode data (u_k, p_k), k = -K..K."""

    kmax: int
    matrix: np.ndarray  # (2(2K+1), 2(2K+1)) complex
    t_ref: float = 0.0
    metric_label: str = ""
    mass: float = None

    def __post_init__(self):
        n = 2 * (2 * self.kmax + 1)
        self.matrix = np.asarray(self.matrix, dtype=complex)
        if self.matrix.shape != (n, n):
            raise StateError(f"kernel matrix shape {self.matrix.shape}, expected {(n, n)}")

    @property
    def modes(self):
        return np.arange(-self.kmax, self.kmax + 1)

    def block(self, k):
        i = 2 * (k + self.kmax)
        return self.matrix[i:i + 2, i:i + 2]

    def blocks(self):
        return np.stack([self.block(k) for k in self.modes])

    def form(self, xi, xi_prime):
        """omega2(xi, xi') with the first slot conjugated."""
        return complex(np.conj(xi) @ self.matrix @ xi_prime)

    def positivity_min_eigenvalue(self):
        herm = 0.5 * (self.matrix + self.matrix.conj().T)
        return float(np.min(np.linalg.eigvalsh(herm)))

    def commutator_defect(self):
        """Max deviation of Im(W) from the canonical pi*J per-mode pairing,
        relative to pi."""
        im = (self.matrix - np.conj(self.matrix)) / 2.0j
        target = np.kron(np.eye(2 * self.kmax + 1), np.pi * J_BLOCK)
        return float(np.max(np.abs(im - target)) / np.pi)

    def hermiticity_defect(self):
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    def dump(self, path):
        """JSON schema: {K, t_ref, blocks: [[re, im] x 4] x (2K+1)} with the
        diagonal blocks row-major; mode coupling stays internal."""
        payload = {
            "K": int(self.kmax),
            "t_ref": float(self.t_ref),
            "metric": self.metric_label,
            "blocks": [[[float(v.real), float(v.imag)] for v in self.block(int(k)).ravel()]
                       for k in self.modes],
        }
        write_json(path, payload)


def vacuum_block(omega):
    return np.array([[0.5 * omega, 0.5j], [-0.5j, 0.5 / omega]], dtype=complex)


def ultrastatic_ground_state(mass, kmax, t_ref=0.0, label="ultrastatic"):
    """Ground-state kernel of the massive field on the static unit metric.
    The mass must be positive: the k = 0 block degenerates as m -> 0 (no
    ground state for the massless theory on the circle)."""
    if mass <= 0.0:
        raise StateError("ultrastatic ground state needs mass > 0 (zero mode "
                         "obstructs the massless ground state)")
    if kmax < 1:
        raise StateError("need at least one nonzero mode")
    n = 2 * kmax + 1
    mat = np.zeros((2 * n, 2 * n), dtype=complex)
    for i, k in enumerate(range(-kmax, kmax + 1)):
        omega = np.sqrt(k * k + mass * mass)
        mat[2 * i:2 * i + 2, 2 * i:2 * i + 2] = 2.0 * np.pi * vacuum_block(omega)
    return TwoPointKernel(kmax, mat, t_ref=t_ref, metric_label=label, mass=mass)


# ---------------------------------------------------------------------------
# quasifree n-point extension

def _ordered_pairings(indices):
    if not indices:
        yield []
        return
    first, rest = indices[0], indices[1:]
    for j, second in enumerate(rest):
        remaining = rest[:j] + rest[j + 1:]
        for tail in _ordered_pairings(remaining):
            yield [(first, second)] + tail


def quasifree_n_point(kernel, data_vectors):
    """n-point value: 0 for odd n, else the sum over ordered pairings of
    products of two-point values (bosonic convention: no signs).  Guarded at
    n <= 6; beyond that the pairing count is no longer a desk-scale check."""
    n = len(data_vectors)
    if n % 2 == 1:
        return 0.0 + 0.0j
    if n == 0:
        return 1.0 + 0.0j
    if n > 6:
        raise StateError(f"n-point guard: n = {n} > 6")
    total = 0.0 + 0.0j
    for pairing in _ordered_pairings(list(range(n))):
        prod = 1.0 + 0.0j
        for i, j in pairing:
            prod *= kernel.form(data_vectors[i], data_vectors[j])
        total += prod
    return total


# ---------------------------------------------------------------------------
# data extraction and mode bases

def slice_data_modes(metric, jet, level, kmax):
    """(u_k, p_k) of a jet history at one time level; p = d_n u = d_t u/beta."""
    grid = jet.grid
    if 2 * kmax >= grid.nx:
        raise StateError(f"K={kmax} not resolved by Nx={grid.nx}")
    t = grid.times[level]
    beta = np.asarray(metric.beta(t, grid.x), dtype=float)
    u_hat = np.fft.fft(jet.values[level, :, 2]) / grid.nx
    p_hat = np.fft.fft(jet.values[level, :, 0] / beta) / grid.nx
    out = np.empty(2 * (2 * kmax + 1), dtype=complex)
    for i, k in enumerate(range(-kmax, kmax + 1)):
        out[2 * i] = u_hat[k % grid.nx]
        out[2 * i + 1] = p_hat[k % grid.nx]
    return out


def pullback_state(kernel, moller_map, g0, g1, kmax=None, level_ref=0,
                   level_eval=None):
    """omega0(xi, xi') := omega1(R xi, R xi') through the wave-level map:
    every mode-basis data vector on the g0 side at the reference slice is
    propagated by R and read off at the evaluation slice on the g1 side;
    the kernel transforms by the Hermitian congruence of the data matrix."""
    from .wave import solve_wave

    kmax = kernel.kmax if kmax is None else kmax
    grid = moller_map.grid
    if 2 * kmax >= grid.nx:
        raise StateError(f"K={kmax} not resolved by Nx={grid.nx}")
    if level_eval is None:
        level_eval = grid.nt
    nbasis = 2 * (2 * kmax + 1)
    cmat = np.empty((nbasis, nbasis), dtype=complex)
    t_ref = grid.times[level_ref]
    beta0 = np.asarray(g0.beta(t_ref, grid.x), dtype=float)
    for i, k in enumerate(range(-kmax, kmax + 1)):
        wave_mode = np.exp(1j * k * grid.x)
        for comp in (0, 1):
            h = wave_mode if comp == 0 else np.zeros(grid.nx, dtype=complex)
            hp = beta0 * wave_mode if comp == 1 else np.zeros(grid.nx, dtype=complex)
            u = solve_wave(moller_map.p0, grid, h=h, hp=hp, system=moller_map.s0)
            r_u, _ = moller_map.apply(u)
            cmat[:, 2 * i + comp] = slice_data_modes(g1, r_u, level_eval, kmax)
    w0 = cmat.conj().T @ kernel.matrix @ cmat
    return TwoPointKernel(kmax, w0, t_ref=t_ref, metric_label=g0.label), cmat


# ---------------------------------------------------------------------------
# smoothness proxy

def _normalized_blocks(kernel):
    """Per-mode blocks rotated to covariance form and measured in field
    units (momentum components scaled by 1/max(|k|,1))."""
    out = []
    for k in kernel.modes:
        m = kernel.block(int(k)) / (2.0 * np.pi)
        cov = _COV_ROT @ m @ _COV_ROT.T
        scale = np.diag([1.0, 1.0 / max(abs(int(k)), 1)])
        out.append(scale @ cov @ scale)
    return np.stack(out)


def _normalized_coupling_row(kernel, k):
    """Off-diagonal (mode-coupling) part of the k-th block row, normalized
    the same way; zero for block-diagonal kernels."""
    kk = int(k) + kernel.kmax
    row = kernel.matrix[2 * kk:2 * kk + 2].copy() / (2.0 * np.pi)
    row[:, 2 * kk:2 * kk + 2] = 0.0
    row[1, :] /= max(abs(int(k)), 1)
    for j, kp in enumerate(kernel.modes):
        row[:, 2 * j + 1] /= max(abs(int(kp)), 1)
    return row


@dataclass
class DecayReport:
    d_k: np.ndarray
    modes: np.ndarray
    fit_slope: float
    sup_k2: float
    sup_k4: float
    passed: bool
    threshold: float
    fit_range: tuple

    def as_dict(self):
        return {"fit_slope": self.fit_slope, "sup_d_k2": self.sup_k2,
                "sup_d_k4": self.sup_k4, "passed": bool(self.passed),
                "slope_threshold": self.threshold,
                "fit_range": list(self.fit_range),
                "proxy_note": ("mode-decay proxy for the smoothness of the "
                               "kernel difference; not a wavefront-set "
                               "computation")}

    def write_csv(self, path):
        import csv
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "d_k"])
            for k, d in zip(self.modes, self.d_k):
                w.writerow([int(k), f"{d:.17g}"])


def smoothness_proxy(kernel_a, kernel_b, slope_threshold=-2.0, kmin=4,
                     floor=1e-11):
    """Decay report of the per-mode difference of two kernels.

    d_k is the Frobenius norm of the difference of the normalized blocks
    (plus any mode-coupling row content), symmetrized over +-k.  The fit of
    log d_k against log k runs over k >= kmin where d_k sits above the
    numerical floor; pass iff the fitted slope does not exceed
    `slope_threshold` (the difference decays at least one power faster than
    the kernels' own k^-1 tails).
    """
    if kernel_a.kmax != kernel_b.kmax:
        raise StateError("kernels have different mode cutoffs")
    kmax = kernel_a.kmax
    if kmax < 16:
        raise StateError(f"K = {kmax} < 16: decay fit unreliable")
    na, nb = _normalized_blocks(kernel_a), _normalized_blocks(kernel_b)
    diff = na - nb
    ks = np.arange(1, kmax + 1)
    d_k = np.empty(kmax)
    for k in ks:
        block_part = max(np.linalg.norm(diff[k + kmax]), np.linalg.norm(diff[kmax - k]))
        coup = max(np.linalg.norm(_normalized_coupling_row(kernel_a, k)
                                  - _normalized_coupling_row(kernel_b, k)),
                   np.linalg.norm(_normalized_coupling_row(kernel_a, -k)
                                  - _normalized_coupling_row(kernel_b, -k)))
        d_k[k - 1] = max(block_part, coup)
    usable = (ks >= kmin) & (d_k > floor)
    if np.count_nonzero(usable) >= 4:
        logk = np.log(ks[usable].astype(float))
        logd = np.log(d_k[usable])
        slope = float(np.polyfit(logk, logd, 1)[0])
    elif np.all(d_k <= floor):
        slope = -np.inf
    else:
        slope = 0.0
    sup2 = float(np.max(d_k * ks**2))
    sup4 = float(np.max(d_k * ks**4))
    passed = slope <= slope_threshold
    fit_lo = int(ks[usable][0]) if np.any(usable) else 0
    fit_hi = int(ks[usable][-1]) if np.any(usable) else 0
    return DecayReport(d_k, ks, slope, sup2, sup4, passed, slope_threshold,
                       (fit_lo, fit_hi))


# ---------------------------------------------------------------------------
# per-mode fast path for x-independent metric pairs

@dataclass
class ModeMoller:
    """The wave intertwining map on a metric pair that depends on t only:
    every Fourier mode evolves independently, so the map reduces per mode to
    second-order ODEs integrated on a fine time lattice (the grid solver's
    CFL-tied step cannot resolve the high modes at kernel tolerances).  The
    stages mirror the Green-operator composition verbatim; as in the grid
    solver, coefficients live on the half-step lattice and stored difference
    sources are interpolated to midpoints with a quintic.
    """

    g0: object
    g1: object
    chi: object
    rho: object
    potential0: float
    potential1: float
    kmax: int
    t0: float
    t1: float
    steps: int

    def __post_init__(self):
        self.dt = (self.t1 - self.t0) / self.steps
        self.tau_half = self.t0 + np.arange(2 * self.steps + 1) * (self.dt / 2.0)
        # coefficients are x-independent: evaluate vectorized over the lattice
        cf = lambda c: (np.asarray(c(self.tau_half, 0.0), dtype=float)
                        * np.ones_like(self.tau_half))
        r = self.rho.coef
        ri = Coef.constant(1.0) / r
        beta0, a0 = self.g0.beta, self.g0.a
        beta1, a1 = self.g1.beta, self.g1.a
        b0_of = lambda beta, a: ((a.squared().dt() / a.squared()
                                  - beta.squared().dt() / beta.squared())
                                 / (2.0 * beta.squared()))
        npts = 2 * self.steps + 1
        # per-mode operator: c_t y'' + d_t y' + (k^2 w2 + e) y
        self.ct0, self.dt0 = cf(1.0 / beta0.squared()), cf(b0_of(beta0, a0))
        self.w20, self.e0 = cf(1.0 / a0.squared()), np.full(npts, self.potential0)
        self.ct1, self.dt1 = cf(1.0 / beta1.squared()), cf(b0_of(beta1, a1))
        self.w21, self.e1 = cf(1.0 / a1.squared()), np.full(npts, self.potential1)
        # P' = rho P0 rho^-1: principal part unchanged, lower order shifted
        ct0c = 1.0 / beta0.squared()
        self.dtp = self.dt0 + 2.0 * cf(ct0c * r * ri.dt())
        self.ep = self.e0 + cf(r * (ct0c * ri.dt().dt() + b0_of(beta0, a0) * ri.dt()))
        self.w2p = self.w20
        chis = self.chi(self.tau_half)
        self.chis = chis
        self.ctx = (1.0 - chis) * self.ct0 + chis * self.ct1
        self.dtx = (1.0 - chis) * self.dtp + chis * self.dt1
        self.w2x = (1.0 - chis) * self.w2p + chis * self.w21
        self.ex = (1.0 - chis) * self.ep + chis * self.e1
        self.rhos = cf(r)
        self.rhods = cf(r.dt())
        self.ks = np.arange(-self.kmax, self.kmax + 1)

    def _ode_coeffs(self, which):
        return {"0": (self.ct0, self.dt0, self.w20, self.e0),
                "1": (self.ct1, self.dt1, self.w21, self.e1),
                "p": (self.ct0, self.dtp, self.w2p, self.ep),
                "x": (self.ctx, self.dtx, self.w2x, self.ex)}[which]

    def _rhs(self, which, j, y, src=None):
        """State y has shape (nk, cols, 2); j indexes the half lattice."""
        ct, dt_c, w2, e = self._ode_coeffs(which)
        u, v = y[..., 0], y[..., 1]
        k2 = (self.ks ** 2)[:, None]
        acc = -(dt_c[j] * v + (k2 * w2[j] + e[j]) * u) / ct[j]
        if src is not None:
            acc = acc + src / ct[j]
        out = np.empty_like(y)
        out[..., 0] = v
        out[..., 1] = acc
        return out

    def _interp_half(self, table):
        """Quintic interpolation of a full-lattice table (steps+1, ...) onto
        the half lattice (2*steps+1, ...)."""
        from .shs import _lagrange_weights
        n = self.steps
        out = np.empty((2 * n + 1,) + table.shape[1:], dtype=table.dtype)
        out[0::2] = table
        if n >= 5:
            w = _lagrange_weights(range(6), 2.5)
            out[5:2 * n - 4:2] = sum(wj * table[j:n - 4 + j] for j, wj in enumerate(w))
            for i, s in ((0, 0.5), (1, 1.5)):
                w = _lagrange_weights(range(6), s)
                out[2 * i + 1] = np.tensordot(w, table[:6], axes=(0, 0))
                w = _lagrange_weights(range(6), 5.0 - s)
                out[2 * (n - 1 - i) + 1] = np.tensordot(w, table[n - 5:n + 1], axes=(0, 0))
        else:
            out[1::2] = 0.5 * (table[:-1] + table[1:])
        return out

    def _integrate(self, which, y0, forward=True, source_half=None):
        """RK4 over the full lattice; source_half indexed on the half lattice.
        Returns the full-lattice history (steps+1, nk, cols, 2)."""
        n = self.steps
        hist = np.empty((n + 1,) + y0.shape, dtype=y0.dtype)
        h = self.dt if forward else -self.dt
        levels = range(n) if forward else range(n, 0, -1)
        hist[0 if forward else n] = y0
        y = y0
        for lev in levels:
            j0 = 2 * lev
            jm = j0 + (1 if forward else -1)
            j1 = j0 + (2 if forward else -2)
            s0 = None if source_half is None else source_half[j0]
            sm = None if source_half is None else source_half[jm]
            s1 = None if source_half is None else source_half[j1]
            k1 = self._rhs(which, j0, y, s0)
            k2 = self._rhs(which, jm, y + 0.5 * h * k1, sm)
            k3 = self._rhs(which, jm, y + 0.5 * h * k2, sm)
            k4 = self._rhs(which, j1, y + h * k3, s1)
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            hist[lev + 1 if forward else lev - 1] = y
        return hist

    def _difference_source(self, hist, which_solves, weight_half):
        """weight(t) * (L1 - L') applied to a full-lattice history solving
        `which_solves` homogeneously (second derivative via that operator's
        evolution identity); returned on the half lattice."""
        even = slice(0, 2 * self.steps + 1, 2)
        ct, dt_c, w2, e = (arr[even] for arr in self._ode_coeffs(which_solves))
        u, v = hist[..., 0], hist[..., 1]
        k2 = (self.ks ** 2)[None, :, None]
        acc = -(dt_c[:, None, None] * v
                + (k2 * w2[:, None, None] + e[:, None, None]) * u) / ct[:, None, None]
        d_ct = (self.ct1 - self.ct0)[even][:, None, None]
        d_dt = (self.dt1 - self.dtp)[even][:, None, None]
        d_w2 = (self.w21 - self.w2p)[even][:, None, None]
        d_e = (self.e1 - self.ep)[even][:, None, None]
        diff = d_ct * acc + d_dt * v + (k2 * d_w2 + d_e) * u
        half = self._interp_half(diff)
        return weight_half[:, None, None] * half

    def apply_basis(self):
        """Propagate the per-mode fundamental data matrices through
        R = R_minus . R_plus . rho; returns C (nk, 2, 2) mapping data
        (u, p) at t0 to data (u, p) at t1."""
        nk = len(self.ks)
        y0 = np.zeros((nk, 2, 2))
        beta0_ref = float(np.asarray(self.g0.beta(self.t0, np.zeros(1))).ravel()[0])
        y0[:, 0, 0] = 1.0           # column 0: (u, p) = (1, 0)
        y0[:, 1, 1] = beta0_ref     # column 1: (u, p) = (0, 1), so du/dt = beta0
        u0 = self._integrate("0", y0, forward=True)
        w = np.empty_like(u0)
        w[..., 0] = self.rhos[0::2][:, None, None] * u0[..., 0]
        w[..., 1] = (self.rhos[0::2][:, None, None] * u0[..., 1]
                     + self.rhods[0::2][:, None, None] * u0[..., 0])
        src_plus = self._difference_source(w, "p", self.chis)
        corr = self._integrate("x", np.zeros_like(y0), forward=True,
                               source_half=src_plus)
        phi = w - corr
        src_minus = self._difference_source(phi, "x", 1.0 - self.chis)
        corr2 = self._integrate("1", np.zeros_like(y0), forward=False,
                                source_half=src_minus)
        out = phi - corr2
        beta1_eval = float(np.asarray(self.g1.beta(self.t1, np.zeros(1))).ravel()[0])
        c = np.empty((nk, 2, 2))
        c[:, 0, :] = out[-1, :, :, 0]
        c[:, 1, :] = out[-1, :, :, 1] / beta1_eval
        return c

    def apply_basis_inverse(self):
        """Per-mode data matrices of R^-1 = rho^-1 . R_plus^-1 . R_minus^-1:
        data (u, p) at t1 on the g1 side to data (u, p) at t0 on the g0 side."""
        nk = len(self.ks)
        y1 = np.zeros((nk, 2, 2))
        beta1_eval = float(np.asarray(self.g1.beta(self.t1, np.zeros(1))).ravel()[0])
        y1[:, 0, 0] = 1.0
        y1[:, 1, 1] = beta1_eval
        u1 = self._integrate("1", y1, forward=False)
        src_minus = self._difference_source(u1, "1", 1.0 - self.chis)
        v = u1 + self._integrate("x", np.zeros_like(y1), forward=False,
                                 source_half=src_minus)
        src_plus = self._difference_source(v, "x", self.chis)
        w = v + self._integrate("p", np.zeros_like(y1), forward=True,
                                source_half=src_plus)
        rs, rds = self.rhos[0::2], self.rhods[0::2]
        out = np.empty_like(w)
        out[..., 0] = w[..., 0] / rs[:, None, None]
        out[..., 1] = (w[..., 1] - (rds / rs)[:, None, None] * w[..., 0]) / rs[:, None, None]
        beta0_ref = float(np.asarray(self.g0.beta(self.t0, np.zeros(1))).ravel()[0])
        c = np.empty((nk, 2, 2))
        c[:, 0, :] = out[0, :, :, 0]
        c[:, 1, :] = out[0, :, :, 1] / beta0_ref
        return c

    def pullback(self, kernel):
        if kernel.kmax != self.kmax:
            raise StateError("kernel cutoff does not match the mode map")
        c = self.apply_basis()
        n = 2 * self.kmax + 1
        mat = np.zeros((2 * n, 2 * n), dtype=complex)
        for i in range(n):
            ck = c[i]
            mk = kernel.matrix[2 * i:2 * i + 2, 2 * i:2 * i + 2]
            mat[2 * i:2 * i + 2, 2 * i:2 * i + 2] = ck.conj().T @ mk @ ck
        return TwoPointKernel(self.kmax, mat, t_ref=self.t0,
                              metric_label=self.g0.label)
