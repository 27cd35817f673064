"""Uniform space-time grid, spectral/FD derivatives, RK4 stepping, quadrature.

x lives on [0, 2pi) with Nx nodes (periodic, Nx a power of two so the FFT
modes pair up cleanly); t on [t0, t1] with Nt steps.  Fields are stored
densely at every time level because Green-operator compositions consume
full histories.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


class GridError(ValueError):
    pass


class BlowUpError(RuntimeError):
    """Solution left the float range; reports the offending time index."""


@dataclass(frozen=True)
class Grid:
    nx: int
    nt: int
    t0: float
    t1: float

    def __post_init__(self):
        if self.nx < 8 or (self.nx & (self.nx - 1)) != 0:
            raise GridError(f"Nx must be a power of two >= 8, got {self.nx}")
        if self.nt < 1:
            raise GridError(f"Nt must be >= 1, got {self.nt}")
        if not self.t1 > self.t0:
            raise GridError(f"need t1 > t0, got [{self.t0}, {self.t1}]")

    @property
    def dx(self):
        return 2.0 * math.pi / self.nx

    @property
    def dt(self):
        return (self.t1 - self.t0) / self.nt

    @property
    def x(self):
        return np.arange(self.nx) * self.dx

    @property
    def times(self):
        return self.t0 + np.arange(self.nt + 1) * self.dt

    @property
    def wavenumbers(self):
        return np.fft.fftfreq(self.nx, d=1.0 / self.nx)

    def key(self):
        return (self.nx, self.nt, self.t0, self.t1)

    def check_cfl(self, v_max, cfl=0.4):
        bound = cfl * self.dx / max(v_max, 1e-300)
        if self.dt > bound * (1.0 + 1e-12):
            raise GridError(
                f"CFL violated: dt={self.dt:.3e} > {cfl}*dx/v_max={bound:.3e} "
                f"(v_max={v_max:.3f}); increase Nt or lower Nx")
        return True


@dataclass
class SliceData:
    """Field values on one constant-t slice, shape (Nx, N)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=complex))
        if self.values.shape[0] != self.grid.nx:
            # accept (N, Nx) row convention from 1-component helpers
            if self.values.shape[1] == self.grid.nx:
                self.values = self.values.T
            else:
                raise GridError(f"slice shape {self.values.shape} does not match Nx={self.grid.nx}")


@dataclass
class GridField:
    """History of an N-component field: values shape (Nt+1, Nx, N)."""

    grid: Grid
    values: np.ndarray
    fiber_kind: str = "complex"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.ndim == 2:
            self.values = self.values[:, :, None]
        expected = (self.grid.nt + 1, self.grid.nx)
        if self.values.shape[:2] != expected:
            raise GridError(f"field shape {self.values.shape} does not match grid {expected}")
        if self.fiber_kind not in ("real", "complex"):
            raise GridError(f"fiber_kind must be real|complex, got {self.fiber_kind}")

    @property
    def ncomp(self):
        return self.values.shape[2]

    def slice_at(self, level):
        return SliceData(self.grid, self.values[level])

    def component(self, i):
        return self.values[:, :, i]

    def norm_inf(self):
        return float(np.max(np.abs(self.values)))

    def check_real(self, tol=1e-14):
        if self.fiber_kind == "real":
            worst = float(np.max(np.abs(self.values.imag))) if self.values.size else 0.0
            if worst > tol * max(1.0, float(np.max(np.abs(self.values.real)))):
                raise GridError(f"real field has imaginary parts up to {worst:.2e}")
        return True

    def copy(self):
        return GridField(self.grid, self.values.copy(), self.fiber_kind)


def zero_field(grid, ncomp, fiber_kind="complex"):
    return GridField(grid, np.zeros((grid.nt + 1, grid.nx, ncomp), dtype=complex), fiber_kind)


# ---------------------------------------------------------------------------
# spatial derivative

def d_dx_array(values, nx, scheme="spectral", axis=None):
    """d/dx along the (periodic) x axis.  By default x is axis 0 for slices
    and axis 1 for history arrays (levels, Nx, N); pass `axis` to override
    (e.g. axis=1 for a 2-d history of a scalar field)."""
    values = np.asarray(values, dtype=complex)
    if axis is None:
        axis = 1 if values.ndim == 3 else 0
    if values.shape[axis] != nx:
        raise GridError(f"x axis mismatch: {values.shape} vs Nx={nx}")
    if scheme == "spectral":
        k = np.fft.fftfreq(nx, d=1.0 / nx)
        shape = [1] * values.ndim
        shape[axis] = nx
        return np.fft.ifft(np.fft.fft(values, axis=axis) * (1j * k).reshape(shape), axis=axis)
    if scheme == "fd4":
        dx = 2.0 * math.pi / nx
        r = lambda s: np.roll(values, -s, axis=axis)
        return (8.0 * (r(1) - r(-1)) - (r(2) - r(-2))) / (12.0 * dx)
    raise GridError(f"unknown derivative scheme {scheme!r}")


def d_dx(slice_data, scheme="spectral"):
    return SliceData(slice_data.grid, d_dx_array(slice_data.values, slice_data.grid.nx, scheme))


# ---------------------------------------------------------------------------
# time stepping

def rk4_step(rhs, state, t, dt):
    """One classical RK4 step of y' = rhs(t, y) on a plain ndarray state."""
    k1 = rhs(t, state)
    k2 = rhs(t + 0.5 * dt, state + 0.5 * dt * k1)
    k3 = rhs(t + 0.5 * dt, state + 0.5 * dt * k2)
    k4 = rhs(t + dt, state + dt * k3)
    out = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise BlowUpError(f"non-finite state after step at t={t:.6g}; reduce dt")
    return out


# ---------------------------------------------------------------------------
# quadrature

def slice_integral(values, density=None, nx=None):
    """Periodic rectangle-rule integral sum_i w(x_i) density(x_i) dx, which is
    the trapezoid rule on the circle and spectrally accurate for smooth data."""
    w = np.asarray(values)
    n = w.shape[0] if nx is None else nx
    dx = 2.0 * math.pi / n
    if density is not None:
        w = w * np.asarray(density)
    return complex(np.sum(w, axis=0) * dx) if w.ndim == 1 else np.sum(w, axis=0) * dx


# ---------------------------------------------------------------------------
# smooth compactly supported sources

def bump(s):
    """exp(-1/(1-s^2)) on |s| < 1, zero outside; peaks at exp(-1)."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    with np.errstate(divide="ignore", over="ignore"):
        out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


def bump_source(grid, center, radii, component=0, ncomp=1, amplitude=1.0):
    """C^inf bump amplitude * bump((t-tc)/rt) * bump(dist(x,xc)/rx) in one
    fiber component, wrapped periodically in x.  Temporal support must stay
    at least two steps away from both grid edges."""
    tc, xc = center
    rt, rx = radii
    if tc - rt < grid.t0 + 2.0 * grid.dt or tc + rt > grid.t1 - 2.0 * grid.dt:
        raise GridError(
            f"bump support [{tc - rt:.3g}, {tc + rt:.3g}] reaches the grid time "
            f"boundary [{grid.t0}, {grid.t1}] (needs a 2-step margin)")
    x = grid.x
    dxw = (x - xc + math.pi) % (2.0 * math.pi) - math.pi
    profile_x = bump(dxw / rx)
    profile_t = bump((grid.times - tc) / rt)
    values = np.zeros((grid.nt + 1, grid.nx, ncomp), dtype=complex)
    values[:, :, component] = amplitude * np.outer(profile_t, profile_x)
    return GridField(grid, values)


# ---------------------------------------------------------------------------
# finite-difference stencils in t (for residual checks on stored histories)

@lru_cache(maxsize=None)
def fd_weights(offsets, order):
    """Weights w with sum_j w_j f(t + o_j dt) = dt^order f^(order)(t) + h.o.t.
    Solved from the Taylor/Vandermonde system, exact for the stencil size."""
    offs = np.asarray(offsets, dtype=float)
    m = len(offs)
    rhs = np.zeros(m)
    rhs[order] = math.factorial(order)
    van = np.vander(offs, m, increasing=True).T
    return np.linalg.solve(van, rhs)


def time_derivative(values, dt, order=1, stencil=8):
    """High-order FD d^order/dt^order along axis 0 of a stored history.

    Central stencil of width `stencil`+1 inside, one-sided near the edges.
    Used only to *check* residuals of solved fields, never to evolve them.
    """
    values = np.asarray(values)
    nlev = values.shape[0]
    half = stencil // 2
    npts = stencil + 1
    if nlev < npts:
        raise GridError(f"history too short ({nlev} levels) for stencil {npts}")
    out = np.empty_like(values)
    w_c = fd_weights(tuple(range(-half, half + 1)), order)
    inner = slice(half, nlev - half)
    acc = np.zeros_like(values[inner])
    for j, w in zip(range(-half, half + 1), w_c):
        acc += w * values[half + j:nlev - half + j]
    out[inner] = acc
    for i in range(half):
        w = fd_weights(tuple(range(-i, npts - i)), order)
        out[i] = np.tensordot(w, values[0:npts], axes=(0, 0))
        w = fd_weights(tuple(range(-(npts - 1 - i), i + 1)), order)
        out[nlev - 1 - i] = np.tensordot(w, values[nlev - npts:nlev], axes=(0, 0))
    return out / dt ** order


# ---------------------------------------------------------------------------
# exports

def write_slice_csv(path, grid, slice_values, header_prefix="c"):
    """Columns: x, re_<prefix>0, im_<prefix>0, ..."""
    vals = np.atleast_2d(np.asarray(slice_values, dtype=complex))
    if vals.shape[0] != grid.nx:
        vals = vals.T
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        ncomp = vals.shape[1]
        writer.writerow(["x"] + [f"{p}_{header_prefix}{i}" for i in range(ncomp) for p in ("re", "im")])
        for xi, row in zip(grid.x, vals):
            out = [f"{xi:.17g}"]
            for v in row:
                out += [f"{v.real:.17g}", f"{v.imag:.17g}"]
            writer.writerow(out)


def write_json(path, payload):
    """Deterministic JSON: sorted keys, fixed float formatting, no timestamps."""
    with open(path, "w") as fh:
        fh.write(json.dumps(payload, sort_keys=True, indent=2, allow_nan=False))
        fh.write("\n")
