import math

import numpy as np
import pytest

from moller_lab import grid
from moller_lab.grid import (BlowUpError, Grid, GridError, GridField, bump,
                             bump_source, d_dx_array, fd_weights, rk4_step,
                             slice_integral, time_derivative, zero_field)


def test_grid_invariants():
    with pytest.raises(GridError):
        Grid(48, 10, 0.0, 1.0)  # not a power of two
    with pytest.raises(GridError):
        Grid(4, 10, 0.0, 1.0)   # too small
    with pytest.raises(GridError):
        Grid(64, 0, 0.0, 1.0)
    with pytest.raises(GridError):
        Grid(64, 10, 1.0, 0.0)


def test_cfl_check():
    g = Grid(64, 10, 0.0, 1.0)  # dt = 0.1, dx ~ 0.0982
    with pytest.raises(GridError):
        g.check_cfl(v_max=1.0, cfl=0.4)
    assert Grid(64, 100, 0.0, 1.0).check_cfl(v_max=0.3, cfl=0.4)


def test_spectral_derivative_fourier_modes():
    g = Grid(64, 1, 0.0, 1.0)
    f = np.exp(1j * 3 * g.x)
    df = d_dx_array(f, 64)
    assert np.max(np.abs(df - 3j * f)) < 1e-12
    assert np.max(np.abs(d_dx_array(np.ones(64), 64))) < 1e-13
    assert np.max(np.abs(d_dx_array(np.sin(g.x), 64) - np.cos(g.x))) < 1e-12


def test_spectral_exact_below_nyquist():
    g = Grid(64, 1, 0.0, 1.0)
    for k in (1, 7, 17, 31):
        f = np.exp(1j * k * g.x)
        assert np.max(np.abs(d_dx_array(f, 64) - 1j * k * f)) < 1e-10 * k


def test_fd4_order():
    errs = []
    for nx in (32, 64, 128):
        g = Grid(nx, 1, 0.0, 1.0)
        err = np.max(np.abs(d_dx_array(np.sin(g.x), nx, "fd4") - np.cos(g.x)))
        errs.append(err)
    assert errs[0] / errs[1] > 12 and errs[1] / errs[2] > 12  # ~2^4


def test_rk4_zero_rhs_identity():
    y = np.array([1.0 + 2.0j])
    out = rk4_step(lambda t, s: np.zeros_like(s), y, 0.0, 0.1)
    assert np.all(out == y)


def test_rk4_exponential_accuracy():
    # y' = y from 1: one step dt = 0.1 reproduces e^0.1 to the RK4 remainder
    out = rk4_step(lambda t, s: s, np.array([1.0 + 0j]), 0.0, 0.1)
    assert abs(out[0] - math.exp(0.1)) < 1e-7


def test_rk4_rotation_norm():
    y = np.array([1.0 + 0j])
    dt = 0.05
    for n in range(100):
        y = rk4_step(lambda t, s: 1j * s, y, n * dt, dt)
    # per-step norm defect is O(dt^6); 100 steps stay well inside 1e-7
    assert abs(abs(y[0]) - 1.0) < 1e-7


def test_rk4_blowup_error():
    with pytest.raises(BlowUpError):
        rk4_step(lambda t, s: s * np.inf, np.array([1.0]), 0.0, 0.1)


def test_slice_integral_values():
    g = Grid(64, 1, 0.0, 1.0)
    assert abs(slice_integral(np.ones(64)) - 2 * math.pi) < 1e-13
    assert abs(slice_integral(np.sin(g.x))) < 1e-13
    assert abs(slice_integral(np.sin(g.x) ** 2) - math.pi) < 1e-13
    assert abs(slice_integral(np.ones(64), density=2.0 * np.ones(64)) - 4 * math.pi) < 1e-12


def test_integration_by_parts():
    g = Grid(64, 1, 0.0, 1.0)
    w = np.exp(np.sin(g.x))
    assert abs(slice_integral(d_dx_array(w, 64))) < 1e-12


def test_bump_center_value_and_support():
    g = Grid(64, 200, -2.0, 2.0)
    f = bump_source(g, (0.0, math.pi), (1.0, 1.0), component=0, ncomp=2)
    mid_level = g.nt // 2
    ix = np.argmin(np.abs(g.x - math.pi))
    # product of two unit bumps at their centers: e^-1 * e^-1
    assert abs(f.values[mid_level, ix, 0] - math.exp(-2.0)) < 1e-12
    assert np.all(f.values[:, :, 1] == 0.0)
    # exactly zero outside the support
    outside_t = np.abs(g.times) >= 1.0
    assert np.all(f.values[outside_t] == 0.0)
    dist = np.abs((g.x - math.pi + math.pi) % (2 * math.pi) - math.pi)
    assert np.all(f.values[:, dist >= 1.0, :] == 0.0)
    # support extent matches the radii to one cell
    support_t = np.any(np.abs(f.values[:, :, 0]) > 0, axis=1)
    t_lo, t_hi = g.times[support_t][0], g.times[support_t][-1]
    assert -1.0 - g.dt <= t_lo <= -1.0 + 2 * g.dt
    assert 1.0 - 2 * g.dt <= t_hi <= 1.0 + g.dt


def test_bump_margin_error():
    g = Grid(64, 100, -1.0, 1.0)
    with pytest.raises(GridError):
        bump_source(g, (0.0, math.pi), (1.0, 1.0))


def test_fd_weights_exact_on_polynomials():
    w = fd_weights(tuple(range(-4, 5)), 1)
    # standard 8th-order central first-derivative stencil
    expected = np.array([1 / 280, -4 / 105, 1 / 5, -4 / 5, 0, 4 / 5, -1 / 5, 4 / 105, -1 / 280])
    assert np.allclose(w, expected, atol=1e-12)


def test_time_derivative_high_order():
    g = Grid(8, 40, 0.0, 2.0)
    t = g.times
    vals = np.exp(0.9 * t)[:, None, None] * np.ones((1, 8, 1))
    d1 = time_derivative(vals, g.dt, order=1)
    d2 = time_derivative(vals, g.dt, order=2)
    assert np.max(np.abs(d1 - 0.9 * vals)) < 2e-9
    assert np.max(np.abs(d2 - 0.81 * vals)) < 2e-6  # edge rows dominate


def test_slice_level_interface():
    g = Grid(64, 10, 0.0, 1.0)
    field = zero_field(g, 2)
    field.values[3, :, 0] = np.exp(1j * 3 * g.x)
    sl = field.slice_at(3)
    dsl = grid.d_dx(sl)
    assert np.max(np.abs(dsl.values[:, 0] - 3j * sl.values[:, 0])) < 1e-12
    dsl4 = grid.d_dx(sl, scheme="fd4")
    assert np.max(np.abs(dsl4.values[:, 0] - 3j * sl.values[:, 0])) < 1e-3


def test_gridfield_shape_checks():
    g = Grid(64, 10, 0.0, 1.0)
    with pytest.raises(GridError):
        GridField(g, np.zeros((5, 64, 1)))
    f = zero_field(g, 2)
    assert f.ncomp == 2 and f.norm_inf() == 0.0
    r = GridField(g, np.zeros((11, 64, 1)) + 1e-10j, fiber_kind="real")
    with pytest.raises(GridError):
        r.check_real()


def test_bump_profile_shape():
    s = np.array([-2.0, -0.999, 0.0, 0.5, 1.0, 3.0])
    v = bump(s)
    assert v[0] == 0.0 and v[4] == 0.0 and v[5] == 0.0
    assert abs(v[2] - math.exp(-1.0)) < 1e-15
    assert 0 < v[3] < v[2]
