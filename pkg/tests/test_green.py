import numpy as np
import pytest

from moller_lab import geom, green, wave
from moller_lab.green import (GreenOp, SupportError, causal_propagator,
                              check_support, green_duality_defect,
                              homogeneous_from_source_defect)
from moller_lab.grid import Grid, GridField, bump_source
from moller_lab.shs import apply_system


@pytest.fixture(scope="module")
def setup(dirac_ultra):
    g = Grid(128, 768, -3.2, 3.2)
    f = bump_source(g, (0.0, np.pi), (1.5, 1.0), component=0, ncomp=2)
    return g, dirac_ultra, f


def test_zero_source_zero_output(setup):
    g, sys, _ = setup
    zero = GridField(g, np.zeros((g.nt + 1, g.nx, 2)))
    assert GreenOp(sys, g, "advanced").apply(zero).norm_inf() == 0.0
    assert causal_propagator(sys, g, zero).norm_inf() == 0.0


def test_green_apply_helper(setup):
    g, sys, f = setup
    u = green.green_apply(sys, g, f, "advanced")
    v = GreenOp(sys, g, "advanced").apply(f)
    assert np.max(np.abs(u.values - v.values)) == 0.0


def test_green_right_inverse(setup):
    g, sys, f = setup
    scale = np.max(np.abs(f.values))
    interior = slice(4, g.nt - 3)
    for sign in ("advanced", "retarded"):
        u = GreenOp(sys, g, sign).apply(f)
        resid = apply_system(sys, u).values[interior] - f.values[interior]
        assert np.max(np.abs(resid)) / scale < 1e-6


def test_green_left_inverse(setup):
    g, sys, f = setup
    sf = apply_system(sys, f)
    for sign in ("advanced", "retarded"):
        u = GreenOp(sys, g, sign).apply(sf)
        assert np.max(np.abs(u.values - f.values)) / np.max(np.abs(f.values)) < 1e-6


def test_causal_propagator_in_kernel(setup):
    g, sys, f = setup
    gf = causal_propagator(sys, g, f)
    resid = apply_system(sys, gf)
    assert np.max(np.abs(resid.values[4:-4])) / np.max(np.abs(f.values)) < 1e-6


def test_exactness_g_of_sf_vanishes(setup):
    g, sys, f = setup
    sf = apply_system(sys, f)
    gsf = causal_propagator(sys, g, sf)
    assert gsf.norm_inf() / np.max(np.abs(f.values)) < 1e-6


def test_support_inside_cone(setup):
    g, sys, f = setup
    u = GreenOp(sys, g, "advanced").apply(f)
    assert check_support(u, f, sys.max_speed(g), "future") < 1e-6
    w = GreenOp(sys, g, "retarded").apply(f)
    assert check_support(w, f, sys.max_speed(g), "past") < 1e-6


def test_support_zero_field(setup):
    g, sys, f = setup
    zero = GridField(g, np.zeros_like(f.values))
    assert check_support(zero, f, 1.0, "future") == 0.0


def test_support_positive_control(setup):
    # a time-mirrored advanced solution must fail the future-side detector
    g, sys, f = setup
    u = GreenOp(sys, g, "advanced").apply(f)
    mirrored = GridField(g, u.values[::-1].copy())
    assert check_support(mirrored, f, sys.max_speed(g), "future") > 1e-2


def test_margin_violation_raises(setup):
    g, sys, _ = setup
    vals = np.zeros((g.nt + 1, g.nx, 2), dtype=complex)
    vals[0, :, 0] = 1.0  # supported on the first level
    with pytest.raises(SupportError):
        GreenOp(sys, g, "advanced").apply(GridField(g, vals))
    vals2 = np.zeros_like(vals)
    vals2[-1, :, 0] = 1.0
    with pytest.raises(SupportError):
        GreenOp(sys, g, "retarded").apply(GridField(g, vals2))


def test_duality(setup):
    g, sys, f = setup
    psi = bump_source(g, (1.2, 2.0), (1.0, 0.8), component=1, ncomp=2)
    assert green_duality_defect(sys, g, f, psi) < 1e-6


def test_homogeneous_solutions_are_in_green_image(setup):
    g, sys, f = setup
    psi = causal_propagator(sys, g, f)
    theta = geom.chi_profile(-0.5, 0.5)
    assert homogeneous_from_source_defect(sys, g, psi, theta) < 1e-5


def test_green_identities_wave_reduction(ultrastatic):
    p = wave.wave_from_metric(ultrastatic, 1.0)
    sys = wave.reduce_to_shs(p)
    g = Grid(64, 384, -3.2, 3.2)
    f = bump_source(g, (0.0, np.pi), (1.5, 1.2), component=0, ncomp=3)
    u = GreenOp(sys, g, "advanced").apply(f)
    resid = apply_system(sys, u).values[4:-4] - f.values[4:-4]
    assert np.max(np.abs(resid)) / np.max(np.abs(f.values)) < 1e-5
    assert check_support(u, f, sys.max_speed(g), "future") < 1e-6
