import numpy as np
import pytest

from moller_lab import dirac, geom
from moller_lab.dirac import (DEFAULT_REALIZATION, SpinorRealization, adjunction,
                              adjunction_inverse, dirac_system, gamma_sharp,
                              kappa_spin, kappa_transport, spin_scalar_product,
                              spin_scalar_product_levels)
from moller_lab.grid import Grid, GridField
from moller_lab.shs import (apply_system, check_condition_H, check_condition_S,
                            principal_symbol, random_smooth_data, solve_cauchy)

X = np.linspace(0.0, 2.0 * np.pi, 48, endpoint=False)


def test_clifford_identities_exact():
    checks = DEFAULT_REALIZATION.validate()
    assert all(v == 0.0 for v in checks.values())


def test_bad_realization_rejected():
    bad = SpinorRealization(dirac.GAMMA0, dirac.GAMMA0, dirac.H_SPIN)
    with pytest.raises(ValueError):
        bad.validate()


def test_conditions_on_both_metrics(dirac_ultra, dirac_cosmo, grid_small):
    for sys in (dirac_ultra, dirac_cosmo):
        assert check_condition_S(sys, grid_small).passed
        rep = check_condition_H(sys, grid_small)
        assert rep.passed and rep.value > 0.0


def test_principal_symbol_is_minus_gamma_sharp(cosmological):
    # the sign convention: the system is the positivity-oriented form of the
    # Dirac operator, so sigma(xi) = -gamma(xi^sharp)
    sys = dirac_system(cosmological)
    rng = np.random.default_rng(0)
    for _ in range(4):
        xi = tuple(rng.normal(size=2))
        sig = principal_symbol(sys, xi, 0.4, X)
        gam = gamma_sharp(cosmological, xi, 0.4, X)
        assert np.max(np.abs(sig + gam)) < 1e-13


def test_square_is_wave_operator_on_plane_waves(ultrastatic, dirac_ultra):
    # ultrastatic massless square: S^2 = (d_t^2 - d_x^2) Id; on-shell plane
    # waves with omega = +-k are annihilated
    g = Grid(64, 128, 0.0, 2.0)
    k = 3.0
    spinor = np.array([1.0, 0.4 - 0.2j])
    phase = np.exp(1j * (k * g.x[None, :] - k * g.times[:, None]))
    psi = GridField(g, phase[:, :, None] * spinor[None, None, :])
    s_psi = apply_system(dirac_ultra, psi)
    s2_psi = apply_system(dirac_ultra, s_psi)
    interior = slice(8, g.nt - 7)
    assert np.max(np.abs(s2_psi.values[interior])) < 1e-6
    # off-shell: S^2 reproduces (-omega^2 + k^2) psi
    omega = 2.0
    phase = np.exp(1j * (k * g.x[None, :] - omega * g.times[:, None]))
    psi = GridField(g, phase[:, :, None] * spinor[None, None, :])
    s2 = apply_system(dirac_ultra, apply_system(dirac_ultra, psi))
    expected = (-omega**2 + k**2) * psi.values
    assert np.max(np.abs(s2.values[interior] - expected[interior])) < 1e-6 * k**2


def test_kappa_identity_for_trivial_family(ultrastatic):
    res = kappa_spin(ultrastatic, ultrastatic)
    assert res.transport_deviation < 1e-14
    assert res.isometry_defect < 1e-14
    assert res.clifford_defect < 1e-14


def test_kappa_diagonal_family(ultrastatic):
    g1 = geom.make_metric("1 - 0.25*exp(-t^2)", "1 + 0.2*sin(x)*exp(-t^2)")
    res = kappa_spin(ultrastatic, g1, t_samples=(-1.0, 0.0, 1.0))
    assert res.transport_deviation < 1e-10
    assert res.isometry_defect < 1e-10
    assert res.clifford_defect < 1e-10


def test_kappa_transport_returns_matrices(ultrastatic, cosmological):
    kap, dev = kappa_transport(ultrastatic, cosmological, 0.0, X)
    assert kap.shape == (len(X), 2, 2)
    assert dev < 1e-12


def test_kappa_rho_scaling(ultrastatic):
    g0 = geom.make_metric("1", "4")
    rho = geom.rho_from_volumes(g0, ultrastatic)
    res = kappa_spin(g0, ultrastatic, rho=rho)
    vals = res.map.apply(0.0, X, np.ones((len(X), 2), dtype=complex))
    assert np.allclose(vals, 2.0)


def test_adjunction_properties():
    rng = np.random.default_rng(1)
    psi = rng.normal(size=(8, 2)) + 1j * rng.normal(size=(8, 2))
    phi = rng.normal(size=(8, 2)) + 1j * rng.normal(size=(8, 2))
    assert np.all(adjunction(np.zeros((4, 2))) == 0.0)
    # antilinearity
    assert np.allclose(adjunction(1j * psi), -1j * adjunction(psi))
    # (Upsilon psi)(phi) = <psi, phi> exactly
    pair_direct = np.einsum("xi,ij,xj->x", np.conj(psi), dirac.H_SPIN, phi)
    pair_dual = np.einsum("xj,xj->x", adjunction(psi), phi)
    assert np.allclose(pair_direct, pair_dual)
    # inverse round trip
    assert np.allclose(adjunction_inverse(adjunction(psi)), psi)


@pytest.fixture(scope="module")
def cosmo_solutions(dirac_cosmo):
    g = Grid(64, 512, -3.0, 3.0)
    psi = solve_cauchy(dirac_cosmo, g, data=random_smooth_data(g, 2, rng=5))
    phi = solve_cauchy(dirac_cosmo, g, data=random_smooth_data(g, 2, rng=6))
    return g, psi, phi


def test_spin_product_positive_definite(cosmological, cosmo_solutions):
    _, psi, _ = cosmo_solutions
    val = spin_scalar_product(cosmological, psi, psi)
    assert val.real > 0.0 and abs(val.imag) < 1e-12 * val.real


def test_spin_product_hermitian(cosmological, cosmo_solutions):
    _, psi, phi = cosmo_solutions
    ab = spin_scalar_product(cosmological, psi, phi)
    ba = spin_scalar_product(cosmological, phi, psi)
    assert abs(ab - np.conj(ba)) < 1e-12 * abs(ab)


def test_spin_product_slice_independent(cosmological, cosmo_solutions):
    _, psi, phi = cosmo_solutions
    levels = spin_scalar_product_levels(cosmological, psi, phi)
    drift = (np.max(np.abs(levels - levels.mean()))) / abs(levels.mean())
    assert drift < 1e-6


def test_norm_conservation_cosmological(cosmological, cosmo_solutions):
    _, psi, _ = cosmo_solutions
    levels = spin_scalar_product_levels(cosmological, psi, psi).real
    drift = (levels.max() - levels.min()) / abs(levels.mean())
    assert drift < 1e-6
