"""Spinor realization on 1+1d diagonal metrics.

Frame Clifford generators (frame e_0 = beta^-1 d_t, e_1 = a^-1 d_x):

    gamma0 = diag(1, -1),  gamma1 = [[0, 1], [-1, 0]],  H_spin = gamma0,

so gamma0^2 = Id, gamma1^2 = -Id, {gamma0, gamma1} = 0, both H*gamma_mu are
Hermitian (the spin product is symmetric under Clifford multiplication) and
<gamma(n) psi, psi> = psi^dag psi > 0 for the future unit normal n = e_0.

The first-order system returned by `dirac_system` is the symmetric
hyperbolic form of the Dirac equation: the overall sign of the operator is
fixed by requiring H*(A0 + alpha*A1) > 0 on forward covectors dt + alpha dx
together with positivity of the slice product.  With this orientation the
kernel is exactly the Dirac solution space and the principal symbol is
sigma(xi) = -gamma(xi^sharp).  The zeroth-order (spin-connection) term

    B = (d_t a / (2 beta a)) gamma0 - (d_x beta / (2 beta a)) gamma1

is the unique one for which the slice product integral <psi, gamma(n) psi>
a dx is conserved, which the tests enforce directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import MatrixCoef
from .geom import interpolate_metrics
from .shs import FiberMap, SHSystem

GAMMA0 = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
GAMMA1 = np.array([[0.0, 1.0], [-1.0, 0.0]], dtype=complex)
H_SPIN = GAMMA0.copy()


@dataclass(frozen=True)
class SpinorRealization:
    gamma0: np.ndarray
    gamma1: np.ndarray
    h_spin: np.ndarray

    def validate(self):
        """Clifford relations with eta = diag(-1, +1), product symmetry and
        positivity of <gamma(e_0) . , .> -- all exact for constant matrices."""
        g0, g1, h = self.gamma0, self.gamma1, self.h_spin
        eye = np.eye(2)
        checks = {
            "gamma0_square": np.max(np.abs(g0 @ g0 - eye)),
            "gamma1_square": np.max(np.abs(g1 @ g1 + eye)),
            "anticommutator": np.max(np.abs(g0 @ g1 + g1 @ g0)),
            "h_hermitian": np.max(np.abs(h - h.conj().T)),
            "gamma0_symmetric": np.max(np.abs(h @ g0 - (h @ g0).conj().T)),
            "gamma1_symmetric": np.max(np.abs(h @ g1 - (h @ g1).conj().T)),
        }
        worst = max(checks.values())
        if worst != 0.0:
            raise ValueError(f"Clifford/spin-product identities violated: {checks}")
        eig = np.linalg.eigvalsh(h @ g0)
        if np.min(eig) <= 0.0:
            raise ValueError("spin product not positive on gamma(n)")
        return checks


DEFAULT_REALIZATION = SpinorRealization(GAMMA0, GAMMA1, H_SPIN)
DEFAULT_REALIZATION.validate()  # the Clifford identities hold exactly, checked at import


def dirac_system(metric, realization=DEFAULT_REALIZATION, label=None):
    """Symmetric hyperbolic form of the Dirac operator on the given metric."""
    beta, a = metric.beta, metric.a
    g0 = MatrixCoef([(1.0 / beta, realization.gamma0)], 2)
    g1 = MatrixCoef([(-1.0 / a, realization.gamma1)], 2)
    b = MatrixCoef([
        (a.dt() / (2.0 * beta * a), realization.gamma0),
        (-beta.dx() / (2.0 * beta * a), realization.gamma1),
    ], 2)
    h = MatrixCoef.constant(realization.h_spin)
    return SHSystem(2, g0, g1, b, h, metric=metric, fiber_kind="complex",
                    label=label or f"dirac({metric.label})")


def gamma_sharp(metric, xi, t, x, realization=DEFAULT_REALIZATION):
    """gamma(xi^sharp) at the sampled nodes, xi = (xi_t, xi_x) a covector.

    xi^sharp = -(xi_t/beta^2) d_t + (xi_x/a^2) d_x, and gamma(d_t) = beta
    gamma0, gamma(d_x) = a gamma1 in the orthonormal frame.
    """
    xi_t, xi_x = xi
    beta = np.asarray(metric.beta(t, x), dtype=float)
    a = np.asarray(metric.a(t, x), dtype=float)
    coef0 = -xi_t / beta
    coef1 = xi_x / a
    return (coef0[..., None, None] * realization.gamma0
            + coef1[..., None, None] * realization.gamma1)


# ---------------------------------------------------------------------------
# lambda-parallel transport between the members of the diagonal family

def kappa_transport(g0, g1, t, x, n_lambda=64, realization=DEFAULT_REALIZATION):
    """Integrate the parallel-transport equation d kappa/d lambda =
    -(1/4) omega_{ab}(d_lambda) gamma^a gamma^b kappa through the convex
    metric path g_lambda, at the sampled nodes (t fixed, x an array).

    For the diagonal family the orthonormal frame is parallel along the
    lambda-curves (the connection coefficient cancels identically), so the
    result is the identity in the frame trivialization; the integration
    verifies this rather than assuming it.  Returns (kappa matrices with
    shape (len(x), 2, 2), max deviation from identity).
    """
    x = np.asarray(x, dtype=float)
    gam01 = realization.gamma0 @ realization.gamma1

    def omega01(lam):
        # omega_{01}(d_lambda) = g(nabla_{d_lambda} f_0, f_1) for the metric
        # d lambda^2 + g_lambda.  Only the d_x-component of nabla_{d_lam} f_0
        # pairs with f_1 = a^-1 d_x, and that component is
        # Gamma^x_{lam t}/beta with
        #   Gamma^x_{lam t} = (1/2) g^xx (d_lam g_{xt} + d_t g_{x lam} - d_x g_{lam t});
        # the metric class stores no off-diagonal components, so every term
        # is the derivative of an identically-zero field.  (The d_t-component
        # -d_lam(beta)/beta^2 + Gamma^t_{lam t}/beta also cancels exactly,
        # but it is orthogonal to f_1 anyway.)
        g_lam = interpolate_metrics(g0, g1, lam)
        beta = np.asarray(g_lam.beta(t, x), dtype=float)
        a = np.asarray(g_lam.a(t, x), dtype=float)
        gamma_x_lam_t = np.zeros_like(beta)
        return a * gamma_x_lam_t / beta

    kap = np.broadcast_to(np.eye(2, dtype=complex), (len(x), 2, 2)).copy()
    h = 1.0 / n_lambda
    for j in range(n_lambda):
        lam = j * h

        def rhs(l, k):
            w = omega01(l)
            return -0.5 * w[:, None, None] * (gam01 @ k)

        k1 = rhs(lam, kap)
        k2 = rhs(lam + 0.5 * h, kap + 0.5 * h * k1)
        k3 = rhs(lam + 0.5 * h, kap + 0.5 * h * k2)
        k4 = rhs(lam + h, kap + h * k3)
        kap = kap + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    deviation = float(np.max(np.abs(kap - np.eye(2))))
    return kap, deviation


@dataclass
class KappaResult:
    map: FiberMap
    transport_deviation: float
    isometry_defect: float
    clifford_defect: float


def kappa_spin(g0, g1, rho=None, t_samples=(0.0,), x=None,
               realization=DEFAULT_REALIZATION, tol=1e-10):
    """Fiber isometry kappa between the spinor bundles of g0 and g1, scaled
    by rho when given (kappa^rho = rho * kappa).  The transport ODE is
    integrated and checked against the identity; the isometry and Clifford
    intertwining defects of the integrated matrices are reported."""
    if x is None:
        x = np.linspace(0.0, 2.0 * np.pi, 33, endpoint=False)
    worst_dev = 0.0
    worst_iso = 0.0
    worst_cliff = 0.0
    h = realization.h_spin
    for t in t_samples:
        kap, dev = kappa_transport(g0, g1, t, x, realization=realization)
        worst_dev = max(worst_dev, dev)
        iso = np.max(np.abs(np.einsum("xji,jk,xkl->xil", kap.conj(), h, kap) - h))
        worst_iso = max(worst_iso, float(iso))
        for gam in (realization.gamma0, realization.gamma1):
            cl = np.max(np.abs(np.einsum("xij,jk->xik", kap, gam)
                               - np.einsum("ij,xjk->xik", gam, kap)))
            worst_cliff = max(worst_cliff, float(cl))
    if worst_dev > tol:
        raise ValueError(
            f"lambda-transport deviates from identity by {worst_dev:.2e} "
            "(non-diagonal metric family?)")
    base = FiberMap.identity(2)
    fmap = base if rho is None else base.scaled(rho.coef)
    return KappaResult(fmap, worst_dev, worst_iso, worst_cliff)


# ---------------------------------------------------------------------------
# adjunction map and the slice Hermitian product

def adjunction(values, realization=DEFAULT_REALIZATION):
    """Upsilon psi = <psi, .> as a row-covector array: (Upsilon psi)_j =
    sum_i conj(psi_i) H_ij.  Antilinear."""
    return np.einsum("...i,ij->...j", np.conj(values), realization.h_spin)


def adjunction_inverse(covalues, realization=DEFAULT_REALIZATION):
    h = realization.h_spin
    return np.conj(np.linalg.solve(h.T, np.asarray(covalues)[..., None])[..., 0])


def spin_scalar_product_levels(metric, psi, phi, realization=DEFAULT_REALIZATION):
    """(psi, phi)(t) = integral <psi, gamma(n) phi> vol_Sigma on every slice;
    gamma(n) is gamma0 in the frame trivialization and vol_Sigma = a dx."""
    grid = psi.grid
    pairing = realization.h_spin @ realization.gamma0
    tt, xx = grid.times[:, None], grid.x[None, :]
    density = np.broadcast_to(np.asarray(metric.a(tt, xx), dtype=float),
                              (grid.nt + 1, grid.nx))
    integrand = np.einsum("txi,ij,txj->tx", np.conj(psi.values), pairing, phi.values)
    return np.sum(integrand * density, axis=1) * grid.dx


def spin_scalar_product(metric, psi, phi, level=None, realization=DEFAULT_REALIZATION):
    levels = spin_scalar_product_levels(metric, psi, phi, realization)
    if level is None:
        return complex(np.mean(levels))
    return complex(levels[level])
