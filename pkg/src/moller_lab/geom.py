"""Diagonal globally hyperbolic metrics on R x S^1 and the profiles chi, rho.

The metric class is g = -beta(t,x)^2 dt^2 + a(t,x)^2 dx^2 with t the shared
Cauchy temporal function and x periodic on [0, 2pi).  Light speed is beta/a;
a covector dt + alpha dx is timelike iff |alpha| < a/beta.  The slice volume
density is a(t, x) dx.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import Coef, as_coef


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Metric1p1:
    """g = -beta^2 dt^2 + a^2 dx^2, beta > 0, a > 0, periodic in x."""

    beta: Coef
    a: Coef
    label: str = ""

    def light_speed(self):
        """Characteristic speed dx/dt = beta/a of the null curves."""
        return self.beta / self.a

    def volume_weight(self):
        """Spacetime volume density beta*a (vol_M = beta a dt dx)."""
        return self.beta * self.a

    def check_positive(self, times, x):
        """Strict positivity of beta and a on the sampled nodes."""
        for name, c in (("beta", self.beta), ("a", self.a)):
            for t in np.atleast_1d(times):
                vals = np.asarray(c(t, x), dtype=float)
                if not np.all(vals > 0.0):
                    raise GeometryError(
                        f"metric {self.label!r}: {name} not strictly positive at t={t}")
        return True


def make_metric(beta, a, label=""):
    return Metric1p1(as_coef(beta), as_coef(a), label)


def ultrastatic_metric(label="ultrastatic"):
    return make_metric(1.0, 1.0, label)


def interpolate_metrics(g0, g1, lam):
    """Convex combination of the metric tensors: beta^2 and a^2 interpolate linearly."""
    if not 0.0 <= lam <= 1.0:
        raise GeometryError(f"interpolation parameter {lam} outside [0, 1]")
    if lam == 0.0:
        return g0
    if lam == 1.0:
        return g1
    beta = ((1.0 - lam) * g0.beta.squared() + lam * g1.beta.squared()).sqrt()
    a = ((1.0 - lam) * g0.a.squared() + lam * g1.a.squared()).sqrt()
    return Metric1p1(beta, a, f"interp({g0.label},{g1.label},{lam})")


def cone_dominates(g0, g1, times, x):
    """True iff the g1 light cones sit inside the g0 ones on the sampled nodes,
    i.e. beta1/a1 <= beta0/a0 everywhere.  Returns (ok, worst margin)."""
    margin = np.inf
    v0, v1 = g0.light_speed(), g1.light_speed()
    for t in np.atleast_1d(times):
        m = np.min(np.asarray(v0(t, x)) - np.asarray(v1(t, x)))
        margin = min(margin, float(m))
    return margin >= 0.0, margin


def slice_volume_density(g, t, x):
    """Density of vol_Sigma = a dx on the slice at time t."""
    return np.asarray(g.a(t, x), dtype=float)


@dataclass(frozen=True)
class RhoWeight:
    """Strictly positive weight rho(t,x) with rho^2 vol_Sigma1 = vol_Sigma0."""

    coef: Coef

    def __call__(self, t, x):
        return self.coef(t, x)

    def dt(self):
        return self.coef.dt()

    def dx(self):
        return self.coef.dx()


def unit_rho():
    return RhoWeight(Coef.constant(1.0))


def rho_from_volumes(g0, g1):
    """rho = sqrt(a0/a1), globally smooth; satisfies rho^2 a1 = a0 on every
    slice (the conservation condition only constrains slices before the
    interpolation region, this extension is the canonical smooth choice)."""
    return RhoWeight((g0.a / g1.a).sqrt())


# ---------------------------------------------------------------------------
# chi profile: smooth monotone step in t


def _bump_f(s):
    """f(s) = exp(-1/s) for s > 0 else 0, vectorized and overflow-safe."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > 0.0
    with np.errstate(divide="ignore", over="ignore"):
        out[pos] = np.exp(-1.0 / s[pos])
    return out


@dataclass(frozen=True)
class ChiProfile:
    """chi(t) = f(s)/(f(s)+f(1-s)), s = (t - t_minus)/(t_plus - t_minus).

    C^inf, 0 for t <= t_minus, 1 for t >= t_plus, non-decreasing, and equal
    to 1/2 at the midpoint by the symmetry f(s) <-> f(1-s).
    """

    t_minus: float
    t_plus: float

    def __post_init__(self):
        if not self.t_minus < self.t_plus:
            raise GeometryError(
                f"chi profile needs t_minus < t_plus, got [{self.t_minus}, {self.t_plus}]")

    def __call__(self, t):
        scalar = np.ndim(t) == 0
        s = (np.atleast_1d(np.asarray(t, dtype=float)) - self.t_minus) / (self.t_plus - self.t_minus)
        fs, f1s = _bump_f(s), _bump_f(1.0 - s)
        out = np.where(s <= 0.0, 0.0, np.where(s >= 1.0, 1.0, fs / np.where(fs + f1s == 0, 1.0, fs + f1s)))
        return float(out[0]) if scalar else out

    def derivative(self, t):
        scalar = np.ndim(t) == 0
        dt_span = self.t_plus - self.t_minus
        s = (np.atleast_1d(np.asarray(t, dtype=float)) - self.t_minus) / dt_span
        fs, f1s = _bump_f(s), _bump_f(1.0 - s)
        inside = (s > 0.0) & (s < 1.0)
        out = np.zeros_like(s)
        si, fi, f1i = s[inside], fs[inside], f1s[inside]
        # f'(u) = f(u)/u^2; chi' = (f'(s) f(1-s) + f(s) f'(1-s)) / (f+f)^2
        num = (fi / si**2) * f1i + fi * (f1i / (1.0 - si) ** 2)
        out[inside] = num / (fi + f1i) ** 2 / dt_span
        return float(out[0]) if scalar else out

    @property
    def coef(self):
        """Coef view (x-independent); second t-derivative falls back to a
        central difference, nothing downstream differentiates chi twice."""
        prof = self

        def derivative_coef():
            return Coef(lambda t, x: prof.derivative(t) * np.ones_like(np.asarray(x, dtype=float)),
                        dt_thunk=lambda: Coef(
                            lambda t, x: (prof.derivative(t + 1e-5) - prof.derivative(t - 1e-5))
                            / 2e-5 * np.ones_like(np.asarray(x, dtype=float)),
                            label="chi''(fd)"),
                        dx_thunk=lambda: Coef.constant(0.0),
                        label="chi'")

        return Coef(lambda t, x: prof(t) * np.ones_like(np.asarray(x, dtype=float)),
                    dt_thunk=derivative_coef,
                    dx_thunk=lambda: Coef.constant(0.0),
                    label="chi")


def chi_profile(t_minus, t_plus):
    return ChiProfile(float(t_minus), float(t_plus))
