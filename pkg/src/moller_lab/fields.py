"""Coefficient fields c(t, x) with exact derivative fields.

All metric data, chi/rho profiles and system coefficients are built from
`Coef` objects: a callable c(t, x_array) -> array together with lazily
constructed, exact dt/dx derivative Coefs (chain rule on combinators,
symbolic differentiation on expression-backed leaves).  Matrix-valued
coefficients are sums of scalar Coefs times constant matrices, which is
closed under every operation the lab needs (rho/kappa conjugation,
chi interpolation, adjoints) and keeps derivative assembly exact.
"""

from __future__ import annotations

import numpy as np

from . import exprlang


class Coef:
    """Real scalar field (t, x) -> array, with exact ∂_t and ∂_x fields."""

    def __init__(self, fn, dt_thunk=None, dx_thunk=None, label=""):
        self._fn = fn
        self._dt_thunk = dt_thunk
        self._dx_thunk = dx_thunk
        self._dt = None
        self._dx = None
        self.label = label

    def __call__(self, t, x):
        return self._fn(t, x)

    def dt(self):
        if self._dt is None:
            if self._dt_thunk is None:
                raise ValueError(f"coefficient {self.label!r} has no t-derivative rule")
            self._dt = self._dt_thunk()
        return self._dt

    def dx(self):
        if self._dx is None:
            if self._dx_thunk is None:
                raise ValueError(f"coefficient {self.label!r} has no x-derivative rule")
            self._dx = self._dx_thunk()
        return self._dx

    # -- constructors -------------------------------------------------------

    @staticmethod
    def constant(value):
        v = float(value)
        c = Coef(lambda t, x: np.full(np.broadcast(t, x).shape, v) if np.ndim(t) or np.ndim(x) else v,
                 label=repr(v))
        if v == 0.0:
            c._dt_thunk = lambda: c
            c._dx_thunk = lambda: c
        else:
            c._dt_thunk = lambda: Coef.constant(0.0)
            c._dx_thunk = lambda: Coef.constant(0.0)
        return c

    @staticmethod
    def from_expr(source):
        """Build from an expression string or parsed AST; derivatives are symbolic."""
        node = exprlang.parse_expr(source) if isinstance(source, str) else source

        def fn(t, x):
            val = exprlang.evaluate(node, t, x)
            if np.ndim(val) == 0 and (np.ndim(t) or np.ndim(x)):
                return np.full(np.broadcast(t, x).shape, float(val))
            return val

        return Coef(fn,
                    dt_thunk=lambda: Coef.from_expr(exprlang.diff(node, "t")),
                    dx_thunk=lambda: Coef.from_expr(exprlang.diff(node, "x")),
                    label=exprlang.print_expr(node))

    # -- algebra (chain rule) ------------------------------------------------

    def __add__(self, other):
        other = as_coef(other)
        return Coef(lambda t, x: self(t, x) + other(t, x),
                    lambda: self.dt() + other.dt(),
                    lambda: self.dx() + other.dx(),
                    f"({self.label}+{other.label})")

    __radd__ = __add__

    def __sub__(self, other):
        other = as_coef(other)
        return Coef(lambda t, x: self(t, x) - other(t, x),
                    lambda: self.dt() - other.dt(),
                    lambda: self.dx() - other.dx(),
                    f"({self.label}-{other.label})")

    def __rsub__(self, other):
        return as_coef(other) - self

    def __neg__(self):
        return Coef.constant(-1.0) * self

    def __mul__(self, other):
        other = as_coef(other)
        return Coef(lambda t, x: self(t, x) * other(t, x),
                    lambda: self.dt() * other + self * other.dt(),
                    lambda: self.dx() * other + self * other.dx(),
                    f"({self.label}*{other.label})")

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_coef(other)
        return Coef(lambda t, x: self(t, x) / other(t, x),
                    lambda: (self.dt() * other - self * other.dt()) / (other * other),
                    lambda: (self.dx() * other - self * other.dx()) / (other * other),
                    f"({self.label}/{other.label})")

    def __rtruediv__(self, other):
        return as_coef(other) / self

    def sqrt(self):
        out = Coef(lambda t, x: np.sqrt(self(t, x)), label=f"sqrt({self.label})")
        out._dt_thunk = lambda: self.dt() / (2.0 * out)
        out._dx_thunk = lambda: self.dx() / (2.0 * out)
        return out

    def squared(self):
        return self * self


def as_coef(value):
    if isinstance(value, Coef):
        return value
    if isinstance(value, str):
        return Coef.from_expr(value)
    return Coef.constant(value)


ZERO = Coef.constant(0.0)
ONE = Coef.constant(1.0)


class MatrixCoef:
    """Matrix field A(t, x) = sum_k c_k(t, x) * M_k with constant matrices M_k."""

    def __init__(self, terms, n):
        self.n = n
        self.terms = [(as_coef(c), np.asarray(m, dtype=complex)) for c, m in terms]
        for _, m in self.terms:
            if m.shape != (n, n):
                raise ValueError(f"matrix term has shape {m.shape}, expected {(n, n)}")

    @staticmethod
    def constant(matrix):
        m = np.asarray(matrix, dtype=complex)
        return MatrixCoef([(ONE, m)], m.shape[0])

    def __call__(self, t, x):
        shape = np.broadcast(np.asarray(t), np.asarray(x)).shape
        out = np.zeros(shape + (self.n, self.n), dtype=complex)
        for c, m in self.terms:
            val = np.broadcast_to(np.asarray(c(t, x), dtype=float), shape)
            out += val[..., None, None] * m
        return out

    def dt(self):
        return MatrixCoef([(c.dt(), m) for c, m in self.terms], self.n)

    def dx(self):
        return MatrixCoef([(c.dx(), m) for c, m in self.terms], self.n)

    def __add__(self, other):
        if other.n != self.n:
            raise ValueError("fiber dimensions differ")
        return MatrixCoef(self.terms + other.terms, self.n)

    def __sub__(self, other):
        return self + other.scaled(Coef.constant(-1.0))

    def scaled(self, coef):
        coef = as_coef(coef)
        return MatrixCoef([(coef * c, m) for c, m in self.terms], self.n)

    def conjugated(self, u, u_inv=None):
        """U A U^-1 for a constant matrix U."""
        u = np.asarray(u, dtype=complex)
        u_inv = np.linalg.inv(u) if u_inv is None else np.asarray(u_inv, dtype=complex)
        return MatrixCoef([(c, u @ m @ u_inv) for c, m in self.terms], self.n)

    def hermitian_conj(self):
        """Termwise M -> M†; scalar coefficients are real by construction."""
        return MatrixCoef([(c, m.conj().T) for c, m in self.terms], self.n)

    def matmul(self, other):
        """Pointwise matrix product; stays in the c*M form."""
        terms = [(c1 * c2, m1 @ m2) for c1, m1 in self.terms for c2, m2 in other.terms]
        return MatrixCoef(terms, self.n)

    def inverse(self):
        """Inverse for the cases the lab produces: a single invertible term,
        or a sum of diagonal terms with disjoint supports (block metrics)."""
        if len(self.terms) == 1:
            c, m = self.terms[0]
            return MatrixCoef([(1.0 / c, np.linalg.inv(m))], self.n)
        diag_slots = []
        for c, m in self.terms:
            off = m - np.diag(np.diag(m))
            if np.any(off != 0):
                raise NotImplementedError("inverse of non-diagonal multi-term MatrixCoef")
            slots = np.nonzero(np.diag(m))[0]
            diag_slots.append((c, m, slots))
        covered = np.concatenate([s for _, _, s in diag_slots])
        if sorted(covered) != list(range(self.n)) or len(set(covered)) != self.n:
            raise NotImplementedError("diagonal terms must cover each slot exactly once")
        inv_terms = []
        for c, m, slots in diag_slots:
            minv = np.zeros_like(m)
            for s in slots:
                minv[s, s] = 1.0 / m[s, s]
            inv_terms.append((1.0 / c, minv))
        return MatrixCoef(inv_terms, self.n)

