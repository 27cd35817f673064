"""Numerical laboratory for symmetric hyperbolic systems on 1+1d globally
hyperbolic spacetimes and the intertwining operators between their solution
spaces: symbol-condition checks, Cauchy solvers, advanced/retarded Green
operators, the Dirac and wave realizations, conservation of Hermitian and
symplectic slice pairings, and quasifree-state pullback diagnostics."""

__version__ = "0.1.0"
