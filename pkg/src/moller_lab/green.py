"""Advanced/retarded Green operators and the causal propagator.

On the grid window [t0, t1] the advanced operator G+ (support in the causal
future of the source) is the forward Cauchy solve from zero data at t0, the
retarded operator G- the backward solve from zero data at t1.  Past/future
compact support of admissible sources becomes a margin condition: the source
must vanish near the time edge the solve starts from.  G := G+ - G- maps
sources to homogeneous solutions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import GridError, GridField
from .shs import adjoint_system, apply_system, negated_system, pairing_integral, solve_cauchy


class SupportError(GridError):
    pass


@dataclass
class GreenOp:
    system: object
    grid: object
    sign: str  # "advanced" (J^+ support) or "retarded" (J^- support)
    cfl: float = 0.4
    margin_steps: int = 2
    margin_tol: float = 1e-12

    def __post_init__(self):
        if self.sign not in ("advanced", "retarded"):
            raise ValueError(f"sign must be advanced|retarded, got {self.sign!r}")

    def _check_margin(self, f):
        m = self.margin_steps
        vals = f.values if isinstance(f, GridField) else None
        if vals is None:
            return  # callables are trusted; the stored-source path is the hot one
        peak = float(np.max(np.abs(vals)))
        if peak == 0.0:
            return
        edge = vals[: m + 1] if self.sign == "advanced" else vals[-(m + 1):]
        if float(np.max(np.abs(edge))) > self.margin_tol * peak:
            raise SupportError(
                f"source support reaches the grid boundary on the "
                f"{'past' if self.sign == 'advanced' else 'future'} side "
                f"(needs a {m}-step margin)")

    def apply(self, f, check_margin=True):
        if check_margin:
            self._check_margin(f)
        direction = "forward" if self.sign == "advanced" else "backward"
        return solve_cauchy(self.system, self.grid, source=f, data=None,
                            direction=direction, cfl=self.cfl)


def green_apply(system, grid, f, sign, cfl=0.4):
    return GreenOp(system, grid, sign, cfl).apply(f)


def causal_propagator(system, grid, f, cfl=0.4):
    """G f = G+ f - G- f; lies in ker S for compactly supported f."""
    plus = GreenOp(system, grid, "advanced", cfl).apply(f)
    minus = GreenOp(system, grid, "retarded", cfl).apply(f)
    return GridField(grid, plus.values - minus.values, plus.fiber_kind)


# ---------------------------------------------------------------------------
# causal support check

def _wrap_distance_to_columns(nx, cols):
    """Distance (radians) from every node to the nearest marked column."""
    dx = 2.0 * np.pi / nx
    if not np.any(cols):
        return np.full(nx, np.inf)
    idx = np.arange(nx)
    src = np.nonzero(cols)[0]
    diff = np.abs(idx[:, None] - src[None, :])
    diff = np.minimum(diff, nx - diff)
    return diff.min(axis=1) * dx


def check_support(field, source, v_max, side, inflate_cells=3, rel_floor=1e-13):
    """Mass fraction of `field` outside the causal cone of the source support.

    The cone is grown from the source columns at speed v_max (a bound on the
    local characteristic speed beta/a) and inflated by `inflate_cells` grid
    cells; `side` selects the future (advanced) or past (retarded) cone.
    Returns the leakage ratio sum |field|^2 outside / total.
    """
    grid = field.grid
    nx, dt, dx = grid.nx, grid.dt, grid.dx
    src_vals = source.values if isinstance(source, GridField) else np.asarray(source)
    src_mag = np.max(np.abs(src_vals), axis=-1) if src_vals.ndim == 3 else np.abs(src_vals)
    src_mask = src_mag > rel_floor * max(float(np.max(src_mag)), 1e-300)
    levels = range(grid.nt + 1) if side == "future" else range(grid.nt, -1, -1)
    dist = np.full(nx, np.inf)
    outside_mass = 0.0
    total_mass = 0.0
    allow = inflate_cells * dx
    mag2 = np.sum(np.abs(field.values) ** 2, axis=-1)
    for n in levels:
        # distance fields to point sets are 1-Lipschitz, so growing the cone
        # by v dt is an exact pointwise subtraction
        dist = np.maximum(dist - v_max * dt, 0.0)
        dist = np.minimum(dist, _wrap_distance_to_columns(nx, src_mask[n]))
        outside = dist > allow
        outside_mass += float(np.sum(mag2[n][outside]))
        total_mass += float(np.sum(mag2[n]))
    if total_mass == 0.0:
        return 0.0
    return outside_mass / total_mass


# ---------------------------------------------------------------------------
# duality and exact-sequence diagnostics

def green_duality_defect(system, grid, phi, psi, cfl=0.4):
    """Defect of  integral <G~+ phi, psi> vol = -integral <phi, G- psi> vol,
    where G~+ is the advanced Green operator of the symmetric hyperbolic
    system -S† (so that w := -G~+ phi solves S† w = phi with future-directed
    support).  Relative to the magnitude of the right-hand side."""
    adj = negated_system(adjoint_system(system), label=f"-adj({system.label})")
    w = GreenOp(adj, grid, "advanced", cfl).apply(phi)
    g_minus_psi = GreenOp(system, grid, "retarded", cfl).apply(psi)
    lhs = -pairing_integral(system, w, psi)
    rhs = pairing_integral(system, phi, g_minus_psi)
    scale = max(abs(rhs), abs(lhs), 1e-300)
    return abs(lhs - rhs) / scale


def homogeneous_from_source_defect(system, grid, psi, theta, cfl=0.4):
    """Exact-sequence surjectivity check: for homogeneous psi and a smooth
    temporal step theta, h := S(theta psi) is compactly supported in the
    transition band of theta and G h reproduces psi.  Returns the relative
    defect.  Outside the band S(theta psi) is theta * S psi, pure solver
    residual of psi, which is masked off so the margin checks see the true
    support."""
    thetas = theta(grid.times)
    cut = GridField(grid, psi.values * thetas[:, None, None], psi.fiber_kind)
    h = apply_system(system, cut)
    band = ((grid.times >= theta.t_minus - 2.0 * grid.dt)
            & (grid.times <= theta.t_plus + 2.0 * grid.dt))
    h = GridField(grid, h.values * band[:, None, None], h.fiber_kind)
    rebuilt = causal_propagator(system, grid, h, cfl)
    return float(np.max(np.abs(rebuilt.values - psi.values)) / max(psi.norm_inf(), 1e-300))
