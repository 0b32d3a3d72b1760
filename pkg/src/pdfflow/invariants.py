"""Verification of the structural invariants the density equation preserves.

Checks are split into assertable (mass, oddness identities, residuals on
closed forms) and diagnostic (positivity audit, measured-only quantities).
Each check returns a CheckResult; assemble_report bundles them with a
summary. Assertable failures flip the report's passed flag, diagnostics
never do.

Velocity integrals use one of two quadrature plans: a tensor Gauss-Hermite
plan for smooth Gaussian-tailed densities, and a partitioned plan that
splits a bounding box along given per-axis breakpoints and applies
Gauss-Legendre per cell. For densities with jump surfaces the partitioned
plan is the sound one: a polynomial rule integrated across a jump loses all
its accuracy, while a cell-aligned partition never sees the discontinuity.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .quadrature import gauss_hermite_rule, gauss_legendre_rule


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    tolerance: float
    passed: bool
    assertable: bool
    details: dict = field(default_factory=dict)


@dataclass
class VerificationReport:
    results: list

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results if r.assertable)

    def payload(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [{
                "name": r.name, "value": r.value, "tolerance": r.tolerance,
                "status": ("pass" if r.passed else "fail") if r.assertable
                else "diagnostic",
                "assertable": r.assertable, "details": r.details,
            } for r in self.results],
        }


class VelocityQuadrature:
    """Integration plan over velocity space; see the module docstring."""

    def __init__(self, nodes: np.ndarray, weights: np.ndarray, kind: str,
                 meta: Optional[dict] = None):
        self.nodes = nodes
        self.weights = weights
        self.kind = kind
        self.meta = meta or {}

    @classmethod
    def gaussian(cls, mean, variances, order: int = 40) -> "VelocityQuadrature":
        """Tensor Gauss-Hermite against a separable Gaussian envelope.

        Integrates f against du (not against the Gaussian): the Gaussian
        weight is divided back out, so the plan is exact for polynomials
        times the envelope and accurate for smooth Gaussian-tailed f.
        """
        mean = np.asarray(mean, dtype=float)
        var = np.broadcast_to(np.asarray(variances, dtype=float), (3,))
        x1, w1 = gauss_hermite_rule(order)
        grids = np.meshgrid(x1, x1, x1, indexing="ij")
        nodes = np.stack([g.reshape(-1) for g in grids], axis=-1)
        pts = mean[None, :] + np.sqrt(2.0 * var)[None, :] * nodes
        wg = np.ones(len(pts))
        for gw in np.meshgrid(w1, w1, w1, indexing="ij"):
            wg *= gw.reshape(-1)
        # d^3u = prod sqrt(2 var_k) e^{x^2} dGauss; fold the inverse weight in
        wg = wg * np.exp(np.sum(nodes * nodes, axis=-1)) \
            * float(np.prod(np.sqrt(2.0 * var)))
        return cls(pts, wg, "gauss_hermite",
                   {"order": order, "mean": mean, "variances": var})

    @classmethod
    def partitioned(cls, axis_breaks: Sequence[Sequence[float]],
                    cell_order: int = 16) -> "VelocityQuadrature":
        """Per-cell Gauss-Legendre on the box partition of a bounding box.

        axis_breaks lists, per axis, the sorted breakpoints including the
        outer bounds; cells are the Cartesian products of consecutive
        intervals and no cell crosses a breakpoint.
        """
        rules = []
        for breaks in axis_breaks:
            b = np.asarray(breaks, dtype=float)
            if len(b) < 2 or np.any(np.diff(b) <= 0):
                raise ValueError(
                    f"axis breakpoints must be strictly increasing, got {b}")
            cells = []
            for lo, hi in zip(b[:-1], b[1:]):
                cells.append(gauss_legendre_rule(cell_order, lo, hi))
            rules.append((np.concatenate([c[0] for c in cells]),
                          np.concatenate([c[1] for c in cells])))
        g = np.meshgrid(rules[0][0], rules[1][0], rules[2][0], indexing="ij")
        nodes = np.stack([a.reshape(-1) for a in g], axis=-1)
        wg = np.ones(len(nodes))
        for gw in np.meshgrid(rules[0][1], rules[1][1], rules[2][1],
                              indexing="ij"):
            wg *= gw.reshape(-1)
        return cls(nodes, wg, "partitioned",
                   {"cell_order": cell_order,
                    "bounds": [(float(b[0]), float(b[-1])) for b in
                               (np.asarray(br, dtype=float) for br in axis_breaks)]})

    def integrate(self, f: Callable) -> float:
        """Integral of f over velocity space; f maps (M, 3) to (M,)."""
        vals = np.asarray(f(self.nodes), dtype=float)
        return float(np.dot(self.weights, vals))

    def coverage_defect(self, f: Callable) -> float:
        """Largest |f| on the outermost node shell, a tail-coverage probe."""
        bounds_lo = self.nodes.min(axis=0)
        bounds_hi = self.nodes.max(axis=0)
        shell = np.zeros(len(self.nodes), dtype=bool)
        for k in range(3):
            span = bounds_hi[k] - bounds_lo[k]
            shell |= (self.nodes[:, k] - bounds_lo[k]) < 0.02 * span
            shell |= (bounds_hi[k] - self.nodes[:, k]) < 0.02 * span
        vals = np.abs(np.asarray(f(self.nodes[shell]), dtype=float))
        return float(vals.max()) if len(vals) else 0.0


def showcase_velocity_plan(cell_order: int = 16,
                           widths: float = 8.5) -> VelocityQuadrature:
    """Partitioned plan aligned with the showcase jump surfaces."""
    from .showcase import REGION
    stds = np.sqrt(np.array([2.0 / 3.0, 1.0, 3.0 / 2.0]))
    breaks = []
    for k in range(3):
        outer = widths * stds[k]
        edges = sorted({-outer, *(-e for e in (REGION.lo[k], REGION.hi[k])),
                        REGION.lo[k], REGION.hi[k], outer})
        breaks.append(edges)
    return VelocityQuadrature.partitioned(breaks, cell_order)


def check_mass(density: Callable, plan: VelocityQuadrature,
               tol: float = 1e-6, warn_coverage: float = 1e-9) -> CheckResult:
    """|integral of the density - 1|; assertable."""
    mass = plan.integrate(density)
    defect = plan.coverage_defect(density)
    if defect > warn_coverage:
        warnings.warn(
            f"density magnitude {defect:.2e} on the plan's outer shell; the "
            "plan may not cover the effective support", RuntimeWarning,
            stacklevel=2)
    return CheckResult(name="mass", value=abs(mass - 1.0), tolerance=tol,
                       passed=abs(mass - 1.0) <= tol, assertable=True,
                       details={"mass": mass, "coverage_defect": defect,
                                "plan": plan.kind})


def check_divergence_free(density_xu: Callable, x, plan: VelocityQuadrature,
                          h: float = 1e-3, tol: float = 1e-6) -> CheckResult:
    """x-divergence of the mean-velocity field integral; assertable.

    density_xu(u, x) maps an (M, 3) velocity batch and a 3-vector position
    to (M,) values. The first moment m^i(x) = int u^i p(u; x) du must be
    divergence free in x when the density solves the equation for an
    incompressible flow.
    """
    x = np.asarray(x, dtype=float)
    div = 0.0
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        mp = plan.integrate(lambda u: u[:, k] * np.asarray(
            density_xu(u, x + e), dtype=float))
        mm = plan.integrate(lambda u: u[:, k] * np.asarray(
            density_xu(u, x - e), dtype=float))
        div += (mp - mm) / (2.0 * h)
    return CheckResult(name="divergence_free", value=abs(div), tolerance=tol,
                       passed=abs(div) <= tol, assertable=True,
                       details={"stencil_step": h, "x": x.tolist()})


def pde_residual(density_xut: Callable, point, viscosity: float, h: float,
                 drift_field: Optional[Callable] = None,
                 drift_divergence: Optional[Callable] = None) -> float:
    """Transport-equation residual at one (u, x, t) by central stencils.

    density_xut(u, x, t) is scalar. With no drift the equation reduces to
    d_t p + u . grad_x p - nu lap_x p = 0; a drift adds
    -(drift . grad_u p + p div_u drift).
    """
    u, x, t = (np.asarray(point[0], dtype=float),
               np.asarray(point[1], dtype=float), float(point[2]))
    if t - h <= 0:
        raise ValueError(f"need t > h for the time stencil, got t={t}, h={h}")
    p0 = float(density_xut(u, x, t))
    res = (float(density_xut(u, x, t + h)) - float(density_xut(u, x, t - h))) \
        / (2.0 * h)
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        pp = float(density_xut(u, x + e, t))
        pm = float(density_xut(u, x - e, t))
        res += u[k] * (pp - pm) / (2.0 * h)
        res -= viscosity * (pp - 2.0 * p0 + pm) / (h * h)
    if drift_field is not None:
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            cp = float(np.asarray(drift_field(x, u + e, t)).reshape(3)[k]) \
                * float(density_xut(u + e, x, t))
            cm = float(np.asarray(drift_field(x, u - e, t)).reshape(3)[k]) \
                * float(density_xut(u - e, x, t))
            res -= (cp - cm) / (2.0 * h)
    return res


def check_pde_residual(density_xut: Callable, point, viscosity: float,
                       h: float = 1e-3, tol: float = 1e-4,
                       drift_field: Optional[Callable] = None,
                       boundary_distance: Optional[Callable] = None) -> CheckResult:
    """Residual at h and h/2 with the implied convergence order; assertable.

    For a true solution the residual is pure stencil error, O(h^2), so the
    implied order sits near 2; for a non-solution it stalls near the defect.
    boundary_distance(u) lets callers flag points within 2h of a known jump
    surface, where stencils are meaningless.
    """
    u = np.asarray(point[0], dtype=float)
    if boundary_distance is not None:
        d = float(boundary_distance(u))
        if d < 2.0 * h:
            warnings.warn(
                f"residual point is {d:.2e} from a jump surface (< 2h); the "
                "stencil is unreliable there", RuntimeWarning, stacklevel=2)
    r_h = pde_residual(density_xut, point, viscosity, h, drift_field)
    r_h2 = pde_residual(density_xut, point, viscosity, 0.5 * h, drift_field)
    if abs(r_h2) > 0 and abs(r_h) > 0:
        order = float(np.log2(abs(r_h) / abs(r_h2)))
    else:
        order = np.inf
    return CheckResult(name="pde_residual", value=abs(r_h2), tolerance=tol,
                       passed=abs(r_h2) <= tol, assertable=True,
                       details={"residual_h": r_h, "residual_h_half": r_h2,
                                "implied_order": order, "h": h})


def check_moment_identity(density_xu: Callable, drift_field: Callable, x,
                          t: float, plan: VelocityQuadrature, h: float = 1e-3,
                          tol: float = 1e-6) -> CheckResult:
    """Second-moment balance: div_x int drift p du = -dd_x : int u u p du.

    density_xu(u, x) -> (M,) at fixed t; drift_field(x, u, t) -> (M, 3).
    Both sides are formed with central stencils in x and compared.
    """
    x = np.asarray(x, dtype=float)

    def drift_moment(xx):
        def f(u, k):
            c = np.asarray(drift_field(xx, u, t), dtype=float)
            return c[:, k] * np.asarray(density_xu(u, xx), dtype=float)
        return np.array([plan.integrate(lambda u, k=k: f(u, k))
                         for k in range(3)])

    def uu_moment(xx):
        def f(u, i, j):
            return u[:, i] * u[:, j] * np.asarray(density_xu(u, xx), dtype=float)
        return np.array([[plan.integrate(lambda u, i=i, j=j: f(u, i, j))
                          for j in range(3)] for i in range(3)])

    lhs = 0.0
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        lhs += (drift_moment(x + e)[k] - drift_moment(x - e)[k]) / (2.0 * h)

    m0 = uu_moment(x)
    rhs = 0.0
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        rhs += (uu_moment(x + e)[i, i] - 2.0 * m0[i, i]
                + uu_moment(x - e)[i, i]) / (h * h)
    for i in range(3):
        for j in range(3):
            if i == j:
                continue
            ei = np.zeros(3)
            ej = np.zeros(3)
            ei[i] = h
            ej[j] = h
            rhs += (uu_moment(x + ei + ej)[i, j] - uu_moment(x + ei - ej)[i, j]
                    - uu_moment(x - ei + ej)[i, j]
                    + uu_moment(x - ei - ej)[i, j]) / (4.0 * h * h)
    rhs = -rhs
    return CheckResult(name="moment_identity", value=abs(lhs - rhs),
                       tolerance=tol, passed=abs(lhs - rhs) <= tol,
                       assertable=True,
                       details={"lhs": lhs, "rhs": rhs, "h": h})


def check_positivity_bound(example, u_grid: np.ndarray, x_grid: np.ndarray,
                           tol: float = 0.0) -> CheckResult:
    """Audit of the example's pointwise sign; diagnostic, never clamps.

    Reports the region minimum of G(u) |u1 u2 u3| (the sharp envelope-bound
    threshold), the largest |envelope| over x_grid, and the minimum of the
    initial density over the product grid with its argmin. The constructed
    example dips negative; that is reported, not asserted away.
    """
    u_grid = np.asarray(u_grid, dtype=float)
    x_grid = np.asarray(x_grid, dtype=float)
    if x_grid.ndim == 1:
        x_grid = x_grid[None, :]
    g = np.asarray(example.gaussian_component(u_grid), dtype=float)
    r = np.asarray(example.reciprocal_component(u_grid), dtype=float)
    in_region = r != 0.0
    prod = np.abs(u_grid[:, 0] * u_grid[:, 1] * u_grid[:, 2])
    threshold = float(np.min(g[in_region] * prod[in_region])) \
        if np.any(in_region) else np.inf
    env = np.asarray(example.envelope(x_grid), dtype=float)
    env_max = float(np.max(np.abs(env)))

    min_p = np.inf
    argmin = (None, None)
    for i, e in enumerate(env):
        vals = g + r * e
        j = int(np.argmin(vals))
        if vals[j] < min_p:
            min_p = float(vals[j])
            argmin = (u_grid[j].tolist(), x_grid[i].tolist())
    return CheckResult(
        name="positivity_bound", value=min_p, tolerance=tol,
        passed=True, assertable=False,
        details={"envelope_bound_threshold": threshold,
                 "envelope_max_abs": env_max,
                 "min_initial_density": min_p,
                 "argmin_velocity": argmin[0], "argmin_position": argmin[1],
                 "bound_satisfied": env_max <= threshold})


def assemble_report(results) -> VerificationReport:
    return VerificationReport(results=list(results))
