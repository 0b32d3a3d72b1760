"""Conditional statistics of a velocity field and the drift coefficients
they induce in the transport equation for the one-point velocity density.

The model data are the conditional mean increment rho(x, y, u, t) of the
velocity between points x and y given velocity u at x, and the conditional
covariance sigma(x, y, u, t). From these the equation's coefficients follow:

  mean_gradient        M[i, k] = d rho^i / d y^k  at y = x        (3, 3)
  increment_laplacian  L[i]    = Laplacian_y rho^i at y = x       (3,)
  pressure_drift       P[i]    = singular-kernel integral of the
                                 double divergence of
                                 sigma + b (x) b,  b = rho + u    (3,)
  drift                C[i]    = nu * d M[i, k] / d x^k
                                 - nu * L[i] + P[i]               (3,)

Derivatives are second-order central stencils with step
h = 1e-4 * (1 + |x| + |u|) unless overridden. A statistics object may
declare its mean increment identically zero, which short-circuits the
stencils to exact zeros.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import quadrature
from .quadrature import QuadratureConfig, central_difference, singular_kernel_integral

REGIMES = ("general", "weakly_homogeneous", "weakly_isotropic", "inviscid")


@dataclass
class ConditionalStatistics:
    """Two-point conditional statistics of the velocity field.

    mean_increment(x, y, u, t) maps a base point x (3,), probe points y
    (..., 3), conditioning velocity u (3,) and time t to (..., 3) values and
    must vanish at y = x. covariance(x, y, u, t) maps the same arguments to
    (..., 3, 3) symmetric matrices. claimed_class is an advisory tag from
    REGIMES checked against measurements by classify_flow, never trusted.
    mean_increment_is_zero marks rho == 0 exactly.
    """

    mean_increment: Callable
    covariance: Callable
    claimed_class: str = "general"
    mean_increment_is_zero: bool = False
    name: str = ""

    def __post_init__(self):
        if self.claimed_class not in REGIMES:
            raise ValueError(
                f"claimed_class must be one of {REGIMES}, got {self.claimed_class!r}")

    def validate(self, sample_points, tol: float = 1e-10) -> dict:
        """Sampled sanity report: rho(x, x) = 0, sigma symmetric and PSD.

        sample_points is an iterable of (x, u, t). Reports worst violations;
        never raises, because synthetic test statistics may deliberately
        break positivity.
        """
        worst_anchor = 0.0
        worst_asym = 0.0
        min_eig = math.inf
        for x, u, t in sample_points:
            x = np.asarray(x, dtype=float)
            rho = np.asarray(self.mean_increment(x, x.copy(), u, t), dtype=float)
            worst_anchor = max(worst_anchor, float(np.max(np.abs(rho))))
            # probe both signs of the offset so odd covariance structure
            # cannot hide from the positivity check
            for off in (np.zeros(3), np.array([0.3, -0.7, 0.2]),
                        np.array([-0.3, 0.7, -0.2])):
                sig = np.asarray(self.covariance(x, x + off, u, t), dtype=float)
                worst_asym = max(worst_asym,
                                 float(np.max(np.abs(sig - sig.swapaxes(-1, -2)))))
                sym = 0.5 * (sig + sig.swapaxes(-1, -2))
                min_eig = min(min_eig, float(np.linalg.eigvalsh(sym).min()))
        return {
            "anchor_max_abs": worst_anchor,
            "anchor_ok": worst_anchor <= tol,
            "covariance_max_asymmetry": worst_asym,
            "covariance_symmetric": worst_asym <= tol,
            "covariance_min_eigenvalue": min_eig,
            "covariance_psd": min_eig >= -tol,
        }


@dataclass(frozen=True)
class CoefficientField:
    """Drift coefficients of the density equation at one (x, u, t)."""

    x: np.ndarray
    u: np.ndarray
    t: float
    viscosity: float
    mean_gradient: np.ndarray        # (3, 3)
    increment_laplacian: np.ndarray  # (3,)
    pressure_drift: np.ndarray       # (3,)
    drift: np.ndarray                # (3,)


def default_step(x, u) -> float:
    """Relative stencil step for coefficient derivatives."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    return 1e-4 * (1.0 + float(np.linalg.norm(x)) + float(np.linalg.norm(u)))


def conditional_mean(stats: ConditionalStatistics, x, y, u, t):
    """Conditional mean velocity at y given velocity u at x: rho + u."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    u = np.asarray(u, dtype=float)
    if stats.mean_increment_is_zero:
        return np.broadcast_to(u, y.shape).copy()
    rho = np.asarray(stats.mean_increment(x, y, u, t), dtype=float)
    return rho + u


def mean_gradient(stats: ConditionalStatistics, x, u, t,
                  h: Optional[float] = None) -> np.ndarray:
    """Probe-point gradient of the mean increment at y = x, shape (3, 3)."""
    x = np.asarray(x, dtype=float)
    if stats.mean_increment_is_zero:
        return np.zeros((3, 3))
    h = default_step(x, u) if h is None else float(h)
    return central_difference(
        lambda y: np.asarray(stats.mean_increment(x, y, u, t), dtype=float),
        x, h, kind="grad")


def increment_laplacian(stats: ConditionalStatistics, x, u, t,
                        h: Optional[float] = None) -> np.ndarray:
    """Probe-point Laplacian of the mean increment at y = x, shape (3,)."""
    x = np.asarray(x, dtype=float)
    if stats.mean_increment_is_zero:
        return np.zeros(3)
    h = default_step(x, u) if h is None else float(h)
    return central_difference(
        lambda y: np.asarray(stats.mean_increment(x, y, u, t), dtype=float),
        x, h, kind="laplacian")


def second_moment_field(stats: ConditionalStatistics, x, u, t) -> Callable:
    """The matrix field sigma + b (x) b whose double divergence is integrated."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)

    def T(y):
        y = np.asarray(y, dtype=float)
        sig = np.asarray(stats.covariance(x, y, u, t), dtype=float)
        b = conditional_mean(stats, x, y, u, t)
        return sig + b[..., :, None] * b[..., None, :]

    return T


def pressure_drift(stats: ConditionalStatistics, x, u, t,
                   config: Optional[QuadratureConfig] = None) -> np.ndarray:
    """Nonlocal drift from the pressure term, a singular-kernel integral."""
    return singular_kernel_integral(second_moment_field(stats, x, u, t),
                                    x, config or QuadratureConfig())


def drift_divergence_terms(stats: ConditionalStatistics, x, u, t,
                           h: Optional[float] = None) -> np.ndarray:
    """d mean_gradient[i, k] / d x^k summed over k, shape (3,)."""
    x = np.asarray(x, dtype=float)
    if stats.mean_increment_is_zero:
        return np.zeros(3)
    h = default_step(x, u) if h is None else float(h)
    out = np.zeros(3)
    eye = np.eye(3)
    for k in range(3):
        gp = mean_gradient(stats, x + h * eye[k], u, t, h=h)
        gm = mean_gradient(stats, x - h * eye[k], u, t, h=h)
        out += (gp[:, k] - gm[:, k]) / (2.0 * h)
    return out


def drift_vector(stats: ConditionalStatistics, x, u, t, viscosity: float,
                 config: Optional[QuadratureConfig] = None,
                 h: Optional[float] = None) -> np.ndarray:
    """Full drift C = nu * div_x(mean_gradient) - nu * laplacian + pressure."""
    if viscosity < 0:
        raise ValueError(f"viscosity must be nonnegative, got {viscosity}")
    p = pressure_drift(stats, x, u, t, config)
    if viscosity == 0.0:
        return p
    return (viscosity * drift_divergence_terms(stats, x, u, t, h)
            - viscosity * increment_laplacian(stats, x, u, t, h) + p)


def coefficient_bundle(stats: ConditionalStatistics, x, u, t, viscosity: float,
                       config: Optional[QuadratureConfig] = None,
                       h: Optional[float] = None) -> CoefficientField:
    """All coefficients at one point, sharing stencil settings."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    grad = mean_gradient(stats, x, u, t, h)
    lap = increment_laplacian(stats, x, u, t, h)
    press = pressure_drift(stats, x, u, t, config)
    if viscosity == 0.0:
        drift = press.copy()
    else:
        drift = (viscosity * drift_divergence_terms(stats, x, u, t, h)
                 - viscosity * lap + press)
    return CoefficientField(x=x, u=u, t=float(t), viscosity=float(viscosity),
                            mean_gradient=grad, increment_laplacian=lap,
                            pressure_drift=press, drift=drift)


def diffusion_matrix(gradient: np.ndarray, viscosity: float) -> dict:
    """Second-order coefficient matrix over (velocity, position) variables.

    Blocks: zero velocity-velocity, nu * gradient in both off-diagonal
    positions, nu * identity in position-position. Reports symmetry
    (max |D - D^T| < 1e-12) and positive semi-definiteness of the symmetric
    part (eigenvalues >= -1e-10); the matrix is typically indefinite.
    """
    g = np.asarray(gradient, dtype=float)
    if g.shape != (3, 3):
        raise ValueError(f"gradient must be (3, 3), got {g.shape}")
    D = np.zeros((6, 6))
    D[:3, 3:] = viscosity * g
    D[3:, :3] = viscosity * g
    D[3:, 3:] = viscosity * np.eye(3)
    asym = float(np.max(np.abs(D - D.T)))
    eigs = np.linalg.eigvalsh(0.5 * (D + D.T))
    return {
        "matrix": D,
        "symmetric": asym < 1e-12,
        "max_asymmetry": asym,
        "eigenvalues": eigs,
        "min_eigenvalue": float(eigs.min()),
        "positive_semidefinite": bool(eigs.min() >= -1e-10),
    }


@dataclass(frozen=True)
class FlowClassReport:
    """Measured regime diagnostics for a statistics object."""

    claimed_class: str
    measured_class: str
    consistent: bool
    homogeneity_defect: float      # max |mean_gradient| over samples
    isotropy_defect: float         # max deviation under sampled rotations
    laplacian_x_variation: float   # max |L(x1) - L(x2)| over sample pairs
    divergence_defect: float       # max |div_y rho| over samples
    gradient_trace_defect: float   # max |trace mean_gradient|
    laplacian_trace_defect: float  # max |sum_i d^2 rho^i / dy^i dy^k|
    lipschitz_probe: float         # largest sampled difference ratio, not a proof
    details: dict = field(default_factory=dict)


def _rotation_samples(n: int, seed: int = 7):
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    for _ in range(n):
        q, r = np.linalg.qr(gen.standard_normal((3, 3)))
        yield q * np.sign(np.diag(r))[None, :]


def classify_flow(stats: ConditionalStatistics, sample_points,
                  tol: float = 1e-6, h: Optional[float] = None) -> FlowClassReport:
    """Measure the regime of a statistics object on sampled (x, u, t).

    Homogeneity: the mean-increment gradient vanishes. Isotropy: rho and
    sigma are invariant under rotations of the probe offset and the
    increment Laplacian does not depend on x. Divergence diagnostics probe
    the incompressibility identities div_y rho = 0, trace of the gradient
    zero, and the contracted Laplacian identity. The Lipschitz column is a
    sampled probe of growth, reported as evidence only.
    """
    pts = [(np.asarray(x, dtype=float), np.asarray(u, dtype=float), float(t))
           for x, u, t in sample_points]
    if not pts:
        raise ValueError("need at least one sample point")
    # order-one offsets: covariances shaped like z^4 exp(-z^2) are flat near
    # the anchor, and short probes would misread them as isotropic
    offsets = [np.array([1.4, 1.0, -0.8]), np.array([-0.9, 1.2, 1.6])]
    rotations = list(_rotation_samples(3))

    homog = 0.0
    iso = 0.0
    div_defect = 0.0
    trace_defect = 0.0
    lap_trace = 0.0
    lip = 0.0
    laps = []
    for x, u, t in pts:
        hh = default_step(x, u) if h is None else float(h)
        grad = mean_gradient(stats, x, u, t, h=hh)
        homog = max(homog, float(np.max(np.abs(grad))))
        trace_defect = max(trace_defect, abs(float(np.trace(grad))))
        lap = increment_laplacian(stats, x, u, t, h=hh)
        laps.append((x, u, t, lap))
        if stats.mean_increment_is_zero:
            hess_trace = np.zeros(3)
        else:
            hess = central_difference(
                lambda y: np.asarray(stats.mean_increment(x, y, u, t), dtype=float),
                x, hh, kind="second_mixed")          # (3, 3, 3): component, j, k
            hess_trace = np.einsum("iik->k", hess)
        lap_trace = max(lap_trace, float(np.max(np.abs(hess_trace))))
        for off in offsets:
            y = x + off
            if stats.mean_increment_is_zero:
                div = 0.0
            else:
                jac = central_difference(
                    lambda z: np.asarray(stats.mean_increment(x, z, u, t), dtype=float),
                    y, hh, kind="grad")
                div = abs(float(np.trace(jac)))
            div_defect = max(div_defect, div)
            rho0 = np.asarray(stats.mean_increment(x, y, u, t), dtype=float) \
                if not stats.mean_increment_is_zero else np.zeros(3)
            sig0 = np.asarray(stats.covariance(x, y, u, t), dtype=float)
            for rot in rotations:
                yr = x + rot @ off
                rhor = np.asarray(stats.mean_increment(x, yr, u, t), dtype=float) \
                    if not stats.mean_increment_is_zero else np.zeros(3)
                sigr = np.asarray(stats.covariance(x, yr, u, t), dtype=float)
                iso = max(iso, float(np.max(np.abs(rhor - rho0))),
                          float(np.max(np.abs(sigr - sig0))))
    for i in range(len(laps)):
        for j in range(i + 1, len(laps)):
            xi, ui, ti, li = laps[i]
            xj, uj, tj, lj = laps[j]
            if np.allclose(ui, uj) and ti == tj:
                iso = max(iso, float(np.max(np.abs(li - lj))))
            dist = float(np.linalg.norm(xi - xj) + np.linalg.norm(ui - uj)
                         + abs(ti - tj))
            if dist > 1e-12:
                lip = max(lip, float(np.max(np.abs(li - lj))) / dist)

    if homog <= tol and iso <= tol:
        measured = "weakly_isotropic"
    elif homog <= tol:
        measured = "weakly_homogeneous"
    else:
        measured = "general"
    consistent = (measured == stats.claimed_class
                  or (measured == "weakly_isotropic"
                      and stats.claimed_class == "weakly_homogeneous")
                  or stats.claimed_class in ("general", "inviscid"))
    return FlowClassReport(
        claimed_class=stats.claimed_class, measured_class=measured,
        consistent=consistent, homogeneity_defect=homog, isotropy_defect=iso,
        laplacian_x_variation=max(
            (float(np.max(np.abs(li - lj)))
             for (_, ui, ti, li), (_, uj, tj, lj) in
             [(laps[i], laps[j]) for i in range(len(laps))
              for j in range(i + 1, len(laps))]
             if np.allclose(ui, uj) and ti == tj), default=0.0),
        divergence_defect=div_defect, gradient_trace_defect=trace_defect,
        laplacian_trace_defect=lap_trace, lipschitz_probe=lip,
        details={"n_samples": len(pts), "tolerance": tol})


@dataclass
class FlowSpec:
    """A flow regime bundled with whatever fields drive its solvers.

    statistics feeds the coefficient machinery; drift_field(x, u, t) is the
    directly evaluable drift used by the Monte-Carlo and characteristic
    solvers (deriving it from statistics at every path point would cost one
    singular-integral quadrature per evaluation and is rejected as
    infeasible; flows may carry both). Fields take (..., 3) position and
    velocity batches. Divergence fields return the velocity divergence of
    their drift; when omitted the solvers difference the drift.
    """

    regime: str
    viscosity: float
    statistics: Optional[ConditionalStatistics] = None
    drift_field: Optional[Callable] = None
    drift_divergence: Optional[Callable] = None
    name: str = ""

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"regime must be one of {REGIMES}, got {self.regime!r}")
        if self.viscosity < 0:
            raise ValueError(f"viscosity must be nonnegative, got {self.viscosity}")
        if self.regime == "inviscid" and self.viscosity != 0.0:
            raise ValueError("inviscid flows must have viscosity 0, got "
                             f"{self.viscosity}")
        if self.regime != "inviscid" and self.viscosity == 0.0 \
                and self.drift_field is not None:
            raise ValueError("viscosity 0 requires the inviscid regime")

    def validate(self, seed: int = 11, tol: float = 1e-10) -> dict:
        """Sampled consistency report for the directly supplied fields."""
        report = {}
        if self.drift_field is not None and self.regime == "weakly_isotropic":
            gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
            worst = 0.0
            for _ in range(5):
                u = gen.standard_normal(3)
                t = float(gen.uniform(0.0, 2.0))
                c0 = np.asarray(self.drift_field(np.zeros(3), u, t), dtype=float)
                c1 = np.asarray(self.drift_field(gen.standard_normal(3) * 3, u, t),
                                dtype=float)
                worst = max(worst, float(np.max(np.abs(c1 - c0))))
            report["drift_x_dependence"] = worst
            report["drift_ignores_x"] = worst <= tol
        return report


def numeric_drift_divergence(drift_field: Callable, h: float = 1e-5) -> Callable:
    """Velocity divergence of a drift field by central differences."""

    def div(x, u, t):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        out = np.zeros(u.shape[:-1])
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            cp = np.asarray(drift_field(x, u + e, t), dtype=float)
            cm = np.asarray(drift_field(x, u - e, t), dtype=float)
            out = out + (cp[..., k] - cm[..., k]) / (2.0 * h)
        return out

    return div


# ---------------------------------------------------------------------------
# Builtin catalog


def _zero_field(x, u, t):
    u = np.asarray(u, dtype=float)
    return np.zeros_like(u)


def _zero_divergence(x, u, t):
    u = np.asarray(u, dtype=float)
    return np.zeros(u.shape[:-1])


def builtin_statistics(name: str) -> ConditionalStatistics:
    """Catalog: zero, showcase, quadratic-rho, anisotropic-gaussian."""
    if name == "zero":
        return ConditionalStatistics(
            mean_increment=lambda x, y, u, t: np.zeros(np.shape(y)),
            covariance=lambda x, y, u, t: np.broadcast_to(
                np.eye(3), np.shape(y)[:-1] + (3, 3)).copy(),
            claimed_class="weakly_isotropic", mean_increment_is_zero=True,
            name="zero")
    if name == "showcase":
        from . import showcase
        return showcase.showcase_statistics()
    if name == "quadratic-rho":
        def rho(x, y, u, t):
            z = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
            return z * z

        return ConditionalStatistics(
            mean_increment=rho,
            covariance=lambda x, y, u, t: np.broadcast_to(
                np.eye(3), np.shape(y)[:-1] + (3, 3)).copy(),
            claimed_class="general", name="quadratic-rho")
    if name == "anisotropic-gaussian":
        # Synthetic quadrature fixture: sigma = I * (y1 - x1) exp(-|y - x|^2)
        # with zero mean increment, so the integrated matrix field is the
        # scalar Gaussian times the identity and the pressure drift has the
        # closed form (-1, 0, 0) at every base point. Not PSD pointwise,
        # deliberately; validate() reports that.
        def cov(x, y, u, t):
            z = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
            g = z[..., 0] * np.exp(-np.sum(z * z, axis=-1))
            return g[..., None, None] * np.eye(3)

        return ConditionalStatistics(
            mean_increment=lambda x, y, u, t: np.zeros(np.shape(y)),
            covariance=cov, claimed_class="weakly_homogeneous",
            mean_increment_is_zero=True, name="anisotropic-gaussian")
    raise ValueError(f"unknown statistics catalog entry {name!r}")


def builtin_flow(name: str, viscosity: Optional[float] = None) -> FlowSpec:
    """Catalog of ready flows for the solvers and the CLI.

    showcase: weakly homogeneous, nu = 1, zero drift, showcase statistics.
    zero: weakly homogeneous, nu = 1, zero drift, identity covariance.
    linear-damping: weakly isotropic, nu = 1, drift -u with divergence -3.
    inviscid-damping: inviscid, drift -u with divergence -3.
    """
    def damping(x, u, t):
        return -np.asarray(u, dtype=float)

    def damping_div(x, u, t):
        u = np.asarray(u, dtype=float)
        return np.full(u.shape[:-1], -3.0)

    if name == "showcase":
        return FlowSpec(regime="weakly_homogeneous",
                        viscosity=1.0 if viscosity is None else viscosity,
                        statistics=builtin_statistics("showcase"),
                        drift_field=_zero_field,
                        drift_divergence=_zero_divergence, name="showcase")
    if name == "zero":
        return FlowSpec(regime="weakly_homogeneous",
                        viscosity=1.0 if viscosity is None else viscosity,
                        statistics=builtin_statistics("zero"),
                        drift_field=_zero_field,
                        drift_divergence=_zero_divergence, name="zero")
    if name == "linear-damping":
        return FlowSpec(regime="weakly_isotropic",
                        viscosity=1.0 if viscosity is None else viscosity,
                        drift_field=damping, drift_divergence=damping_div,
                        name="linear-damping")
    if name == "inviscid-damping":
        if viscosity not in (None, 0.0):
            raise ValueError("inviscid-damping has viscosity 0")
        return FlowSpec(regime="inviscid", viscosity=0.0,
                        drift_field=damping, drift_divergence=damping_div,
                        name="inviscid-damping")
    raise ValueError(f"unknown flow catalog entry {name!r}")
