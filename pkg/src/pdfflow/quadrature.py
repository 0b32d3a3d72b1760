"""Quadrature rules and difference stencils shared across the package.

Provides Gauss-Legendre and Gauss-Hermite rules, tensor Gaussian
expectations, central-difference stencils, and the spherical quadrature for
the singular pressure-drift integral

    integral over R^3 of  (y - x) / (4 pi |y - x|^3) * S(y) dy,

where S is the double divergence of a decaying matrix field. Substituting
y = x + r*omega cancels the kernel singularity exactly: the volume factor
r^2 dr dOmega against |y-x|^-2 leaves the bounded integrand omega*S/(4 pi).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

_EYE3 = np.eye(3)


def gauss_legendre_rule(n: int, a: float, b: float):
    """Nodes and weights integrating over [a, b], exact to degree 2n-1."""
    if n < 1:
        raise ValueError(f"need at least one node, got n={n}")
    if not (np.isfinite(a) and np.isfinite(b)):
        raise ValueError(f"interval endpoints must be finite, got [{a}, {b}]")
    x, w = np.polynomial.legendre.leggauss(n)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return mid + half * x, half * w


def gauss_hermite_rule(n: int):
    """Physicists' Hermite nodes and weights: sum w f(x) ~ int f e^{-x^2}."""
    if n < 1:
        raise ValueError(f"need at least one node, got n={n}")
    return np.polynomial.hermite.hermgauss(n)


def gauss_hermite_expectation(f, mean, variance, order: int = 20) -> float:
    """E[f(Z)] for Z normal with independent components.

    mean is a d-vector, variance a scalar or d-vector of per-component
    variances, f maps (..., d) arrays to (...) values. Uses the tensor
    product rule E[g(Z)] = pi^{-d/2} sum_k w_k g(mean + sqrt(2 var) x_k).
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    d = mean.shape[0]
    variance = np.broadcast_to(np.asarray(variance, dtype=float), (d,))
    if np.any(variance < 0):
        raise ValueError(f"variances must be nonnegative, got {variance}")
    x, w = gauss_hermite_rule(order)
    axes = np.meshgrid(*([x] * d), indexing="ij")
    nodes = np.stack([ax.reshape(-1) for ax in axes], axis=-1)
    wgt = np.ones(len(nodes))
    for g in np.meshgrid(*([w] * d), indexing="ij"):
        wgt *= g.reshape(-1)
    pts = mean[None, :] + np.sqrt(2.0 * variance)[None, :] * nodes
    vals = np.asarray(f(pts), dtype=float)
    return float(np.dot(wgt, vals) * np.pi ** (-d / 2.0))


def central_difference(f, point, h: float, kind: str = "grad"):
    """Second-order central stencils of f at point.

    kind 'grad' returns the gradient, 'laplacian' the sum of pure second
    derivatives, 'second_mixed' the full symmetric second-derivative matrix.
    f maps a d-vector to a scalar or an array; derivative axes are appended.
    """
    point = np.asarray(point, dtype=float)
    if h <= 0:
        raise ValueError(f"step must be positive, got h={h}")
    d = point.shape[0]
    eye = np.eye(d)
    if kind == "grad":
        cols = [(np.asarray(f(point + h * eye[k])) - np.asarray(f(point - h * eye[k])))
                / (2.0 * h) for k in range(d)]
        return np.stack(cols, axis=-1)
    if kind == "laplacian":
        f0 = np.asarray(f(point), dtype=float)
        acc = np.zeros_like(f0)
        for k in range(d):
            acc = acc + (np.asarray(f(point + h * eye[k])) - 2.0 * f0
                         + np.asarray(f(point - h * eye[k]))) / (h * h)
        return acc
    if kind == "second_mixed":
        f0 = np.asarray(f(point), dtype=float)
        out = np.zeros(f0.shape + (d, d))
        for j in range(d):
            out[..., j, j] = (np.asarray(f(point + h * eye[j])) - 2.0 * f0
                              + np.asarray(f(point - h * eye[j]))) / (h * h)
        for j in range(d):
            for k in range(j + 1, d):
                m = (np.asarray(f(point + h * (eye[j] + eye[k])))
                     - np.asarray(f(point + h * (eye[j] - eye[k])))
                     - np.asarray(f(point - h * (eye[j] - eye[k])))
                     + np.asarray(f(point - h * (eye[j] + eye[k])))) / (4.0 * h * h)
                out[..., j, k] = m
                out[..., k, j] = m
        return out
    raise ValueError(f"unknown stencil kind {kind!r}")


@dataclass(frozen=True)
class QuadratureConfig:
    """Knobs for the integral and stencil machinery.

    gl_order drives box rules, gh_order Gaussian expectations. The spherical
    rule uses radial_nodes Gauss-Legendre points on (0, truncation_radius],
    polar_nodes Gauss-Legendre points in cos(theta), and azimuthal_nodes
    equispaced (trapezoid, exact for periodic smooth integrands) points in
    phi. fd_step is the stencil step for the double divergence of the matrix
    field; verify_truncation re-runs at twice the radius and warns when the
    result moves by more than tolerance.
    """

    gl_order: int = 16
    gh_order: int = 20
    radial_nodes: int = 64
    polar_nodes: int = 32
    azimuthal_nodes: int = 64
    truncation_radius: float = 12.0
    tolerance: float = 1e-6
    fd_step: float = 1e-3
    verify_truncation: bool = False

    def __post_init__(self):
        for name in ("gl_order", "gh_order", "radial_nodes", "polar_nodes",
                     "azimuthal_nodes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1, got {getattr(self, name)}")
        if self.truncation_radius <= 0:
            raise ValueError(
                f"truncation_radius must be positive, got {self.truncation_radius}")
        if self.fd_step <= 0:
            raise ValueError(f"fd_step must be positive, got {self.fd_step}")


def _sphere_nodes(config: QuadratureConfig):
    """Product nodes (r, omega) and weights for the desingularized integral."""
    r, rw = gauss_legendre_rule(config.radial_nodes, 0.0, config.truncation_radius)
    ct, cw = np.polynomial.legendre.leggauss(config.polar_nodes)
    st = np.sqrt(1.0 - ct * ct)
    nphi = config.azimuthal_nodes
    phi = 2.0 * np.pi * np.arange(nphi) / nphi
    pw = 2.0 * np.pi / nphi
    omega = np.stack([
        np.outer(st, np.cos(phi)),
        np.outer(st, np.sin(phi)),
        np.outer(ct, np.ones(nphi)),
    ], axis=-1)                                      # (polar, azimuthal, 3)
    nodes = (r[:, None, None, None] * omega[None]).reshape(-1, 3)
    weights = np.broadcast_to(
        rw[:, None, None] * cw[None, :, None] * pw,
        (config.radial_nodes, config.polar_nodes, nphi)).reshape(-1)
    dirs = np.broadcast_to(
        omega[None], (config.radial_nodes,) + omega.shape).reshape(-1, 3)
    return nodes, dirs, weights


def _double_divergence(T, points, h: float):
    """sum_jk d_j d_k T^jk at each point, T batched (N,3)->(N,3,3).

    Constant fields difference to exact zeros: every stencil subtracts
    identical floats, so no quadrature noise leaks into the integral.
    """
    points = np.asarray(points, dtype=float)
    T0 = np.asarray(T(points), dtype=float)
    if T0.shape != points.shape[:1] + (3, 3):
        raise ValueError(
            f"matrix field returned shape {T0.shape}, expected {(len(points), 3, 3)}")
    s = np.zeros(len(points))
    for j in range(3):
        tp = np.asarray(T(points + h * _EYE3[j]))[:, j, j]
        tm = np.asarray(T(points - h * _EYE3[j]))[:, j, j]
        s += (tp - 2.0 * T0[:, j, j] + tm) / (h * h)
    for j in range(3):
        for k in range(j + 1, 3):
            step_j, step_k = h * _EYE3[j], h * _EYE3[k]
            m = (np.asarray(T(points + step_j + step_k))[:, j, k]
                 - np.asarray(T(points + step_j - step_k))[:, j, k]
                 - np.asarray(T(points - step_j + step_k))[:, j, k]
                 + np.asarray(T(points - step_j - step_k))[:, j, k]) / (4.0 * h * h)
            s += 2.0 * m                             # T symmetric in (j, k)
    return s


def singular_kernel_integral(T, x, config: QuadratureConfig | None = None):
    """Integral of (y-x)/(4 pi |y-x|^3) times the double divergence of T.

    T maps (N, 3) points y to (N, 3, 3) symmetric matrices and must decay
    fast enough that the truncated integral converges. Returns a 3-vector.
    """
    config = config or QuadratureConfig()
    x = np.asarray(x, dtype=float)
    if x.shape != (3,):
        raise ValueError(f"x must be a 3-vector, got shape {x.shape}")

    def run(cfg: QuadratureConfig):
        offsets, dirs, weights = _sphere_nodes(cfg)
        # non-finite field values surface as the error below, not as numpy
        # warnings from the intermediate stencil arithmetic
        with np.errstate(invalid="ignore", over="ignore"):
            s = _double_divergence(T, x[None, :] + offsets, cfg.fd_step)
        if not np.all(np.isfinite(s)):
            bad = int(np.argmax(~np.isfinite(s)))
            raise FloatingPointError(
                f"matrix field produced a non-finite double divergence at "
                f"y={x + offsets[bad]}")
        return (weights[:, None] * dirs * s[:, None]).sum(axis=0) / (4.0 * np.pi)

    result = run(config)
    if config.verify_truncation:
        wider = run(replace(config, verify_truncation=False,
                            truncation_radius=2.0 * config.truncation_radius))
        drift = np.max(np.abs(wider - result))
        if drift > config.tolerance:
            warnings.warn(
                f"doubling the truncation radius moved the integral by {drift:.3e} "
                f"(tolerance {config.tolerance:.1e}); the field may decay too slowly",
                RuntimeWarning, stacklevel=2)
    return result
