"""Pure numpy lane for the hot showcase-field kernels.

These four maps dominate figure emission and Monte-Carlo weighting, so they
also exist as a compiled twin in _fast.pyx; the constants below are mirrored
there and pinned by tests. Keep both lanes in lockstep.

The initial density is  p0(u; x) = G(u) + R(u) * E(x)  with
  G  a centred Gaussian with per-axis variances (2/3, 1, 3/2), unit
     determinant, so G(0) = (2 pi)^{-3/2},
  R  the reciprocal 1/(u1 u2 u3) on a closed sign-symmetric union of boxes
     and 0 elsewhere (odd under every sign flip, so it integrates to zero),
  E  a smooth spatial envelope, bounded, with a wide Gaussian background
     and localized anisotropic ripples.
"""

from __future__ import annotations

import numpy as np

BACKEND = "reference"

# Envelope prefactor and background scale.
ENVELOPE_SCALE = 1.0 / 36.0 * (2.0 * np.pi) ** -1.5
# Gaussian factor normalizer: determinant of diag(2/3, 1, 3/2) is 1.
GAUSSIAN_NORM = (2.0 * np.pi) ** -1.5
# Inverse variances of the Gaussian factor.
INV_VAR = (1.5, 1.0, 2.0 / 3.0)
# Closed support intervals for |u_i| in the reciprocal factor, per axis.
REGION_LO = (0.25, 0.25, 2.0 / 7.0)
REGION_HI = (1.0, 2.0, 3.0)


def envelope(points: np.ndarray) -> np.ndarray:
    """Spatial envelope E at (N, 3) points, values (N,)."""
    p = np.asarray(points, dtype=float)
    x1, x2, x3 = p[..., 0], p[..., 1], p[..., 2]
    r2 = x1 * x1 + x2 * x2 + x3 * x3
    ripple = (30.0 * (x1 - 1.0) / (30.0 + 3.0 * x2 * x2 + 2.0 * x3 * x3)
              * np.exp(-x1 * x1 / 3.0 + np.sin(x1 + x2 + x3) / 3.0)
              + np.cos(x2 + x3) / (r2 + 1.0))
    return ENVELOPE_SCALE * (ripple + 2.0 * np.exp(-r2 / 200.0))


def velocity_gaussian(points: np.ndarray) -> np.ndarray:
    """Gaussian factor G at (N, 3) velocities, values (N,)."""
    p = np.asarray(points, dtype=float)
    q = (INV_VAR[0] * p[..., 0] ** 2 + INV_VAR[1] * p[..., 1] ** 2
         + INV_VAR[2] * p[..., 2] ** 2)
    return GAUSSIAN_NORM * np.exp(-0.5 * q)


def region_member(points: np.ndarray) -> np.ndarray:
    """Boolean membership of the closed support region, (N,) for (N, 3)."""
    p = np.asarray(points, dtype=float)
    a = np.abs(p)
    inside = np.ones(p.shape[:-1], dtype=bool)
    for k in range(3):
        inside &= (a[..., k] >= REGION_LO[k]) & (a[..., k] <= REGION_HI[k])
    return inside


def reciprocal_factor(points: np.ndarray) -> np.ndarray:
    """Reciprocal factor R: 1/(u1 u2 u3) on the region, 0 outside."""
    p = np.asarray(points, dtype=float)
    inside = region_member(p)
    prod = p[..., 0] * p[..., 1] * p[..., 2]
    out = np.zeros(p.shape[:-1], dtype=float)
    np.divide(1.0, prod, out=out, where=inside)
    return out


def initial_density(velocities: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """p0 = G(u) + R(u) E(x) for aligned (N, 3) velocity/position batches."""
    return (velocity_gaussian(velocities)
            + reciprocal_factor(velocities) * envelope(positions))
