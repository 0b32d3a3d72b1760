# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled lane for the hot showcase-field kernels.

Scalar loops over contiguous batches; formulas and constants mirror
kernels/reference.py exactly and the equivalence tests hold both lanes
together. Edit the reference lane first, then this file.
"""

import numpy as np

from libc.math cimport cos, exp, fabs, sin

BACKEND = "compiled"

cdef double PI = 3.141592653589793
cdef double _ESCALE = 1.0 / 36.0 * (2.0 * PI) ** -1.5
cdef double _GNORM = (2.0 * PI) ** -1.5
cdef double IV1 = 1.5, IV2 = 1.0, IV3 = 2.0 / 3.0
cdef double LO1 = 0.25, LO2 = 0.25, LO3 = 2.0 / 7.0
cdef double HI1 = 1.0, HI2 = 2.0, HI3 = 3.0

# Python-visible mirrors; the lockstep test compares them against the
# reference lane.
ENVELOPE_SCALE = _ESCALE
GAUSSIAN_NORM = _GNORM


cdef inline double _envelope_one(double x1, double x2, double x3) nogil:
    cdef double r2 = x1 * x1 + x2 * x2 + x3 * x3
    cdef double ripple = (30.0 * (x1 - 1.0) / (30.0 + 3.0 * x2 * x2 + 2.0 * x3 * x3)
                          * exp(-x1 * x1 / 3.0 + sin(x1 + x2 + x3) / 3.0)
                          + cos(x2 + x3) / (r2 + 1.0))
    return _ESCALE * (ripple + 2.0 * exp(-r2 / 200.0))


cdef inline double _gaussian_one(double u1, double u2, double u3) nogil:
    return _GNORM * exp(-0.5 * (IV1 * u1 * u1 + IV2 * u2 * u2 + IV3 * u3 * u3))


cdef inline double _reciprocal_one(double u1, double u2, double u3) nogil:
    cdef double a1 = fabs(u1), a2 = fabs(u2), a3 = fabs(u3)
    if a1 < LO1 or a1 > HI1 or a2 < LO2 or a2 > HI2 or a3 < LO3 or a3 > HI3:
        return 0.0
    return 1.0 / (u1 * u2 * u3)


def _flatten(points):
    """(flat (N, 3) contiguous view, leading shape) of a (..., 3) batch."""
    arr = np.ascontiguousarray(points, dtype=np.float64)
    shape = tuple(arr.shape)
    nd = len(shape)
    if nd == 0 or shape[nd - 1] != 3:
        raise ValueError(f"expected a (..., 3) batch, got shape {shape}")
    return arr.reshape(-1, 3), shape[:nd - 1]


def envelope(points):
    """Spatial envelope E at (..., 3) points, values (...)."""
    flat, lead = _flatten(points)
    cdef double[:, ::1] p = flat
    cdef Py_ssize_t n = p.shape[0], i
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    with nogil:
        for i in range(n):
            out[i] = _envelope_one(p[i, 0], p[i, 1], p[i, 2])
    return out_arr.reshape(lead)


def velocity_gaussian(points):
    """Gaussian factor G at (..., 3) velocities, values (...)."""
    flat, lead = _flatten(points)
    cdef double[:, ::1] p = flat
    cdef Py_ssize_t n = p.shape[0], i
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    with nogil:
        for i in range(n):
            out[i] = _gaussian_one(p[i, 0], p[i, 1], p[i, 2])
    return out_arr.reshape(lead)


def reciprocal_factor(points):
    """Reciprocal factor R: 1/(u1 u2 u3) on the region, 0 outside."""
    flat, lead = _flatten(points)
    cdef double[:, ::1] p = flat
    cdef Py_ssize_t n = p.shape[0], i
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    with nogil:
        for i in range(n):
            out[i] = _reciprocal_one(p[i, 0], p[i, 1], p[i, 2])
    return out_arr.reshape(lead)


def initial_density(velocities, positions):
    """p0 = G(u) + R(u) E(x); a single position row broadcasts over u."""
    uflat, lead = _flatten(velocities)
    xflat, xlead = _flatten(positions)
    if xflat.shape[0] == 1 and uflat.shape[0] != 1:
        xflat = np.ascontiguousarray(
            np.broadcast_to(xflat, uflat.shape))
    elif uflat.shape[0] != xflat.shape[0]:
        raise ValueError(
            f"velocity and position batches must align, got "
            f"{uflat.shape[0]} and {xflat.shape[0]} rows")
    cdef double[:, ::1] u = uflat
    cdef double[:, ::1] x = xflat
    cdef Py_ssize_t n = u.shape[0], i
    cdef double r
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    with nogil:
        for i in range(n):
            r = _reciprocal_one(u[i, 0], u[i, 1], u[i, 2])
            out[i] = _gaussian_one(u[i, 0], u[i, 1], u[i, 2])
            if r != 0.0:
                out[i] += r * _envelope_one(x[i, 0], x[i, 1], x[i, 2])
    return out_arr.reshape(lead)
