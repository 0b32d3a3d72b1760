"""Backward characteristics of the velocity-density equation.

A backward path runs in the auxiliary time s from 0 to t, carrying a
position X, a velocity Y, and a log weight:

    dX = -Y ds + sqrt(2 nu) dW        X(0) = x
    dY = drift(X, Y, t - s) ds        Y(0) = u
    d log_weight = div_u drift(X, Y, t - s) ds

The plus sign in the weight equation is the one that conserves mass; the
sign-discrimination test in tests/test_characteristics.py shows the minus
variant inflating the damping-flow mass by e^{6t}. For zero viscosity the
path is deterministic and integrated with the classical fourth-order
Runge-Kutta scheme; the stochastic case uses Euler-Maruyama with the drift
frozen at the pre-step state.

Noise reproducibility: a single path draws from a counter-based generator
keyed by (master_seed, path_index); ensembles process paths in fixed blocks
of PATH_BLOCK, each block keyed by (master_seed, node_index, block), always
drawing full blocks so that every path's increments are a pure function of
those integers regardless of ensemble size, batch composition, or worker
count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

PATH_BLOCK = 1024
LOG_WEIGHT_LIMIT = 700.0  # beyond this exp() overflows double precision


@dataclass(frozen=True)
class PathState:
    """One backward characteristic at auxiliary time s."""

    s: float
    position: np.ndarray   # (3,)
    velocity: np.ndarray   # (3,)
    log_weight: float

    @property
    def weight(self) -> float:
        return math.exp(self.log_weight)


@dataclass(frozen=True)
class NoiseSpec:
    """Addressable Gaussian stream: pure function of (master_seed, path_index)."""

    master_seed: int
    path_index: int = 0

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=self.master_seed,
                                     spawn_key=(self.path_index,))
        return np.random.Generator(np.random.Philox(seq))

    def increments(self, n_steps: int, dt: float) -> np.ndarray:
        """(n_steps, 3) Gaussian increments with variance dt per component."""
        if dt <= 0:
            raise ValueError(f"dt must be positive, got {dt}")
        return math.sqrt(dt) * self.generator().standard_normal((n_steps, 3))


def block_generator(master_seed: int, node_index: int, block: int) -> np.random.Generator:
    """Generator for one ensemble block; see the module docstring."""
    seq = np.random.SeedSequence(entropy=master_seed,
                                 spawn_key=(node_index, block))
    return np.random.Generator(np.random.Philox(seq))


def backward_step(state: PathState, drift: Callable, drift_divergence: Callable,
                  viscosity: float, horizon: float, dt: float,
                  increment: np.ndarray) -> PathState:
    """One Euler-Maruyama step; increment has variance dt per component."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    tau = horizon - state.s
    c = np.asarray(drift(state.position, state.velocity, tau), dtype=float)
    if not np.all(np.isfinite(c)):
        raise FloatingPointError(
            f"drift evaluated to a non-finite value at s={state.s}")
    div = float(np.asarray(drift_divergence(state.position, state.velocity, tau)))
    log_weight = state.log_weight + div * dt
    if abs(log_weight) > LOG_WEIGHT_LIMIT:
        raise OverflowError(
            f"log weight {log_weight:.3g} exceeds {LOG_WEIGHT_LIMIT} at s={state.s}")
    position = (state.position - state.velocity * dt
                + math.sqrt(2.0 * viscosity) * np.asarray(increment, dtype=float))
    velocity = state.velocity + c * dt
    return PathState(s=state.s + dt, position=position, velocity=velocity,
                     log_weight=log_weight)


def _steps_for(t: float, dt: float):
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    n = max(1, int(round(t / dt)))
    return n, t / n


def simulate_backward_ensemble(drift: Callable, drift_divergence: Callable,
                               viscosity: float, x, u, t: float, dt: float,
                               n_paths: int, master_seed: int,
                               node_index: int = 0, antithetic: bool = False):
    """Terminal (positions, velocities, log_weights) of n_paths backward paths.

    Fields are evaluated on (N, 3) batches. With antithetic=True each block
    pairs rows k and k + PATH_BLOCK/2 with mirrored noise; the caller is
    responsible for pair-aware error estimates.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if n_paths < 1:
        raise ValueError(f"need at least one path, got {n_paths}")
    n_steps, h = _steps_for(t, dt)
    sqh = math.sqrt(h)
    amp = math.sqrt(2.0 * viscosity)
    half = PATH_BLOCK // 2
    n_blocks = (n_paths + PATH_BLOCK - 1) // PATH_BLOCK
    positions = np.empty((n_paths, 3))
    velocities = np.empty((n_paths, 3))
    log_weights = np.empty(n_paths)
    for b in range(n_blocks):
        lo = b * PATH_BLOCK
        nb = min(PATH_BLOCK, n_paths - lo)
        gen = block_generator(master_seed, node_index, b)
        X = np.tile(x, (nb, 1))
        Y = np.tile(u, (nb, 1))
        lw = np.zeros(nb)
        for k in range(n_steps):
            # Full-block draw even for the tail so path streams never depend
            # on the ensemble size.
            if antithetic:
                xi_half = gen.standard_normal((half, 3))
                xi = np.concatenate([xi_half, -xi_half], axis=0)[:nb]
            else:
                xi = gen.standard_normal((PATH_BLOCK, 3))[:nb]
            tau = t - k * h
            c = np.asarray(drift(X, Y, tau), dtype=float)
            if not np.all(np.isfinite(c)):
                raise FloatingPointError(
                    f"drift evaluated to a non-finite value at s={k * h}")
            lw += np.asarray(drift_divergence(X, Y, tau), dtype=float) * h
            X = X - Y * h + (amp * sqh) * xi
            Y = Y + c * h
        bad = np.abs(lw) > LOG_WEIGHT_LIMIT
        if np.any(bad):
            raise OverflowError(
                f"log weight exceeded {LOG_WEIGHT_LIMIT} on {int(bad.sum())} paths")
        positions[lo:lo + nb] = X
        velocities[lo:lo + nb] = Y
        log_weights[lo:lo + nb] = lw
    return positions, velocities, log_weights


def solve_inviscid_characteristic(drift: Callable, drift_divergence: Callable,
                                  x, u, t: float, dt: float):
    """Deterministic backward path(s) by classical RK4.

    u may be a single 3-vector or an (N, 3) batch sharing the base point x;
    returns (positions, velocities, log_weights) with matching leading
    shape. The drift plays the pressure-drift role of the inviscid system.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    single = u.ndim == 1
    U = u[None, :] if single else u
    n = U.shape[0]
    X = np.tile(x, (n, 1))
    Y = U.copy()
    lw = np.zeros(n)
    if t == 0.0:
        return (X[0], Y[0], 0.0) if single else (X, Y, lw)
    n_steps, h = _steps_for(t, dt)

    def rhs(s, X, Y, lw):
        tau = t - s
        c = np.asarray(drift(X, Y, tau), dtype=float)
        if not np.all(np.isfinite(c)):
            raise FloatingPointError(
                f"drift evaluated to a non-finite value at s={s}")
        d = np.asarray(drift_divergence(X, Y, tau), dtype=float)
        return -Y, c, d

    for k in range(n_steps):
        s = k * h
        k1 = rhs(s, X, Y, lw)
        k2 = rhs(s + 0.5 * h, X + 0.5 * h * k1[0], Y + 0.5 * h * k1[1], lw)
        k3 = rhs(s + 0.5 * h, X + 0.5 * h * k2[0], Y + 0.5 * h * k2[1], lw)
        k4 = rhs(s + h, X + h * k3[0], Y + h * k3[1], lw)
        X = X + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        Y = Y + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        lw = lw + h / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
    if np.any(np.abs(lw) > LOG_WEIGHT_LIMIT):
        raise OverflowError(f"log weight exceeded {LOG_WEIGHT_LIMIT}")
    return (X[0], Y[0], float(lw[0])) if single else (X, Y, lw)


# ---------------------------------------------------------------------------
# Axis-separable linear drift model


@dataclass(frozen=True)
class LinearDriftModel:
    """Drift 2 a_i Y_i + b_i X_i + forcing_i(t), separable per axis.

    The backward system per axis is d/ds (Y, X) = L (Y, X) + (forcing, 0)
    with L = [[2a, b], [-1, 0]], eigenvalues a +/- sqrt(a^2 - b). Requires
    a^2 > b per axis so the eigenvalues are real and distinct.
    """

    amplification: np.ndarray  # a, (3,)
    coupling: np.ndarray       # b, (3,)
    forcing: Optional[Callable] = None  # t -> (3,)

    def __post_init__(self):
        a = np.asarray(self.amplification, dtype=float)
        b = np.asarray(self.coupling, dtype=float)
        object.__setattr__(self, "amplification", a)
        object.__setattr__(self, "coupling", b)
        if a.shape != (3,) or b.shape != (3,):
            raise ValueError("amplification and coupling must be 3-vectors")
        if np.any(a * a <= b):
            raise ValueError(
                f"need amplification^2 > coupling per axis, got a={a}, b={b}")

    def eigenvalues(self):
        """Per-axis eigenvalue pairs (lam1, lam2), lam1 >= lam2, shape (3, 2)."""
        a, b = self.amplification, self.coupling
        d = np.sqrt(a * a - b)
        return np.stack([a + d, a - d], axis=-1)

    def drift_field(self) -> Callable:
        def field(x, u, t):
            x = np.asarray(x, dtype=float)
            u = np.asarray(u, dtype=float)
            c = (2.0 * self.amplification * u + self.coupling * x)
            if self.forcing is not None:
                c = c + np.asarray(self.forcing(t), dtype=float)
            return c

        return field

    def drift_divergence(self) -> Callable:
        total = float(2.0 * np.sum(self.amplification))

        def div(x, u, t):
            u = np.asarray(u, dtype=float)
            return np.full(u.shape[:-1], total)

        return div


def _propagator_entries(lam1, lam2, b, s):
    """Entries of exp(L s) for L = [[2a, b], [-1, 0]] with distinct eigenvalues."""
    e1, e2 = np.exp(lam1 * s), np.exp(lam2 * s)
    den = lam2 - lam1
    m11 = (-lam1 * e1 + lam2 * e2) / den
    m12 = b * (-e1 + e2) / den
    m21 = (e1 - e2) / den
    m22 = (lam2 * e1 - lam1 * e2) / den
    return m11, m12, m21, m22


def linear_drift_solution(model: LinearDriftModel, x, u, s: float,
                          viscosity: float = 0.0, forcing_order: int = 64):
    """Mean backward state and velocity sensitivity at auxiliary time s.

    Returns (mean_velocity, mean_position, u_sensitivity), each (3,). The
    noise enters the position with mean zero, so the means do not depend on
    the viscosity; the argument is accepted for interface symmetry. The
    u_sensitivity is d mean_velocity(s) / d u per axis, the (1, 1) entry of
    the propagator. The forcing convolution uses Gauss-Legendre quadrature
    of the stated order.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    lam = model.eigenvalues()
    lam1, lam2 = lam[:, 0], lam[:, 1]
    if np.any(np.abs(lam1 - lam2) < 1e-10):
        raise ValueError("eigenvalues nearly coincide; the propagator formula "
                         "degenerates")
    m11, m12, m21, m22 = _propagator_entries(lam1, lam2, model.coupling, s)
    vel = m11 * u + m12 * x
    pos = m21 * u + m22 * x
    if model.forcing is not None and s != 0.0:
        from .quadrature import gauss_legendre_rule
        nodes, weights = gauss_legendre_rule(forcing_order, 0.0, s)
        for r, w in zip(nodes, weights):
            f11, _, f21, _ = _propagator_entries(lam1, lam2, model.coupling, s - r)
            force = np.asarray(model.forcing(r), dtype=float)
            vel = vel + w * f11 * force
            pos = pos + w * f21 * force
    return vel, pos, m11


def sensitivity_vanishing_time(amplification: float, coupling: float) -> float:
    """First time the velocity's u-sensitivity crosses zero, one axis.

    Exists when amplification < 0, coupling > 0, amplification^2 > coupling:
    then both eigenvalues are negative and distinct and the (1, 1) propagator
    entry changes sign at log(lam2 / lam1) / (lam1 - lam2) > 0.
    """
    a, b = float(amplification), float(coupling)
    if not (a < 0 and b > 0 and a * a > b):
        raise ValueError(
            f"need amplification < 0 < coupling < amplification^2, got a={a}, b={b}")
    d = math.sqrt(a * a - b)
    lam1, lam2 = a + d, a - d
    return math.log(lam2 / lam1) / (lam1 - lam2)
