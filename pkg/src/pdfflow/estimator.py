"""Density estimators built on the backward-characteristic representations.

Three routes, one per flow regime:

  estimate_homogeneous   Monte-Carlo over stochastic backward paths; the
                         density is the ensemble mean of
                         p0(velocity; position) * weight.
  evaluate_isotropic     deterministic velocity path plus a Gaussian
                         transport kernel in the position; the z-integral is
                         a tensor Gauss-Hermite expectation, so stderr is 0.
  evaluate_inviscid      fully deterministic characteristic, a single
                         weighted pullback of the initial density.

density_slice evaluates a 2d velocity grid at fixed position and time,
sharing one master seed with per-node substreams so the result never
depends on how nodes are scheduled. PDFFLOW_THREADS caps the scheduling
fan-out only.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .characteristics import (simulate_backward_ensemble,
                              solve_inviscid_characteristic)
from .flow_model import FlowSpec, numeric_drift_divergence
from .quadrature import gauss_hermite_rule

LOG_WEIGHT_WARN = 50.0
AXES = ("u1", "u2", "u3")


@dataclass(frozen=True)
class InitialDensity:
    """Initial velocity density p0(u; x).

    density maps aligned (..., 3) velocity and position batches to (...)
    values. decay_exponent m documents the envelope bound
    p0 <= const / (1 + |u|)^m, m >= 1; it is informational. Pointwise
    negativity is reported by the invariant checks, never clamped.
    """

    density: Callable
    decay_exponent: float = 4.0
    name: str = ""

    def __post_init__(self):
        if self.decay_exponent < 1:
            raise ValueError(
                f"decay_exponent must be at least 1, got {self.decay_exponent}")


@dataclass(frozen=True)
class PdfEstimate:
    """A single density value with its sampling error."""

    value: float
    stderr: float
    n_samples: int
    method: str  # mc | kernel_quadrature | characteristic | exact


@dataclass
class DensityField:
    """Estimates on a 2d velocity grid at fixed position and time."""

    velocities: np.ndarray          # (M, 3)
    x: np.ndarray                   # (3,)
    t: float
    values: np.ndarray              # (M,)
    stderrs: np.ndarray             # (M,)
    grid_shape: tuple
    side: Optional[list] = None     # per-row 'in' / 'out' / 'na'
    provenance: dict = field(default_factory=dict)


def worker_cap() -> int:
    """Scheduling fan-out cap; results never depend on it."""
    raw = os.environ.get("PDFFLOW_THREADS", "").strip()
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ValueError(
                f"PDFFLOW_THREADS must be an integer, got {raw!r}") from None
        if n < 1:
            raise ValueError(f"PDFFLOW_THREADS must be at least 1, got {n}")
        return n
    return min(4, os.cpu_count() or 1)


def _require_drift(flow: FlowSpec):
    if flow.drift_field is None:
        raise ValueError(
            "this flow carries no directly evaluable drift field; Monte-Carlo "
            "stepping cannot derive the drift from conditional statistics "
            "(one singular-integral quadrature per path point).  Supply "
            "FlowSpec.drift_field, e.g. a fitted or closed-form drift.")
    div = flow.drift_divergence
    if div is None:
        div = numeric_drift_divergence(flow.drift_field)
    return flow.drift_field, div


def _mc_reduce(values: np.ndarray, antithetic: bool) -> tuple:
    n = len(values)
    if antithetic and n % 2 == 0 and n >= 4:
        half = n // 2
        pair_means = 0.5 * (values[:half] + values[half:])
        value = float(pair_means.mean())
        stderr = float(pair_means.std(ddof=1) / math.sqrt(half))
    else:
        value = float(values.mean())
        stderr = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return value, stderr


def estimate_homogeneous(flow: FlowSpec, initial: InitialDensity, x, u, t: float,
                         *, n_samples: int = 100000, dt: float = 0.01,
                         master_seed: int = 0, node_index: int = 0,
                         antithetic: bool = False) -> PdfEstimate:
    """Monte-Carlo density estimate for a weakly homogeneous flow."""
    if flow.regime != "weakly_homogeneous":
        raise ValueError(
            f"estimate_homogeneous needs a weakly_homogeneous flow, got "
            f"{flow.regime!r}")
    return _estimate_mc(flow, initial, x, u, t, n_samples=n_samples, dt=dt,
                        master_seed=master_seed, node_index=node_index,
                        antithetic=antithetic)


def estimate_general(flow: FlowSpec, initial: InitialDensity, x, u, t: float,
                     *, n_samples: int = 100000, dt: float = 0.01,
                     master_seed: int = 0, node_index: int = 0,
                     antithetic: bool = False) -> PdfEstimate:
    """Expert-mode estimate outside the weakly homogeneous regime.

    The representation behind this estimator is only proven under a side
    condition that cannot be verified from samples; treat results as
    exploratory.
    """
    warnings.warn(
        "general-regime estimate: the backward representation is unproven "
        "for this flow class; treat the result as exploratory",
        RuntimeWarning, stacklevel=2)
    return _estimate_mc(flow, initial, x, u, t, n_samples=n_samples, dt=dt,
                        master_seed=master_seed, node_index=node_index,
                        antithetic=antithetic)


def _estimate_mc(flow, initial, x, u, t, *, n_samples, dt, master_seed,
                 node_index, antithetic) -> PdfEstimate:
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if t < 0:
        raise ValueError(f"t must be nonnegative, got {t}")
    if t == 0.0:
        v = float(np.asarray(initial.density(u[None, :], x[None, :]))[0])
        return PdfEstimate(value=v, stderr=0.0, n_samples=n_samples,
                           method="mc")
    drift, div = _require_drift(flow)
    pos, vel, lw = simulate_backward_ensemble(
        drift, div, flow.viscosity, x, u, t, dt, n_samples, master_seed,
        node_index=node_index, antithetic=antithetic)
    if np.any(lw > LOG_WEIGHT_WARN):
        warnings.warn(
            f"{int((lw > LOG_WEIGHT_WARN).sum())} of {n_samples} path weights "
            f"exceed e^{LOG_WEIGHT_WARN:.0f}; the estimate may be dominated by "
            "a few paths", RuntimeWarning, stacklevel=3)
    g = np.asarray(initial.density(vel, pos), dtype=float) * np.exp(lw)
    value, stderr = _mc_reduce(g, antithetic)
    return PdfEstimate(value=value, stderr=stderr, n_samples=n_samples,
                       method="mc")


def evaluate_inviscid(flow: FlowSpec, initial: InitialDensity, x, u, t: float,
                      *, dt: float = 1e-3) -> PdfEstimate:
    """Deterministic density value for an inviscid flow."""
    if flow.regime != "inviscid":
        raise ValueError(
            f"evaluate_inviscid needs an inviscid flow, got {flow.regime!r}")
    drift, div = _require_drift(flow)
    pos, vel, lw = solve_inviscid_characteristic(drift, div, x, u, t, dt)
    v = float(np.asarray(initial.density(vel[None, :], pos[None, :]))[0]
              * math.exp(lw))
    return PdfEstimate(value=v, stderr=0.0, n_samples=1, method="characteristic")


def inviscid_density_batch(flow: FlowSpec, initial: InitialDensity, x,
                           velocities, t: float, *, dt: float = 1e-3) -> np.ndarray:
    """Vector of inviscid density values over an (N, 3) velocity batch."""
    if flow.regime != "inviscid":
        raise ValueError(
            f"inviscid_density_batch needs an inviscid flow, got {flow.regime!r}")
    drift, div = _require_drift(flow)
    pos, vel, lw = solve_inviscid_characteristic(
        drift, div, x, np.asarray(velocities, dtype=float), t, dt)
    return np.asarray(initial.density(vel, pos), dtype=float) * np.exp(lw)


def transport_kernel(x, t: float, displacement, viscosity: float, z) -> np.ndarray:
    """Gaussian position kernel of the isotropic representation.

    (4 pi nu t)^{-3/2} exp(-|z - x + displacement|^2 / (4 nu t)) evaluated at
    (..., 3) points z. Requires nu * t > 0.
    """
    if viscosity * t <= 0:
        raise ValueError(
            f"transport kernel needs viscosity * t > 0, got nu={viscosity}, t={t}")
    x = np.asarray(x, dtype=float)
    d = np.asarray(displacement, dtype=float)
    z = np.asarray(z, dtype=float)
    dev = z - x + d
    r2 = np.sum(dev * dev, axis=-1)
    return (4.0 * np.pi * viscosity * t) ** -1.5 * np.exp(-r2 / (4.0 * viscosity * t))


def _isotropic_path(drift, div, x, u, t, dt):
    """RK4 on (velocity, accumulated displacement, log weight)."""
    x = np.asarray(x, dtype=float)
    Y = np.asarray(u, dtype=float).copy()
    D = np.zeros(3)
    lw = 0.0
    n = max(1, int(round(t / dt)))
    h = t / n
    for k in range(n):
        s = k * h

        def rhs(s, Y):
            tau = t - s
            c = np.asarray(drift(x, Y, tau), dtype=float)
            d = float(np.asarray(div(x, Y, tau)))
            return c, Y.copy(), d

        c1, y1, d1 = rhs(s, Y)
        c2, y2, d2 = rhs(s + 0.5 * h, Y + 0.5 * h * c1)
        c3, y3, d3 = rhs(s + 0.5 * h, Y + 0.5 * h * c2)
        c4, y4, d4 = rhs(s + h, Y + h * c3)
        D = D + h / 6.0 * (y1 + 2.0 * y2 + 2.0 * y3 + y4)
        Y = Y + h / 6.0 * (c1 + 2.0 * c2 + 2.0 * c3 + c4)
        lw = lw + h / 6.0 * (d1 + 2.0 * d2 + 2.0 * d3 + d4)
    return Y, D, lw


def evaluate_isotropic(flow: FlowSpec, initial: InitialDensity, x, u, t: float,
                       *, dt: float = 0.01, quad_order: int = 20) -> PdfEstimate:
    """Kernel-quadrature density value for a weakly isotropic flow.

    The velocity path is deterministic (the drift may not depend on x), so
    the density is the weighted Gaussian average of p0(Y(t); z) over z with
    mean x - displacement and per-component variance 2 nu t, computed by
    tensor Gauss-Hermite.
    """
    if flow.regime != "weakly_isotropic":
        raise ValueError(
            f"evaluate_isotropic needs a weakly_isotropic flow, got "
            f"{flow.regime!r}")
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if t < 0:
        raise ValueError(f"t must be nonnegative, got {t}")
    if t == 0.0:
        v = float(np.asarray(initial.density(u[None, :], x[None, :]))[0])
        return PdfEstimate(value=v, stderr=0.0, n_samples=quad_order ** 3,
                           method="kernel_quadrature")
    drift, div = _require_drift(flow)
    Y, D, lw = _isotropic_path(drift, div, x, u, t, dt)
    nodes, w1 = gauss_hermite_rule(quad_order)
    # per-component variance 2 nu t, so the node transform uses sqrt(4 nu t)
    scale = math.sqrt(4.0 * flow.viscosity * t)
    g1, g2, g3 = np.meshgrid(nodes, nodes, nodes, indexing="ij")
    z = (x - D)[None, :] + scale * np.stack(
        [g1.reshape(-1), g2.reshape(-1), g3.reshape(-1)], axis=-1)
    wg = np.ones(len(z))
    for gw in np.meshgrid(w1, w1, w1, indexing="ij"):
        wg *= gw.reshape(-1)
    vals = np.asarray(initial.density(np.tile(Y, (len(z), 1)), z), dtype=float)
    mean = float(np.dot(wg, vals) * np.pi ** -1.5)
    return PdfEstimate(value=mean * math.exp(lw), stderr=0.0,
                       n_samples=quad_order ** 3, method="kernel_quadrature")


@dataclass(frozen=True)
class SliceGrid:
    """2d velocity grid: two free axes, one fixed component."""

    lo: float = -3.0
    hi: float = 3.0
    n: int = 121
    fixed_axis: str = "u3"
    fixed_value: float = 0.3

    def __post_init__(self):
        if self.fixed_axis not in AXES:
            raise ValueError(f"fixed_axis must be one of {AXES}, got "
                             f"{self.fixed_axis!r}")
        if self.n < 2:
            raise ValueError(f"need at least a 2x2 grid, got n={self.n}")
        if not self.hi > self.lo:
            raise ValueError(f"need hi > lo, got [{self.lo}, {self.hi}]")

    def axis_values(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n)

    def velocities(self) -> np.ndarray:
        """Row-major (n*n, 3) velocity nodes."""
        v = self.axis_values()
        a, b = np.meshgrid(v, v, indexing="ij")
        free = [k for k in AXES if k != self.fixed_axis]
        out = np.empty((self.n * self.n, 3))
        out[:, AXES.index(free[0])] = a.reshape(-1)
        out[:, AXES.index(free[1])] = b.reshape(-1)
        out[:, AXES.index(self.fixed_axis)] = self.fixed_value
        return out


def density_slice(flow: FlowSpec, initial: InitialDensity, *, x, t: float,
                  grid: SliceGrid | None = None, method: Optional[str] = None,
                  n_samples: int = 100000, dt: float = 0.01,
                  master_seed: int = 0, quad_order: int = 20,
                  antithetic: bool = False) -> DensityField:
    """Estimate the density on a velocity grid at fixed (x, t).

    Each node uses the shared master seed with its own node-indexed
    substream, so the field is reproducible for a fixed configuration and
    independent of the worker count. Nodes that fail numerically are set to
    NaN; more than 1% failures aborts.
    """
    grid = grid or SliceGrid()
    x = np.asarray(x, dtype=float)
    if method is None:
        method = {"weakly_homogeneous": "mc", "general": "mc",
                  "inviscid": "characteristic",
                  "weakly_isotropic": "kernel_quadrature"}[flow.regime]
    velocities = grid.velocities()
    m = len(velocities)
    values = np.full(m, np.nan)
    stderrs = np.zeros(m)
    failures = []

    if method == "characteristic":
        values[:] = inviscid_density_batch(flow, initial, x, velocities, t, dt=dt)
    else:
        def run_node(idx: int):
            u = velocities[idx]
            if method == "mc":
                est = _estimate_mc(flow, initial, x, u, t, n_samples=n_samples,
                                   dt=dt, master_seed=master_seed,
                                   node_index=idx, antithetic=antithetic)
            elif method == "kernel_quadrature":
                est = evaluate_isotropic(flow, initial, x, u, t, dt=dt,
                                         quad_order=quad_order)
            else:
                raise ValueError(f"unknown slice method {method!r}")
            return est.value, est.stderr

        cap = worker_cap()
        if cap > 1 and m > 1:
            with ThreadPoolExecutor(max_workers=cap) as pool:
                results = pool.map(_guarded(run_node), range(m))
                for idx, res in enumerate(results):   # ordered reduction
                    if isinstance(res, Exception):
                        failures.append((idx, res))
                    else:
                        values[idx], stderrs[idx] = res
        else:
            for idx in range(m):
                try:
                    values[idx], stderrs[idx] = run_node(idx)
                except (FloatingPointError, OverflowError) as exc:
                    failures.append((idx, exc))
        if failures:
            if len(failures) > 0.01 * m:
                raise RuntimeError(
                    f"{len(failures)} of {m} grid nodes failed numerically; "
                    f"first failure at node {failures[0][0]}: {failures[0][1]}")
            warnings.warn(
                f"{len(failures)} of {m} grid nodes failed numerically and "
                "were set to NaN", RuntimeWarning, stacklevel=2)

    return DensityField(
        velocities=velocities, x=x, t=float(t), values=values, stderrs=stderrs,
        grid_shape=(grid.n, grid.n),
        provenance={"method": method, "n_samples": n_samples, "dt": dt,
                    "master_seed": master_seed, "quad_order": quad_order,
                    "grid": {"lo": grid.lo, "hi": grid.hi, "n": grid.n,
                             "fixed_axis": grid.fixed_axis,
                             "fixed_value": grid.fixed_value},
                    "flow": flow.name, "antithetic": antithetic})


def _guarded(fn):
    def wrapped(idx):
        try:
            return fn(idx)
        except (FloatingPointError, OverflowError) as exc:
            return exc

    return wrapped
