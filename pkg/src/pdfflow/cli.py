"""Command line front end.

Verbs:
  coeffs          drift coefficients of a statistics object at one point
  estimate        density value at one (u, x, t)
  slice           density field on a velocity grid, written as CSV
  verify          invariant suites, written as a JSON report
  example         worked-example figure data emission
  characteristic  one backward path dumped as CSV

Exit codes: 0 success, 1 configuration or usage error, 2 numerical failure,
3 an assertable verification check failed under --strict.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__, _serialize, showcase
from .characteristics import NoiseSpec, PathState, _steps_for, backward_step
from .estimator import (InitialDensity, SliceGrid, density_slice,
                        estimate_general, estimate_homogeneous,
                        evaluate_inviscid, evaluate_isotropic)
from .flow_model import (builtin_flow, builtin_statistics, classify_flow,
                         coefficient_bundle)
from .invariants import (VelocityQuadrature, assemble_report, check_mass,
                         check_moment_identity, check_pde_residual,
                         check_positivity_bound, CheckResult,
                         showcase_velocity_plan)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERIC = 2
EXIT_VERIFY = 3

DEFAULT_CONFIG = {
    "flow": "showcase",
    "initial": "showcase",
    "viscosity": None,
    "x": [0.0, 0.0, 0.0],
    "u": [0.5, 0.5, 0.5],
    "t": 0.5,
    "n_samples": 100000,
    "dt": 0.01,
    "seed": 0,
    "antithetic": False,
    "method": None,
    "quad_order": 20,
    "grid": {"lo": -3.0, "hi": 3.0, "n": 121,
             "fixed_axis": "u3", "fixed_value": 0.3},
}


class ConfigError(Exception):
    pass


def parse_config(path: str | None) -> dict:
    """Config file merged over the defaults; unknown keys are rejected."""
    cfg = {k: (dict(v) if isinstance(v, dict) else v)
           for k, v in DEFAULT_CONFIG.items()}
    if path is None:
        return cfg
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    unknown = set(raw) - set(DEFAULT_CONFIG)
    if unknown:
        raise ConfigError(
            f"unknown config keys {sorted(unknown)}; known keys are "
            f"{sorted(DEFAULT_CONFIG)}")
    if "grid" in raw:
        if not isinstance(raw["grid"], dict):
            raise ConfigError("config key 'grid' must hold an object")
        bad = set(raw["grid"]) - set(DEFAULT_CONFIG["grid"])
        if bad:
            raise ConfigError(
                f"unknown grid keys {sorted(bad)}; known keys are "
                f"{sorted(DEFAULT_CONFIG['grid'])}")
        cfg["grid"].update(raw.pop("grid"))
    cfg.update(raw)
    return cfg


def _flow_from(cfg: dict):
    try:
        return builtin_flow(cfg["flow"], viscosity=cfg["viscosity"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _initial_from(cfg: dict) -> InitialDensity:
    name = cfg["initial"]
    if name == "showcase":
        return showcase.ShowcaseDensity().initial()
    if name == "gaussian":
        def iso_gauss(u, x):
            u = np.asarray(u, dtype=float)
            return (2.0 * np.pi) ** -1.5 * np.exp(
                -0.5 * np.sum(u * u, axis=-1))
        return InitialDensity(density=iso_gauss, decay_exponent=4.0,
                              name="gaussian")
    raise ConfigError(f"unknown initial density {name!r}; "
                      "known: showcase, gaussian")


def _grid_from(cfg: dict) -> SliceGrid:
    try:
        return SliceGrid(**cfg["grid"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad grid: {exc}") from exc


def _vec(values) -> np.ndarray:
    a = np.asarray(values, dtype=float)
    if a.shape != (3,):
        raise ConfigError(f"expected 3 components, got {list(values)}")
    return a


def _emit(text: str, out: str | None, force: bool):
    if out is None:
        print(text)
    else:
        _serialize.write_text_atomic(out, text, force=force)
        print(out)


# ---------------------------------------------------------------------------
# Verbs


def cmd_coeffs(args) -> int:
    stats = builtin_statistics(args.statistics)
    bundle = coefficient_bundle(stats, _vec(args.x), _vec(args.u), args.t,
                                args.viscosity)
    payload = {
        "statistics": args.statistics,
        "x": bundle.x, "u": bundle.u, "t": bundle.t,
        "viscosity": bundle.viscosity,
        "mean_gradient": bundle.mean_gradient,
        "increment_laplacian": bundle.increment_laplacian,
        "pressure_drift": bundle.pressure_drift,
        "drift": bundle.drift,
    }
    _emit(_serialize.json_text(payload), args.out, args.force)
    return EXIT_OK


def cmd_estimate(args) -> int:
    cfg = parse_config(args.config)
    for key in ("t", "seed", "n_samples"):
        val = getattr(args, key)
        if val is not None:
            cfg[key] = val
    if args.u is not None:
        cfg["u"] = args.u
    if args.x is not None:
        cfg["x"] = args.x
    flow = _flow_from(cfg)
    initial = _initial_from(cfg)
    x, u, t = _vec(cfg["x"]), _vec(cfg["u"]), float(cfg["t"])
    if flow.regime == "weakly_homogeneous":
        est = estimate_homogeneous(
            flow, initial, x, u, t, n_samples=cfg["n_samples"], dt=cfg["dt"],
            master_seed=cfg["seed"], antithetic=cfg["antithetic"])
    elif flow.regime == "weakly_isotropic":
        est = evaluate_isotropic(flow, initial, x, u, t, dt=cfg["dt"],
                                 quad_order=cfg["quad_order"])
    elif flow.regime == "inviscid":
        est = evaluate_inviscid(flow, initial, x, u, t, dt=cfg["dt"])
    else:
        est = estimate_general(
            flow, initial, x, u, t, n_samples=cfg["n_samples"], dt=cfg["dt"],
            master_seed=cfg["seed"], antithetic=cfg["antithetic"])
    print(f"value  {_serialize.format_value(est.value)}")
    print(f"stderr {_serialize.format_value(est.stderr)}")
    print(f"method {est.method}  n {est.n_samples}")
    if args.out is not None:
        payload = {"value": est.value, "stderr": est.stderr,
                   "n_samples": est.n_samples, "method": est.method,
                   "x": x, "u": u, "t": t, "flow": cfg["flow"],
                   "seed": cfg["seed"]}
        _serialize.write_text_atomic(args.out, _serialize.json_text(payload),
                                     force=args.force)
    return EXIT_OK


def cmd_slice(args) -> int:
    cfg = parse_config(args.config)
    flow = _flow_from(cfg)
    initial = _initial_from(cfg)
    field = density_slice(
        flow, initial, x=_vec(cfg["x"]), t=float(cfg["t"]),
        grid=_grid_from(cfg), method=cfg["method"],
        n_samples=cfg["n_samples"], dt=cfg["dt"], master_seed=cfg["seed"],
        quad_order=cfg["quad_order"], antithetic=cfg["antithetic"])
    _serialize.write_text_atomic(args.out, _serialize.density_field_csv(field),
                                 force=args.force)
    print(args.out)
    return EXIT_OK


def cmd_example(args) -> int:
    os.makedirs(args.out_dir, exist_ok=True)
    grid = SliceGrid(n=args.grid_n) if args.grid_n else None
    paths = showcase.emit_figure_data(
        args.figure, args.out_dir, method=args.method, order=args.order,
        n_samples=args.n_samples, master_seed=args.seed, grid=grid,
        force=args.force)
    for name, path in paths.items():
        print(f"{name}  {path}")
    return EXIT_OK


def cmd_characteristic(args) -> int:
    cfg = parse_config(args.config)
    if args.t is not None:
        cfg["t"] = args.t
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.u is not None:
        cfg["u"] = args.u
    if args.x is not None:
        cfg["x"] = args.x
    flow = _flow_from(cfg)
    if flow.drift_field is None:
        raise ConfigError(f"flow {cfg['flow']!r} carries no drift field")
    x, u, t = _vec(cfg["x"]), _vec(cfg["u"]), float(cfg["t"])
    n_steps, h = _steps_for(t, cfg["dt"])
    noise = NoiseSpec(master_seed=cfg["seed"], path_index=args.path_index)
    incs = noise.increments(n_steps, h)
    state = PathState(s=0.0, position=x, velocity=u, log_weight=0.0)
    rows = [state]
    for k in range(n_steps):
        state = backward_step(state, flow.drift_field, flow.drift_divergence,
                              flow.viscosity, t, h, incs[k])
        rows.append(state)
    fmt = _serialize.format_value
    lines = ["s,x1,x2,x3,u1,u2,u3,log_weight"]
    for st in rows:
        cells = [st.s, *st.position, *st.velocity, st.log_weight]
        lines.append(",".join(fmt(c) for c in cells))
    _emit("\n".join(lines) + "\n", args.out, args.force)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Verification suites


def _suite_mass():
    spec = showcase.ShowcaseDensity()
    plan_g = VelocityQuadrature.gaussian(
        np.zeros(3), [2.0 / 3.0, 1.0, 1.5], order=40)
    r1 = replace(check_mass(spec.gaussian_component, plan_g, tol=1e-12),
                 name="mass_gaussian_factor")
    plan_p = showcase_velocity_plan(cell_order=24)
    x0 = np.zeros(3)

    def p0(u):
        return spec.initial_density(u, np.tile(x0, (len(u), 1)))

    r2 = replace(check_mass(p0, plan_p, tol=1e-6), name="mass_initial_density")
    return [r1, r2]


def _suite_perturbation():
    rep = showcase.perturbation_moment_report()
    out = []
    for key, ok_key in (("integral", "integral_ok"),
                        ("first_moments", "moments_ok"),
                        ("interior_divergence_max", "divergence_ok")):
        val = rep[key]
        val = float(np.max(np.abs(val)))
        out.append(CheckResult(
            name=f"perturbation_{key}", value=val, tolerance=rep["tolerance"],
            passed=bool(rep[ok_key]), assertable=True,
            details={"order": rep["order"]}))
    return out


def _suite_statistics():
    stats = showcase.showcase_statistics()
    pts = [(np.zeros(3), np.array([0.5, 0.5, 0.5]), 0.5),
           (np.array([1.0, -0.5, 0.25]), np.array([0.5, 0.5, 0.5]), 0.5),
           (np.array([0.3, 0.3, -0.7]), np.array([-0.4, 1.0, 0.6]), 1.0)]
    rep = classify_flow(stats, pts)
    tol = 1e-6
    return [
        CheckResult(name="statistics_class_consistent", value=0.0,
                    tolerance=0.0, passed=rep.consistent, assertable=True,
                    details={"claimed": rep.claimed_class,
                             "measured": rep.measured_class}),
        CheckResult(name="statistics_divergence_identity",
                    value=rep.divergence_defect, tolerance=tol,
                    passed=rep.divergence_defect <= tol, assertable=True),
        CheckResult(name="statistics_gradient_trace",
                    value=rep.gradient_trace_defect, tolerance=tol,
                    passed=rep.gradient_trace_defect <= tol, assertable=True),
    ]


def _suite_residual():
    def density_xut(u, x, t):
        return showcase.density(u, x, t, method="gauss_hermite",
                                order=24).value

    point = (np.array([0.5, 0.7, 0.5]), np.array([0.2, -0.1, 0.3]), 0.5)
    r1 = check_pde_residual(density_xut, point, viscosity=1.0, h=0.05,
                            tol=1e-4,
                            boundary_distance=showcase.REGION.boundary_distance)

    # Planted-defect control: q = G(u) (1 + x1 u1 / 10) is not a solution;
    # the residual must detect it at the size u1^2 G / 10.
    spec = showcase.ShowcaseDensity()

    def planted(u, x, t):
        g = float(spec.gaussian_component(np.asarray(u)[None, :])[0])
        return g * (1.0 + float(x[0]) * float(u[0]) / 10.0)

    c = check_pde_residual(planted, point, viscosity=1.0, h=0.05, tol=1e-4)
    expected = point[0][0] ** 2 \
        * float(spec.gaussian_component(point[0][None, :])[0]) / 10.0
    control = CheckResult(
        name="residual_control_detects_defect", value=c.value,
        tolerance=0.5 * expected, passed=c.value > 0.5 * expected,
        assertable=True, details={"expected_defect": expected})
    return [replace(r1, name="residual_showcase"), control]


def _suite_moment():
    flow = builtin_flow("showcase")
    spec = showcase.ShowcaseDensity()
    plan = showcase_velocity_plan(cell_order=12, widths=6.0)

    def density_xu(u, x):
        return spec.initial_density(u, np.tile(x, (len(u), 1)))

    r = check_moment_identity(density_xu, flow.drift_field, np.zeros(3), 0.0,
                              plan, tol=1e-6)
    return [replace(r, name="moment_identity_initial")]


def _suite_positivity():
    spec = showcase.ShowcaseDensity()
    vals = np.linspace(-3.0, 3.0, 41)
    g1, g2, g3 = np.meshgrid(vals, vals, vals, indexing="ij")
    u_grid = np.stack([g.reshape(-1) for g in (g1, g2, g3)], axis=-1)
    # the region's inner-corner sign orbit carries the extreme reciprocal
    # values; grids that miss it understate the dip
    corners = np.array([[s1 * showcase.REGION.lo[0],
                         s2 * showcase.REGION.lo[1],
                         s3 * showcase.REGION.lo[2]]
                        for s1 in (1, -1) for s2 in (1, -1)
                        for s3 in (1, -1)])
    u_grid = np.concatenate([u_grid, corners], axis=0)
    return [check_positivity_bound(spec, u_grid, np.zeros((1, 3)))]


SUITES = {
    "mass": _suite_mass,
    "perturbation": _suite_perturbation,
    "statistics": _suite_statistics,
    "residual": _suite_residual,
    "moment": _suite_moment,
    "positivity": _suite_positivity,
}


def cmd_verify(args) -> int:
    names = list(SUITES) if args.suite == "all" else [args.suite]
    results = []
    for name in names:
        results.extend(SUITES[name]())
    report = assemble_report(results)
    _emit(_serialize.json_text(report.payload()), args.out, args.force)
    if args.strict and not report.passed:
        return EXIT_VERIFY
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pdfflow",
        description="velocity-distribution transport toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="verb", required=True)

    def add_common(p):
        p.add_argument("--out", default=None, help="output path (default stdout)")
        p.add_argument("--force", action="store_true",
                       help="overwrite an existing output file")

    p = sub.add_parser("coeffs", help="drift coefficients at one point")
    p.add_argument("--statistics", default="showcase")
    p.add_argument("--x", nargs=3, type=float, default=[0.0, 0.0, 0.0])
    p.add_argument("--u", nargs=3, type=float, default=[0.5, 0.5, 0.5])
    p.add_argument("--t", type=float, default=0.5)
    p.add_argument("--viscosity", type=float, default=1.0)
    add_common(p)
    p.set_defaults(fn=cmd_coeffs)

    p = sub.add_parser("estimate", help="density value at one point")
    p.add_argument("--config", default=None)
    p.add_argument("--u", nargs=3, type=float, default=None)
    p.add_argument("--x", nargs=3, type=float, default=None)
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--n-samples", dest="n_samples", type=int, default=None)
    add_common(p)
    p.set_defaults(fn=cmd_estimate)

    p = sub.add_parser("slice", help="density field on a velocity grid")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_slice)

    p = sub.add_parser("verify", help="invariant verification suites")
    p.add_argument("--suite", default="all",
                   choices=sorted(SUITES) + ["all"])
    p.add_argument("--strict", action="store_true",
                   help="exit 3 when an assertable check fails")
    add_common(p)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("example", help="emit worked-example figure data")
    p.add_argument("--figure", required=True, choices=showcase.FIGURES)
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.add_argument("--method", default="mc", choices=["mc", "gauss_hermite"])
    p.add_argument("--order", type=int, default=20)
    p.add_argument("--n-samples", dest="n_samples", type=int, default=20000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid-n", dest="grid_n", type=int, default=None)
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_example)

    p = sub.add_parser("characteristic", help="dump one backward path")
    p.add_argument("--config", default=None)
    p.add_argument("--u", nargs=3, type=float, default=None)
    p.add_argument("--x", nargs=3, type=float, default=None)
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--path-index", dest="path_index", type=int, default=0)
    add_common(p)
    p.set_defaults(fn=cmd_characteristic)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses its own exit code for usage errors; fold those into
        # the configuration-error code, keep 0 for --help/--version
        return EXIT_OK if not exc.code else EXIT_CONFIG
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileExistsError as exc:
        print(f"error: {exc}; pass --force to overwrite", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FloatingPointError, OverflowError, ZeroDivisionError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
