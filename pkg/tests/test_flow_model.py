"""Coefficient assembly, regime classification, and the flow catalog."""

import numpy as np
import pytest

from pdfflow.flow_model import (
    REGIMES,
    ConditionalStatistics,
    FlowSpec,
    builtin_flow,
    builtin_statistics,
    classify_flow,
    coefficient_bundle,
    diffusion_matrix,
    drift_vector,
    increment_laplacian,
    mean_gradient,
    numeric_drift_divergence,
    pressure_drift,
)

X = np.array([0.3, -0.2, 0.5])
U = np.array([0.8, -0.4, 1.1])


class TestZeroStatistics:
    def test_all_coefficients_vanish(self):
        bundle = coefficient_bundle(builtin_statistics("zero"), X, U, t=1.0,
                                    viscosity=1.0)
        assert np.all(bundle.mean_gradient == 0.0)
        assert np.all(bundle.increment_laplacian == 0.0)
        # constant matrix field: the stencil double divergence is exactly zero
        assert np.all(bundle.pressure_drift == 0.0)
        assert np.all(bundle.drift == 0.0)

    def test_drift_vector_matches_bundle(self):
        stats = builtin_statistics("zero")
        c = drift_vector(stats, X, U, t=1.0, viscosity=1.0)
        assert np.all(c == 0.0)


class TestQuadraticIncrement:
    """rho_i = (y_i - x_i)^2: gradient 0 at the anchor, Laplacian (2, 2, 2)."""

    def test_laplacian_exact_on_quadratic(self):
        stats = builtin_statistics("quadratic-rho")
        lap = increment_laplacian(stats, X, U, t=0.0)
        assert np.allclose(lap, [2.0, 2.0, 2.0], atol=1e-8)

    def test_gradient_vanishes_at_anchor(self):
        stats = builtin_statistics("quadratic-rho")
        g = mean_gradient(stats, X, U, t=0.0)
        assert np.max(np.abs(g)) < 1e-10

    def test_drift_minus_two(self):
        # nu = 1: C = 0 - nu * (2, 2, 2) + P, and P integrates an even
        # double divergence against the odd kernel, so it cancels on the
        # antipodally symmetric grid
        stats = builtin_statistics("quadratic-rho")
        c = drift_vector(stats, X, U, t=0.0, viscosity=1.0)
        assert np.allclose(c, [-2.0, -2.0, -2.0], atol=1e-6)


class TestStencilConvergence:
    """Central stencils are second order in the step."""

    @staticmethod
    def _stats():
        def rho(x, y, u, t):
            z = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
            return np.sin(z) + np.cos(z) - 1.0

        return ConditionalStatistics(
            mean_increment=rho,
            covariance=lambda x, y, u, t: np.broadcast_to(
                np.eye(3), np.shape(y)[:-1] + (3, 3)).copy(),
            claimed_class="general")

    def test_gradient_error_quarters(self):
        stats = self._stats()
        exact = np.eye(3)
        err = [np.max(np.abs(mean_gradient(stats, X, U, 0.0, h=h) - exact))
               for h in (1e-2, 5e-3)]
        assert 3.5 < err[0] / err[1] < 4.5

    def test_laplacian_error_quarters(self):
        stats = self._stats()
        exact = -np.ones(3)
        err = [np.max(np.abs(increment_laplacian(stats, X, U, 0.0, h=h) - exact))
               for h in (1e-2, 5e-3)]
        assert 3.5 < err[0] / err[1] < 4.5


class TestPressureDriftCatalog:
    def test_anisotropic_gaussian_closed_form(self):
        # sigma = I (y1 - x1) exp(-|y - x|^2) integrates to (-1, 0, 0); the
        # constant b (x) b block drops out through the stencil exactly
        stats = builtin_statistics("anisotropic-gaussian")
        p = pressure_drift(stats, np.array([0.7, -0.3, 0.2]),
                           np.array([0.5, 1.0, -0.2]), t=0.0)
        assert abs(p[0] + 1.0) < 1e-4
        assert max(abs(p[1]), abs(p[2])) < 1e-9

    def test_validate_reports_non_psd(self):
        stats = builtin_statistics("anisotropic-gaussian")
        report = stats.validate([(X, U, 0.5)])
        assert report["anchor_ok"]
        assert report["covariance_symmetric"]
        assert not report["covariance_psd"]


class TestDiffusionMatrix:
    def test_identity_gradient_blocks(self):
        d = diffusion_matrix(np.eye(3), viscosity=1.0)
        D = d["matrix"]
        assert np.all(D[:3, :3] == 0.0)
        assert np.allclose(D[:3, 3:], np.eye(3))
        assert np.allclose(D[3:, :3], np.eye(3))
        assert np.allclose(D[3:, 3:], np.eye(3))

    def test_identity_gradient_spectrum(self):
        d = diffusion_matrix(np.eye(3), viscosity=1.0)
        lo = (1.0 - np.sqrt(5.0)) / 2.0
        hi = (1.0 + np.sqrt(5.0)) / 2.0
        assert np.allclose(np.sort(d["eigenvalues"]), [lo] * 3 + [hi] * 3,
                           atol=1e-12)
        assert d["symmetric"]
        assert not d["positive_semidefinite"]
        assert d["min_eigenvalue"] == pytest.approx(lo, abs=1e-12)

    def test_zero_viscosity_degenerate(self):
        d = diffusion_matrix(np.eye(3), viscosity=0.0)
        assert np.all(d["matrix"] == 0.0)
        assert d["positive_semidefinite"]

    def test_shape_validation(self):
        with pytest.raises(ValueError, match="3, 3"):
            diffusion_matrix(np.eye(2), viscosity=1.0)


class TestClassifyFlow:
    POINTS = [
        (np.array([0.2, -0.1, 0.4]), np.array([0.5, 0.5, 0.5]), 0.5),
        (np.array([-0.6, 0.3, 0.1]), np.array([0.5, 0.5, 0.5]), 0.5),
        (np.array([0.0, 0.0, 0.0]), np.array([1.0, -0.5, 0.2]), 1.0),
    ]

    def test_zero_statistics_isotropic(self):
        report = classify_flow(builtin_statistics("zero"), self.POINTS)
        assert report.measured_class == "weakly_isotropic"
        assert report.consistent
        assert report.homogeneity_defect == 0.0
        assert report.isotropy_defect == 0.0
        assert report.divergence_defect == 0.0

    def test_showcase_homogeneous_not_isotropic(self):
        report = classify_flow(builtin_statistics("showcase"), self.POINTS)
        assert report.measured_class == "weakly_homogeneous"
        assert report.consistent
        assert report.homogeneity_defect <= 1e-6
        assert report.isotropy_defect > 1e-4

    def test_quadratic_claims_general(self):
        report = classify_flow(builtin_statistics("quadratic-rho"), self.POINTS)
        # gradient vanishes at the anchor, so the measured class is
        # homogeneous; a "general" claim is never inconsistent
        assert report.measured_class == "weakly_homogeneous"
        assert report.consistent
        assert report.divergence_defect > 0.1

    def test_empty_sample_raises(self):
        with pytest.raises(ValueError, match="at least one"):
            classify_flow(builtin_statistics("zero"), [])


class TestFlowSpecValidation:
    def test_regimes_catalog(self):
        assert REGIMES == ("general", "weakly_homogeneous",
                           "weakly_isotropic", "inviscid")

    @pytest.mark.parametrize("kwargs,match", [
        (dict(regime="turbulent", viscosity=1.0), "regime"),
        (dict(regime="general", viscosity=-0.5), "nonnegative"),
        (dict(regime="inviscid", viscosity=0.3), "viscosity 0"),
    ])
    def test_invalid_specs(self, kwargs, match):
        with pytest.raises(ValueError, match=match):
            FlowSpec(**kwargs)

    def test_zero_viscosity_needs_inviscid_regime(self):
        with pytest.raises(ValueError, match="inviscid"):
            FlowSpec(regime="weakly_isotropic", viscosity=0.0,
                     drift_field=lambda x, u, t: -np.asarray(u))

    def test_invalid_claimed_class(self):
        with pytest.raises(ValueError, match="claimed_class"):
            ConditionalStatistics(
                mean_increment=lambda x, y, u, t: np.zeros(np.shape(y)),
                covariance=lambda x, y, u, t: np.eye(3),
                claimed_class="laminar")

    def test_unknown_catalog_entries(self):
        with pytest.raises(ValueError, match="unknown"):
            builtin_flow("vortex")
        with pytest.raises(ValueError, match="unknown"):
            builtin_statistics("vortex")

    def test_inviscid_damping_rejects_viscosity(self):
        with pytest.raises(ValueError, match="viscosity 0"):
            builtin_flow("inviscid-damping", viscosity=1.0)

    def test_linear_damping_fields(self):
        flow = builtin_flow("linear-damping")
        u = np.array([[0.5, -1.0, 2.0], [0.0, 0.0, 0.0]])
        assert np.allclose(flow.drift_field(np.zeros(3), u, 0.0), -u)
        assert np.allclose(flow.drift_divergence(np.zeros(3), u, 0.0), -3.0)
        assert flow.validate().get("drift_ignores_x", True)

    def test_numeric_divergence_matches(self):
        flow = builtin_flow("linear-damping")
        div = numeric_drift_divergence(flow.drift_field)
        got = div(np.zeros(3), np.array([0.4, -0.2, 0.9]), 0.0)
        assert got == pytest.approx(-3.0, abs=1e-9)

    def test_showcase_flow_wiring(self):
        flow = builtin_flow("showcase")
        assert flow.regime == "weakly_homogeneous"
        assert flow.viscosity == 1.0
        assert flow.statistics is not None
        u = np.array([[0.3, 0.3, 0.3]])
        assert np.all(flow.drift_field(np.zeros(3), u, 0.0) == 0.0)
        assert np.all(flow.drift_divergence(np.zeros(3), u, 0.0) == 0.0)
