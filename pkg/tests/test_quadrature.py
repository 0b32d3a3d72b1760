"""Quadrature rules, stencils, and the singular kernel integral."""

import numpy as np
import pytest

from pdfflow.quadrature import (QuadratureConfig, central_difference,
                                gauss_hermite_expectation, gauss_hermite_rule,
                                gauss_legendre_rule, singular_kernel_integral)


class TestGaussLegendre:
    def test_quartic_on_unit_interval(self):
        # int_{-1}^{1} x^4 dx = 2/5, exact at order 3
        x, w = gauss_legendre_rule(3, -1.0, 1.0)
        assert np.dot(w, x ** 4) == pytest.approx(0.4, abs=1e-15)

    def test_weights_sum_to_length(self):
        x, w = gauss_legendre_rule(16, 2.0, 5.5)
        assert w.sum() == pytest.approx(3.5, abs=1e-13)
        assert x.min() > 2.0 and x.max() < 5.5

    def test_single_node_is_midpoint(self):
        x, w = gauss_legendre_rule(1, 0.0, 4.0)
        assert x[0] == pytest.approx(2.0)
        assert w[0] == pytest.approx(4.0)

    @pytest.mark.parametrize("n", [2, 5, 11])
    def test_exact_to_degree_2n_minus_1(self, n):
        x, w = gauss_legendre_rule(n, -2.0, 3.0)
        deg = 2 * n - 1
        exact = (3.0 ** (deg + 1) - (-2.0) ** (deg + 1)) / (deg + 1)
        assert np.dot(w, x ** deg) == pytest.approx(exact, rel=1e-12)

    def test_reversed_interval_integrates_with_sign(self):
        x, w = gauss_legendre_rule(4, 1.0, 0.0)
        assert np.dot(w, np.ones_like(x)) == pytest.approx(-1.0, abs=1e-14)


class TestGaussHermite:
    def test_moments_against_sqrt_pi(self):
        x, w = gauss_hermite_rule(20)
        # int e^{-x^2} dx = sqrt(pi); int x^2 e^{-x^2} dx = sqrt(pi)/2
        assert w.sum() == pytest.approx(np.sqrt(np.pi), rel=1e-14)
        assert np.dot(w, x ** 2) == pytest.approx(np.sqrt(np.pi) / 2, rel=1e-13)

    def test_expectation_of_quadratic(self):
        # E[v^2] for v ~ N(mu, var) is var + mu^2, exact under the rule
        val = gauss_hermite_expectation(
            lambda v: v[..., 0] ** 2, mean=np.array([1.5]), variance=2.0,
            order=8)
        assert val == pytest.approx(2.0 + 1.5 ** 2, rel=1e-13)

    def test_expectation_three_dimensional(self):
        mean = np.array([0.5, -1.0, 2.0])
        val = gauss_hermite_expectation(
            lambda v: v[..., 0] * v[..., 1] + v[..., 2], mean=mean,
            variance=0.7, order=6)
        assert val == pytest.approx(0.5 * -1.0 + 2.0, abs=1e-12)


class TestCentralDifference:
    def test_gradient_exact_on_power_of_two_step(self):
        # h = 2^-6 and polynomial values: differences land on exact floats
        f = lambda p: p[0] ** 2 + 3.0 * p[1]
        g = central_difference(f, np.array([1.0, 2.0, 0.0]), 2.0 ** -6, "grad")
        assert g[0] == pytest.approx(2.0, abs=1e-10)
        assert g[1] == pytest.approx(3.0, abs=1e-12)
        assert g[2] == pytest.approx(0.0, abs=1e-12)

    def test_laplacian_of_quadratic(self):
        f = lambda p: p[0] ** 2 + 2.0 * p[1] ** 2 - p[2] ** 2
        lap = central_difference(f, np.zeros(3), 2.0 ** -5, "laplacian")
        assert lap == pytest.approx(4.0, abs=1e-8)

    def test_second_mixed_matrix(self):
        f = lambda p: p[0] * p[1] + p[1] * p[2]
        m = central_difference(f, np.array([0.3, -0.2, 0.9]), 2.0 ** -5,
                               "second_mixed")
        expect = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
        assert np.allclose(m, expect, atol=1e-8)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            central_difference(lambda p: 0.0, np.zeros(3), 1e-3, "jacobian")


class TestQuadratureConfig:
    def test_defaults_valid(self):
        QuadratureConfig()

    @pytest.mark.parametrize("field,value", [
        ("radial_nodes", 0), ("truncation_radius", -1.0), ("fd_step", 0.0),
    ])
    def test_rejects_bad_values(self, field, value):
        with pytest.raises(ValueError):
            QuadratureConfig(**{field: value})


class TestSingularKernelIntegral:
    def test_constant_field_gives_exact_zero(self):
        # stencils subtract identical floats, so the integrand is exactly 0
        T = lambda pts: np.broadcast_to(np.eye(3), (len(pts), 3, 3)).copy()
        q = singular_kernel_integral(T, np.zeros(3))
        assert np.all(q == 0.0)

    @staticmethod
    def _gaussian_matrix_field(x):
        # T = delta^jk (y1 - x1) exp(-|y - x|^2); the double divergence is
        # the Laplacian of the scalar, and the integral telescopes to the
        # gradient of the Newtonian potential of a Gaussian, giving exactly
        # (-1, 0, 0) at the base point.
        def T(pts):
            z = pts - x[None, :]
            g = z[:, 0] * np.exp(-np.sum(z * z, axis=-1))
            return g[:, None, None] * np.eye(3)[None]
        return T

    def test_gaussian_oracle(self):
        x = np.array([0.3, -0.2, 0.1])
        q = singular_kernel_integral(self._gaussian_matrix_field(x), x)
        assert q[0] == pytest.approx(-1.0, abs=1e-4)
        assert abs(q[1]) < 1e-9 and abs(q[2]) < 1e-9

    def test_translation_covariance(self):
        x1 = np.array([0.3, -0.2, 0.1])
        x2 = x1 + np.array([5.0, -2.0, 1.0])
        q1 = singular_kernel_integral(self._gaussian_matrix_field(x1), x1)
        q2 = singular_kernel_integral(self._gaussian_matrix_field(x2), x2)
        # stencil rounding differs between base points, exact equality is out
        assert np.max(np.abs(q1 - q2)) < 1e-10

    def test_gaussian_oracle_brute_force(self):
        # Independent confirmation on a Cartesian product grid. The kernel's
        # point singularity is integrable but slows convergence to O(1/n), so
        # the tolerance is loose; the transverse components still vanish by
        # symmetry at round-off level.
        x = np.zeros(3)
        n, L = 160, 7.0
        nodes, weights = gauss_legendre_rule(n, -L, L)
        Y1, Y2, Y3 = np.meshgrid(nodes, nodes, nodes, indexing="ij")
        W = (weights[:, None, None] * weights[None, :, None]
             * weights[None, None, :])
        r2 = Y1 ** 2 + Y2 ** 2 + Y3 ** 2
        g = np.exp(-r2)
        # double divergence of delta^jk y1 g = laplacian of y1 g, analytic
        lap = (-10.0 * Y1 + 4.0 * Y1 * r2) * g
        r3 = np.maximum(r2, 1e-300) ** 1.5
        q1 = float(np.sum(W * Y1 / (4.0 * np.pi * r3) * lap))
        q2 = float(np.sum(W * Y2 / (4.0 * np.pi * r3) * lap))
        assert q1 == pytest.approx(-1.0, abs=1.5e-2)
        assert abs(q2) < 1e-12

    def test_truncation_verification_warns_on_slow_decay(self):
        def T(pts):
            # 1/(1+|y|^2) decays too slowly for the truncated integral
            z = np.asarray(pts)
            g = z[:, 0] / (1.0 + np.sum(z * z, axis=-1))
            return g[:, None, None] * np.eye(3)[None]
        cfg = QuadratureConfig(radial_nodes=16, polar_nodes=8,
                               azimuthal_nodes=16, verify_truncation=True,
                               tolerance=1e-10)
        with pytest.warns(RuntimeWarning, match="truncation"):
            singular_kernel_integral(T, np.zeros(3), cfg)

    def test_non_finite_field_raises(self):
        def T(pts):
            out = np.zeros((len(pts), 3, 3))
            out[0, 0, 0] = np.inf
            return out
        with pytest.raises(FloatingPointError):
            singular_kernel_integral(T, np.zeros(3))
