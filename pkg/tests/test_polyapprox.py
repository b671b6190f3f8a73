import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from skvp.polyapprox import Polynomial, PolyFitError, fit_tanh_poly, l2_errors, poly_state_evolution
from skvp.profile import build_banded_toeplitz, build_mean_field
from skvp.scalar import ModelParams, default_quadrature, gauss_hermite, iterate_q


def adaptive_errors(p, params, alpha):
    dp = p.deriv()
    dens = lambda z: math.exp(-z * z / 2) / math.sqrt(2 * math.pi)
    # the Gaussian weight is below 1e-300 outside [-37, 37]
    e0 = integrate.quad(lambda z: (float(p(alpha * z)) - math.tanh(alpha * z + params.h)) ** 2 * dens(z), -37, 37, epsabs=1e-13, limit=400)[0]
    e1 = integrate.quad(lambda z: (float(dp(alpha * z)) - 1 / math.cosh(alpha * z + params.h) ** 2) ** 2 * dens(z), -37, 37, epsabs=1e-13, limit=400)[0]
    return e0, e1


class TestPolynomial:
    def test_trailing_zeros_trimmed(self):
        assert Polynomial([1.0, 2.0, 0.0, 0.0]).degree == 1
        assert Polynomial([0.0, 0.0]).degree == 0

    @given(coeffs=st.lists(st.floats(-5, 5), min_size=1, max_size=26), seed=st.integers(0, 2**32 - 1))
    def test_horner_against_compensated_sum(self, coeffs, seed):
        p = Polynomial(coeffs)
        for x in np.random.default_rng(seed).uniform(-3, 3, 5):
            terms = [c * x**k for k, c in enumerate(p.coeffs)]
            exact = math.fsum(terms)
            scale = math.fsum(abs(t) for t in terms)
            assert abs(float(p(x)) - exact) <= 1e-13 * max(scale, 1e-300) + 1e-300

    @given(coeffs=st.lists(st.integers(-100, 100), min_size=2, max_size=26))
    def test_derivative_coefficients(self, coeffs):
        p = Polynomial([float(c) for c in coeffs])
        dp = p.deriv()
        for k in range(p.degree):
            assert dp.coeffs[k] == (k + 1) * p.coeffs[k + 1]
        if p.degree == 0:
            assert dp.to_list() == [0.0]

    def test_square(self):
        p = Polynomial([1.0, 2.0])
        assert p.square().to_list() == [1.0, 4.0, 4.0]


class TestFit:
    def test_constant_term_is_tanh_h(self):
        params = ModelParams(0.4, 0.3)
        p = fit_tanh_poly(0.01, 1.0, params)
        assert p.coeffs[0] == math.tanh(0.3)
        assert float(p(0.0)) == math.tanh(0.3)

    def test_odd_without_field(self):
        p = fit_tanh_poly(0.01, math.sqrt(2), ModelParams(0.4, 0.0))
        assert np.all(np.abs(p.coeffs[2::2]) <= 1e-9)
        assert p.coeffs[0] == 0.0

    @pytest.mark.parametrize("e", [0.05, 0.01, 0.002])
    def test_errors_confirmed_by_adaptive_quadrature(self, e):
        params = ModelParams(0.4, 0.3)
        p = fit_tanh_poly(e, math.sqrt(2), params)
        for alpha in [0.01, 0.5, 1.0, 1.2, math.sqrt(2)]:
            e0, e1 = adaptive_errors(p, params, alpha)
            assert e0 <= 1.05 * e and e1 <= 1.05 * e

    def test_lowest_passing_degree(self):
        params = ModelParams(0.4, 0.3)
        p = fit_tanh_poly(0.01, math.sqrt(2), params)
        alphas = np.append(np.arange(0, math.sqrt(2), 0.01), math.sqrt(2))
        e0, e1 = l2_errors(p, params, alphas, default_quadrature())
        assert max(e0.max(), e1.max()) <= 0.01
        # degree grows as e shrinks
        assert fit_tanh_poly(0.002, math.sqrt(2), params).degree > p.degree > fit_tanh_poly(0.05, math.sqrt(2), params).degree

    def test_unreachable_target_reports_achieved(self):
        with pytest.raises(PolyFitError) as info:
            fit_tanh_poly(1e-6, math.sqrt(2), ModelParams(0.4, 0.3))
        assert info.value.achieved > info.value.target == 1e-6

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            fit_tanh_poly(0.0, 1.0, ModelParams(0.4, 0.3))
        with pytest.raises(ValueError):
            fit_tanh_poly(0.1, -1.0, ModelParams(0.4, 0.3))


class TestPolyStateEvolution:
    def test_constant_activation(self):
        prof = build_banded_toeplitz(20, "triangular", 4)
        params = ModelParams(0.5, 0.3)
        cq = poly_state_evolution(prof, params, Polynomial([0.7]), k=4).cq_iterates
        assert not np.any(cq[0])
        np.testing.assert_allclose(cq[1], 0.5 * 0.49 * prof.row_sums(), atol=1e-15)
        for later in cq[2:]:
            np.testing.assert_allclose(later, cq[1], atol=1e-15)

    def test_quadrature_order_escalates(self):
        prof = build_mean_field(8)
        f = Polynomial(np.linspace(0.1, 1, 11))
        out = poly_state_evolution(prof, ModelParams(0.3, 0.0), f, quad=gauss_hermite(3), k=2)
        assert out.order_used == 11
        # exact moment: with q^0 = 0 the first step only sees f(0)^2
        np.testing.assert_allclose(out.cq_iterates[1], 0.3 * 0.01 * prof.row_sums(), atol=1e-16)

    def test_squared_moment_against_closed_form(self):
        # f(x) = a + b x: E f(X)^2 = a^2 + b^2 v
        prof = build_mean_field(6)
        params = ModelParams(0.4, 0.0)
        cq = poly_state_evolution(prof, params, Polynomial([0.2, 0.9]), k=3).cq_iterates
        for a, b in zip(cq, cq[1:]):
            np.testing.assert_allclose(b, 0.4 * prof.matvec(0.04 + 0.81 * a), rtol=1e-13)

    @pytest.mark.parametrize("e", [0.002, 0.0009])
    def test_envelope_mean_field_n64(self, e):
        prof = build_mean_field(64)
        params = ModelParams(0.5, 0.3)
        f = fit_tanh_poly(e, 1.0, params)
        cq = poly_state_evolution(prof, params, f, k=20).cq_iterates
        q = iterate_q(prof, params, k=20).q_iterates
        assert max(np.max(np.abs(a - b)) for a, b in zip(cq, q)) <= 10 * math.sqrt(e)
        assert max(np.max(c) for c in cq) <= 1.0
