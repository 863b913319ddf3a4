"""Tests for the closed-form SBM density, CDF, sampler and semigroup quadrature."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from skewsim.core import ParameterError, RngStream, make_skew
from skewsim.density import (
    sample_marginal,
    semigroup_apply,
    transition_cdf,
    transition_cdf_and_sample,
    transition_density,
)


def gauss(t, z):
    return np.exp(-(z**2) / (2 * t)) / np.sqrt(2 * np.pi * t)


class TestTransitionDensity:
    def test_brownian_case_is_heat_kernel(self):
        sk = make_skew(alpha=0.5)
        assert transition_density(1.0, 0.3, 0.7, sk) == pytest.approx(gauss(1.0, -0.4), rel=1e-14)

    def test_mass_on_positive_halfline_from_zero(self):
        # P_0[X_t >= 0] = alpha
        sk = make_skew(alpha=0.7)
        val, _ = quad(lambda y: transition_density(1.0, 0.0, y, sk), 0, np.inf)
        assert val == pytest.approx(0.7, abs=1e-10)

    def test_opposite_sign_case(self):
        # q(1, 0.3, -0.2) = 2(1-alpha) g(0.5) for alpha = 0.7
        sk = make_skew(alpha=0.7)
        expected = 2 * 0.3 * gauss(1.0, 0.5)
        got = transition_density(1.0, 0.3, -0.2, sk)
        assert got == pytest.approx(expected, rel=1e-14)
        assert got == pytest.approx(0.21124, abs=5e-6)

    def test_same_side_case(self):
        sk = make_skew(alpha=0.7)
        got = transition_density(1.0, 0.3, 0.7, sk)
        assert got == pytest.approx(gauss(1, -0.4) + 0.4 * gauss(1, 1.0), rel=1e-14)

    def test_conservation(self):
        for al in (0.1, 0.5, 0.9):
            for t, x in ((0.25, 0.0), (1.0, 0.7), (4.0, -1.3)):
                sk = make_skew(alpha=al)
                val = sum(
                    quad(lambda y: transition_density(t, x, y, sk), a, b, limit=200)[0]
                    for a, b in ((-np.inf, 0), (0, np.inf))
                )
                assert val == pytest.approx(1.0, abs=1e-8)

    def test_weighted_detailed_balance_exact(self):
        # w(x) q(t,x,y) = w(y) q(t,y,x) with w = alpha on R+, 1-alpha on R-
        sk = make_skew(alpha=0.7)

        def w(z):
            return 0.7 if z >= 0 else 0.3

        rng = np.random.default_rng(0)
        for _ in range(200):
            x, y = rng.normal(size=2) * 2
            t = rng.uniform(0.05, 5.0)
            lhs = w(x) * transition_density(t, x, y, sk)
            rhs = w(y) * transition_density(t, y, x, sk)
            assert abs(lhs - rhs) < 1e-13

    def test_chapman_kolmogorov(self):
        sk = make_skew(alpha=0.7)
        s, t = 0.5, 0.8
        for x, y in ((0.3, -0.4), (-1.0, 0.2), (0.0, 0.6)):
            val = sum(
                quad(
                    lambda z: transition_density(s, x, z, sk) * transition_density(t, z, y, sk),
                    a,
                    b,
                    limit=200,
                )[0]
                for a, b in ((-np.inf, 0), (0, np.inf))
            )
            assert val == pytest.approx(transition_density(s + t, x, y, sk), abs=1e-7)

    def test_jump_in_y_at_zero(self):
        sk = make_skew(alpha=0.7)
        up = transition_density(1.0, 0.5, 1e-12, sk)
        dn = transition_density(1.0, 0.5, -1e-12, sk)
        assert up / dn == pytest.approx(0.7 / 0.3, rel=1e-9)

    def test_rejects_nonpositive_time(self):
        with pytest.raises(ParameterError):
            transition_density(0.0, 0.0, 0.0, make_skew(alpha=0.5))


class TestTransitionCdf:
    def test_limits_and_value_at_zero(self):
        sk = make_skew(alpha=0.7)
        assert transition_cdf(1.0, 0.0, -1e-15, sk) == pytest.approx(0.3, abs=1e-12)
        assert transition_cdf(1.0, 0.0, 60.0, sk) == pytest.approx(1.0, abs=1e-15)
        assert transition_cdf(1.0, 0.0, -60.0, sk) == pytest.approx(0.0, abs=1e-15)

    @settings(max_examples=60, deadline=None)
    @given(
        st.floats(0.01, 0.99),
        st.floats(0.05, 4.0),
        st.floats(-2.0, 2.0),
    )
    def test_monotone_and_matches_density_derivative(self, alpha, t, x):
        sk = make_skew(alpha=alpha)
        z = np.linspace(-5 * np.sqrt(t) - abs(x), 5 * np.sqrt(t) + abs(x), 301)
        F = transition_cdf(t, x, z, sk)
        assert np.all(np.diff(F) >= -1e-14)
        # centered finite difference of F recovers q away from the kink at 0
        h = 1e-5
        for probe in (-1.1, 0.37, 1.9):
            fd = (transition_cdf(t, x, probe + h, sk) - transition_cdf(t, x, probe - h, sk)) / (
                2 * h
            )
            assert fd == pytest.approx(transition_density(t, x, probe, sk), rel=1e-6, abs=1e-9)

    def test_cdf_consistent_with_quadrature(self):
        sk = make_skew(alpha=0.25)
        t, x = 0.7, 0.4
        for z in (-1.0, -0.1, 0.3, 2.0):
            pieces = [(-np.inf, min(z, 0.0))]
            if z > 0:
                pieces.append((0.0, z))
            val = sum(
                quad(lambda y: transition_density(t, x, y, sk), a, b, limit=200)[0]
                for a, b in pieces
            )
            assert transition_cdf(t, x, z, sk) == pytest.approx(val, abs=1e-10)


class TestSampling:
    def test_cdf_and_sample_deterministic(self):
        sk = make_skew(alpha=0.7)
        cdf, draw1 = transition_cdf_and_sample(1.0, 0.0, sk, RngStream(5, 1))
        _, draw2 = transition_cdf_and_sample(1.0, 0.0, sk, RngStream(5, 1))
        assert draw1 == draw2
        assert cdf(draw1) == pytest.approx(RngStream(5, 1).generator().random(), abs=1e-10)

    def test_batch_matches_inverse_cdf(self):
        sk = make_skew(alpha=0.3)
        draws = sample_marginal(0.8, 0.2, sk, RngStream(9, 0), 64)
        u = RngStream(9, 0).generator().random(64)
        np.testing.assert_allclose(transition_cdf(0.8, 0.2, draws, sk), u, atol=1e-10)

    def test_sign_frequency_binomial(self):
        # P_0[X_1 >= 0] = 0.7; binomial sigma at 1e6 draws is ~4.6e-4
        n = 10**6
        draws = sample_marginal(1.0, 0.0, make_skew(alpha=0.7), RngStream(123, 0), n)
        freq = np.mean(draws >= 0.0)
        sigma = np.sqrt(0.7 * 0.3 / n)
        assert abs(freq - 0.7) < 3 * sigma


class TestSemigroup:
    def test_constant_preserved(self):
        for al in (0.2, 0.5, 0.8):
            sk = make_skew(alpha=al)
            got = semigroup_apply(0.7, lambda y: np.full_like(y, 3.25), -0.4, sk)
            assert got == pytest.approx(3.25, abs=1e-9)

    def test_indicator_at_zero_gives_alpha(self):
        sk = make_skew(alpha=0.7)
        got = semigroup_apply(2.0, lambda y: (np.asarray(y) >= 0).astype(float), 0.0, sk)
        assert got == pytest.approx(0.7, abs=1e-9)

    def test_gaussian_bump_brownian_closed_form(self):
        # heat semigroup of exp(-y^2/2): sqrt(1/(1+t)) exp(-x^2/(2(1+t)))
        t, x = 1.0, 0.3
        expected = np.sqrt(1 / (1 + t)) * np.exp(-(x**2) / (2 * (1 + t)))
        got = semigroup_apply(t, lambda y: np.exp(-np.asarray(y) ** 2 / 2), x, make_skew(alpha=0.5))
        assert got == pytest.approx(expected, abs=1e-9)

    def test_maximum_principle(self):
        sk = make_skew(alpha=0.8)
        phi = lambda y: np.tanh(np.asarray(y))
        for x in (-1.0, 0.0, 2.0):
            val = semigroup_apply(0.5, phi, x, sk)
            assert -1.0 <= val <= 1.0

    def test_transmission_flux_ratio_second_order(self):
        # alpha grad u(0+) = (1-alpha) grad u(0-), error O(h^2) in the differencing step
        sk = make_skew(alpha=0.7)
        t = 0.5
        phi = lambda y: np.exp(-((np.asarray(y) - 0.8) ** 2))

        def flux_gap(h):
            up = [semigroup_apply(t, phi, z, sk) for z in (0.0, h, 2 * h)]
            dn = [semigroup_apply(t, phi, z, sk) for z in (0.0, -h, -2 * h)]
            dplus = (-3 * up[0] + 4 * up[1] - up[2]) / (2 * h)
            dminus = (3 * dn[0] - 4 * dn[1] + dn[2]) / (2 * h)
            return abs(0.7 * dplus - 0.3 * dminus)

        g1, g2 = flux_gap(0.08), flux_gap(0.04)
        assert g2 < g1 / 2.5  # ~4x for a clean O(h^2) scheme

    def test_heat_equation_away_from_zero(self):
        sk = make_skew(alpha=0.7)
        phi = lambda y: np.exp(-np.asarray(y) ** 2)
        t, x, h = 0.6, 0.9, 0.02
        u_tp = semigroup_apply(t + h, phi, x, sk)
        u_tm = semigroup_apply(t - h, phi, x, sk)
        u_c = semigroup_apply(t, phi, x, sk)
        u_xp = semigroup_apply(t, phi, x + h, sk)
        u_xm = semigroup_apply(t, phi, x - h, sk)
        dt_u = (u_tp - u_tm) / (2 * h)
        dxx_u = (u_xp - 2 * u_c + u_xm) / h**2
        assert dt_u == pytest.approx(0.5 * dxx_u, abs=5e-3)
