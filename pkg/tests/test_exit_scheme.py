"""Tests for killed-kernel series, exact interval exit sampling, schemes C and E."""

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import kstest

from skewsim.core import (
    ParameterError,
    PiecewiseDiffusion,
    RngStream,
    brownian_coefficients,
    make_skew,
)
from skewsim.exit_scheme import (
    ExitGrid,
    gen_scheme_C,
    gen_scheme_E,
    interval_exit_sample,
    interval_exit_sample_batch,
    sample_unit_exit_time,
    scheme_C_marginal_batch,
    scheme_E_exit_batch,
    unit_exit_cdf_left,
    unit_exit_cdf_right,
    unit_killed_cdf,
    unit_survival,
)
from skewsim.scale_speed import build as build_scale
from skewsim.scale_speed import exit_time_moments, hitting_probability
from skewsim.transform import BrownianReduction, brownian_reduction, sbm_reduction

SWITCH = 0.125  # unit-interval switch time (t/h^2 = 0.5 on the symmetric interval)


def identity_reduction():
    return brownian_reduction(brownian_coefficients())


class TestKernelSeries:
    @pytest.mark.parametrize("x", [0.5, 0.3, 0.77])
    def test_forms_agree_at_switch_point(self, x):
        below = SWITCH
        above = np.nextafter(SWITCH, 1.0)
        assert abs(
            float(unit_survival(np.array([below]), x)[0])
            - float(unit_survival(np.array([above]), x)[0])
        ) < 1e-12
        assert abs(
            float(unit_exit_cdf_right(np.array([below]), x)[0])
            - float(unit_exit_cdf_right(np.array([above]), x)[0])
        ) < 1e-12
        for z in (0.2, 0.5, 0.9):
            assert abs(
                float(unit_killed_cdf(below, z, x)) - float(unit_killed_cdf(above, z, x))
            ) < 1e-12

    def test_survival_monotone_normalized(self):
        ts = np.geomspace(1e-4, 5.0, 200)
        s = unit_survival(ts, 0.4)
        assert np.all(s <= 1.0) and np.all(s >= 0.0)
        assert np.all(np.diff(s) <= 1e-14)
        assert s[0] == pytest.approx(1.0, abs=1e-12)
        assert s[-1] < 1e-10

    @pytest.mark.parametrize("x", [0.5, 0.25, 0.9])
    def test_side_split_sums_to_one(self, x):
        ts = np.array([0.01, 0.05, 0.125, 0.2, 0.5, 2.0])
        total = unit_exit_cdf_right(ts, x) + unit_exit_cdf_left(ts, x) + unit_survival(ts, x)
        np.testing.assert_allclose(total, 1.0, atol=1e-12)

    def test_killed_cdf_normalizes_to_survival(self):
        for t in (0.05, 0.3):
            for x in (0.5, 0.35):
                assert float(unit_killed_cdf(t, 1.0, x)) == pytest.approx(
                    float(unit_survival(np.array([t]), x)[0]), abs=1e-12
                )

    def test_exit_side_limit_is_scale_ratio(self):
        for x in (0.2, 0.5, 0.8):
            assert float(unit_exit_cdf_right(np.array([40.0]), x)[0]) == pytest.approx(
                x, abs=1e-12
            )

    def test_mean_exit_time_from_survival(self):
        # E[tau] = integral of the survival function = x(1-x) on the unit interval
        for x in (0.5, 0.3):
            val, _ = quad(lambda t: float(unit_survival(np.array([t]), x)[0]), 0, 40,
                          limit=300)
            assert val == pytest.approx(x * (1 - x), abs=1e-9)


class TestIntervalExitSample:
    def test_mean_exit_time(self):
        # E tau = h^2 by optional stopping; full 1e6-draw run lives in acceptance
        _, tau, _ = interval_exit_sample_batch(1.0, make_skew(alpha=0.5), RngStream(21, 0),
                                               2 * 10**5)
        se = tau.std() / np.sqrt(tau.size)
        assert abs(tau.mean() - 1.0) < 3 * se

    def test_exit_side_frequency(self):
        _, _, side = interval_exit_sample_batch(1.0, make_skew(alpha=0.7), RngStream(22, 0),
                                                10**5)
        freq = np.mean(side > 0)
        assert abs(freq - 0.7) < 3 * np.sqrt(0.7 * 0.3 / side.size)

    def test_scaling_in_h(self):
        _, tau, _ = interval_exit_sample_batch(0.25, make_skew(alpha=0.5), RngStream(23, 0),
                                               10**5)
        se = tau.std() / np.sqrt(tau.size)
        assert abs(tau.mean() - 0.0625) < 3 * se

    def test_survival_probability_against_bridge_corrected_euler(self):
        # Brownian exit from (-1, 1): MC with per-step Brownian-bridge crossing
        # correction (naive discrete monitoring at this dt would bias by ~0.6%)
        h, t, dt, n = 1.0, 1.0, 1e-3, 2 * 10**5
        series = float(unit_survival(np.array([t / (2 * h) ** 2]))[0])
        g = np.random.default_rng(99)
        steps = int(round(t / dt))
        alive = np.ones(n, dtype=bool)
        x = np.zeros(n)
        for _ in range(steps):
            x_new = x + np.sqrt(dt) * g.standard_normal(n)
            crossed = np.abs(x_new) >= h
            p_up = np.exp(-2.0 * np.clip(h - x, 0, None) * np.clip(h - x_new, 0, None) / dt)
            p_dn = np.exp(-2.0 * np.clip(h + x, 0, None) * np.clip(h + x_new, 0, None) / dt)
            bridge = g.random(n) < np.clip(p_up + p_dn, 0, 1)
            alive &= ~(crossed | bridge)
            x = x_new
        mc = alive.mean()
        se = np.sqrt(mc * (1 - mc) / n)
        assert abs(series - mc) < 3 * se

    def test_horizon_branch(self):
        res = interval_exit_sample(1.0, make_skew(alpha=0.7), RngStream(24, 3), t_max=0.5)
        if res.exited:
            assert 0 < res.time <= 0.5 and abs(res.position) == 1.0
        else:
            assert res.time == 0.5 and abs(res.position) < 1.0

    def test_killed_position_law(self):
        # with a horizon, survivors' position follows the killed kernel
        t_max = 0.5
        exited, _, pos = interval_exit_sample_batch(
            1.0, make_skew(alpha=0.5), RngStream(25, 0), 2 * 10**4, t_max=t_max
        )
        kept = pos[~exited]
        tu = t_max / 4.0
        surv = float(unit_survival(np.array([tu]))[0])

        def pos_cdf(v):
            # position in (-1,1) maps to unit coordinate (v+1)/2
            return unit_killed_cdf(tu, (np.asarray(v) + 1) / 2) / surv

        stat = kstest(kept, pos_cdf).statistic
        assert stat < 1.628 / np.sqrt(kept.size)

    def test_conditional_exit_time_law(self):
        # exit times given {tau <= t_max} follow the truncated survival law
        t_max = 0.5
        exited, time, _ = interval_exit_sample_batch(
            1.0, make_skew(alpha=0.5), RngStream(26, 0), 2 * 10**4, t_max=t_max
        )
        taus = time[exited]
        tu = t_max / 4.0
        cap = 1.0 - float(unit_survival(np.array([tu]))[0])

        def tau_cdf(s):
            return (1.0 - unit_survival(np.asarray(s) / 4.0)) / cap

        stat = kstest(taus, tau_cdf).statistic
        assert stat < 1.628 / np.sqrt(taus.size)

    def test_rejects_bad_halfwidth(self):
        with pytest.raises(ParameterError):
            interval_exit_sample(0.0, make_skew(alpha=0.5), RngStream(1, 0))


class TestExitGrid:
    def test_symmetry_enforced(self):
        with pytest.raises(ParameterError, match="symmetry"):
            ExitGrid((-1.0, 0.0, 0.5), skew_points=((0.0, 0.4),))
        ExitGrid((-0.5, 0.0, 0.5), skew_points=((0.0, 0.4),))

    def test_skew_point_must_be_interior_grid_point(self):
        with pytest.raises(ParameterError):
            ExitGrid((-1.0, 1.0), skew_points=((0.0, 0.4),))
        with pytest.raises(ParameterError):
            ExitGrid((0.0, 1.0, 2.0), skew_points=((0.0, 0.4),))

    def test_uniform_builder(self):
        grid = ExitGrid.uniform(-1.0, 1.0, 8, skew_points=((0.0, 1 / 3),))
        assert 0.0 in grid.points and len(grid.points) == 9


class TestSchemeC:
    def test_structure_and_neighbor_steps(self):
        red = sbm_reduction(make_skew(alpha=0.7))
        grid = ExitGrid.uniform(-4.0, 4.0, 32, skew_points=red.skew_points)
        path = gen_scheme_C(red, grid, horizon=1.0, x0=0.0, rng=RngStream(31, 5))
        assert np.all(np.diff(path.times) > 0)
        steps = np.abs(np.diff(path.positions))
        np.testing.assert_allclose(steps, 0.25, atol=1e-12)
        assert path.terminal is not None
        assert path.terminal[0] == 1.0

    def test_brownian_marginal_gaussian(self):
        red = identity_reduction()
        vals = scheme_C_marginal_batch(red, 6.0, 24, 1.0, 0.0, RngStream(32, 0), 2 * 10**4)
        stat = kstest(vals, lambda z: np.asarray(
            __import__("scipy.special", fromlist=["ndtr"]).ndtr(z))).statistic
        assert stat < 1.628 / np.sqrt(vals.size)

    def test_hitting_frequency_two_piece_medium(self):
        # a = (1,4) medium: Y hits +1 before -1 from 0 with probability 2/3
        from skewsim.exit_scheme import scheme_C_hit_batch

        coeffs = PiecewiseDiffusion((0.0,), (1.0, 4.0), (1.0, 1.0))
        red = brownian_reduction(coeffs)
        oracle = hitting_probability(build_scale(coeffs), 0.0, -1.0, float(red.G_inv(1.0)))
        assert oracle == pytest.approx(2 / 3, abs=1e-12)
        grid = ExitGrid.uniform(-1.0, 1.0, 8, skew_points=red.skew_points)
        n = 10**5
        ends = scheme_C_hit_batch(red, grid, 0.0, RngStream(33, 0), n)
        freq = np.mean(ends == 1.0)
        assert abs(freq - 2 / 3) < 3 * np.sqrt(2 / 9 / n)
        # the full event machinery agrees on a small sample
        hits = sum(
            gen_scheme_C(red, grid, np.inf, 0.0, RngStream(63, 0).child(i),
                         map_back=False).positions[-1] == 1.0
            for i in range(200)
        )
        assert abs(hits / 200 - 2 / 3) < 3 * np.sqrt(2 / 9 / 200)

    def test_sbm_marginal_vs_closed_form(self):
        from skewsim.density import transition_cdf

        sk = make_skew(alpha=0.7)
        red = sbm_reduction(sk)
        vals = scheme_C_marginal_batch(red, 6.0, 24, 1.0, 0.0, RngStream(34, 0), 2 * 10**4)
        stat = kstest(vals, lambda z: transition_cdf(1.0, 0.0, z, sk)).statistic
        assert stat < 1.628 / np.sqrt(vals.size)

    def test_asymmetric_side_time_law(self):
        # side frequency = scale ratio; side-conditional times follow the series CDF
        from skewsim.exit_scheme import sample_unit_side_time

        g = RngStream(35, 0).generator()
        n = 2 * 10**4
        x = 0.3
        go_right, tau = sample_unit_side_time(g.random(n), g.random(n), x)
        assert abs(np.mean(go_right) - x) < 3 * np.sqrt(x * (1 - x) / n)
        taus_r = tau[go_right]

        def right_cdf(s):
            return unit_exit_cdf_right(np.asarray(s), x) / x

        stat = kstest(taus_r, right_cdf).statistic
        assert stat < 1.628 / np.sqrt(taus_r.size)
        # conditional mean given a right exit: (1 - x^2)/3 (Green-function value)
        se = taus_r.std() / np.sqrt(taus_r.size)
        assert abs(taus_r.mean() - (1 - x**2) / 3) < 3 * se

    def test_asymmetric_intervals_in_general_path(self):
        # non-uniform grid away from the skew point still reproduces hitting odds
        red = identity_reduction()
        grid = ExitGrid((-1.0, -0.4, 0.1, 0.3, 1.0))
        n = 400
        hits = 0
        for i in range(n):
            p = gen_scheme_C(red, grid, np.inf, 0.1, RngStream(35, 0).child(i))
            hits += p.positions[-1] == 1.0
        # Brownian scale: P[hit 1 before -1 from 0.1] = 0.55
        assert abs(hits / n - 0.55) < 3 * np.sqrt(0.55 * 0.45 / n)

    def test_grid_missing_skew_point_rejected(self):
        red = sbm_reduction(make_skew(alpha=0.7))
        grid = ExitGrid((-1.0, -0.25, 0.25, 1.0))
        with pytest.raises(ParameterError):
            gen_scheme_C(red, grid, 1.0, 0.25, RngStream(36, 0))


class TestSchemeE:
    def test_brownian_uniform_grid_tables(self):
        m = build_scale(brownian_coefficients())
        delta = 0.25
        grid = np.arange(-1.0, 1.0 + 1e-12, delta)
        from skewsim.exit_scheme import _scheme_E_tables

        p_up, m_up, m_dn = _scheme_E_tables(m, grid)
        np.testing.assert_allclose(p_up[1:-1], 0.5, atol=1e-12)
        np.testing.assert_allclose(m_up[1:-1], delta**2, atol=1e-9)
        np.testing.assert_allclose(m_dn[1:-1], delta**2, atol=1e-9)

    def test_sbm_side_probability_from_zero(self):
        sk = make_skew(alpha=0.7)
        m = build_scale(sk)
        grid = np.linspace(-1.0, 1.0, 9)
        from skewsim.exit_scheme import _scheme_E_tables

        p_up, _, _ = _scheme_E_tables(m, grid)
        assert p_up[4] == pytest.approx(0.7, abs=1e-12)

    def test_two_piece_exit_time_matches_green_quadrature(self):
        coeffs = PiecewiseDiffusion((0.0,), (1.0, 3.0), (1.0, 1.0))
        m = build_scale(coeffs)
        target = exit_time_moments(m, 0.0, -1.0, 1.0).mean
        grid = np.linspace(-1.0, 1.0, 17)
        clock, _ = scheme_E_exit_batch(m, grid, 0.0, RngStream(41, 0), 2 * 10**4)
        se = clock.std() / np.sqrt(clock.size)
        assert abs(clock.mean() - target) < 3 * se

    def test_clock_and_sides_on_path(self):
        m = build_scale(make_skew(alpha=0.7))
        grid = np.linspace(-2.0, 2.0, 17)
        path = gen_scheme_E(m, grid, 0.5, 0.0, RngStream(42, 1))
        assert np.all(np.diff(path.times) > 0)
        np.testing.assert_allclose(np.abs(np.diff(path.positions)), 0.25, atol=1e-12)

    def test_conditional_clock_decomposition(self):
        # mean of the sum of conditional increments equals the interval exit time
        coeffs = PiecewiseDiffusion((0.0,), (1.0, 4.0), (1.0, 1.0))
        m = build_scale(coeffs)
        clock, pos = scheme_E_exit_batch(m, np.linspace(-1.0, 1.0, 9), 0.0,
                                         RngStream(43, 0), 2 * 10**4)
        se = clock.std() / np.sqrt(clock.size)
        assert abs(clock.mean() - 0.4) < 3 * se  # hand-integrated Green value
        # exit side frequency matches the scale ratio
        p_hi = np.mean(pos == 1.0)
        p_expected = hitting_probability(m, 0.0, -1.0, 1.0)
        assert abs(p_hi - p_expected) < 3 * np.sqrt(p_expected * (1 - p_expected) / pos.size)
