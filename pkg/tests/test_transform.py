"""Tests for the local-time removal transform, SDE map and Brownian reduction."""

import numpy as np
import pytest

from skewsim.core import (
    ParameterError,
    PiecewiseDiffusion,
    SignedAtomicMeasure,
    brownian_coefficients,
    make_skew,
    sbm_coefficients,
)
from skewsim.scale_speed import build as build_scale
from skewsim.transform import (
    brownian_reduction,
    legall_function,
    pushforward_measure,
    recover_measure_atoms,
    sbm_reduction,
    sde_from_divergence,
)

LN3 = np.log(3.0)


class TestLegallFunction:
    def test_zero_measure_identity(self):
        tr = legall_function(SignedAtomicMeasure())
        xs = np.linspace(-3, 3, 11)
        np.testing.assert_allclose(tr.f(xs), 1.0, atol=1e-15)
        np.testing.assert_allclose(tr.F(xs), xs, atol=1e-15)
        np.testing.assert_allclose(tr.F_inv(xs), xs, atol=1e-15)

    def test_single_atom_half(self):
        # (1 - 0.5)/(1 + 0.5) = 1/3 on x >= 0
        tr = legall_function(SignedAtomicMeasure(((0.0, 0.5),)))
        assert float(tr.f(-0.2)) == pytest.approx(1.0, abs=1e-15)
        assert float(tr.f(0.0)) == pytest.approx(1 / 3, abs=1e-15)
        assert float(tr.f(2.0)) == pytest.approx(1 / 3, abs=1e-15)

    def test_proportional_to_sbm_scale(self):
        # F_nu with nu = (2 alpha - 1) delta_0 is (1 - alpha) * S of Eq-26 form
        al = 0.7
        tr = legall_function(SignedAtomicMeasure(((0.0, 2 * al - 1),)))
        m = build_scale(make_skew(alpha=al))
        xs = np.array([-2.0, -0.5, 0.4, 1.3])
        np.testing.assert_allclose(tr.F(xs) / m.S(xs), 1 - al, atol=1e-14)

    def test_f_inverse_round_trip(self):
        tr = legall_function(SignedAtomicMeasure(((-1.0, -0.3), (0.5, 0.7))))
        xs = np.array([-2.5, -1.0, -0.2, 0.5, 0.51, 3.0])
        np.testing.assert_allclose(tr.F_inv(tr.F(xs)), xs, atol=1e-12)

    def test_atom_recovery_round_trip_randomized(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            k = rng.integers(1, 6)
            locs = np.sort(rng.uniform(-3, 3, size=k))
            while np.any(np.diff(locs) < 1e-3):
                locs = np.sort(rng.uniform(-3, 3, size=k))
            wts = rng.uniform(-0.95, 0.95, size=k)
            nu = SignedAtomicMeasure(tuple(zip(locs.tolist(), wts.tolist())))
            tr = legall_function(nu)
            got = recover_measure_atoms(tr.f, tr.f_left, locs)
            np.testing.assert_allclose(got, wts, atol=1e-10)

    def test_continuous_part_round_trip(self):
        # nu^c uniform on [0, 1] with mass 0.3; density recovered as -f'/(2f)
        cum = lambda x: 0.3 * np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        nu = SignedAtomicMeasure(atoms=((0.5, 0.4),), continuous_cum=cum)
        tr = legall_function(nu)
        h = 1e-6
        for x in (0.2, 0.8):
            df = (float(tr.f(x + h)) - float(tr.f(x - h))) / (2 * h)
            dens = -df / (2 * float(tr.f(x)))
            assert dens == pytest.approx(0.3, abs=1e-6)
        # atom recovery unaffected by the continuous part
        got = recover_measure_atoms(tr.f, tr.f_left, np.array([0.5]))
        assert got[0] == pytest.approx(0.4, abs=1e-10)

    def test_rejects_unit_atom(self):
        with pytest.raises(ParameterError):
            legall_function(SignedAtomicMeasure(((0.0, 1.0),)))


class TestSdeFromDivergence:
    def test_brownian_trivial(self):
        sde = sde_from_divergence(brownian_coefficients())
        assert float(sde.sigma(0.3)) == 1.0
        assert float(sde.drift(0.3)) == 0.0
        assert len(sde.nu.atoms) == 0

    def test_two_piece_1_3(self):
        sde = sde_from_divergence(PiecewiseDiffusion((0.0,), (1.0, 3.0), (1.0, 1.0)))
        assert float(sde.sigma(-1.0)) == pytest.approx(1.0)
        assert float(sde.sigma(1.0)) == pytest.approx(np.sqrt(3.0))
        assert sde.nu.atoms == ((0.0, 0.5),)
        assert sde.nu.atoms[0][1] == make_skew(flux_pair=(3.0, 1.0)).beta

    def test_sbm_coefficients_recover_beta(self):
        al = 0.7
        sde = sde_from_divergence(sbm_coefficients(make_skew(alpha=al)))
        assert float(sde.sigma(1.0)) == pytest.approx(1.0, abs=1e-14)
        assert float(sde.sigma(-1.0)) == pytest.approx(1.0, abs=1e-14)
        (loc, w), = sde.nu.atoms
        assert loc == 0.0
        assert w == pytest.approx(2 * al - 1, abs=1e-14)

    def test_smooth_piece_drift(self):
        # a(x) = 2 + x on x >= 0 with da = 1: drift = rho/2
        coeffs = PiecewiseDiffusion(
            (0.0,),
            (1.0, lambda x: 2.0 + x),
            (2.0, 2.0),
            da_pieces=(0.0, 1.0),
        )
        sde = sde_from_divergence(coeffs)
        assert float(sde.drift(0.5)) == pytest.approx(1.0)
        assert float(sde.drift(-0.5)) == pytest.approx(0.0)


class TestBrownianReduction:
    def test_identity_for_brownian(self):
        red = brownian_reduction(brownian_coefficients())
        assert red.skew_points == ()
        xs = np.linspace(-2, 2, 9)
        np.testing.assert_allclose(red.G(xs), xs, atol=1e-15)

    def test_two_piece_1_4(self):
        red = brownian_reduction(PiecewiseDiffusion((0.0,), (1.0, 4.0), (1.0, 1.0)))
        assert float(red.G(-1.0)) == pytest.approx(-1.0, abs=1e-14)
        assert float(red.G(1.0)) == pytest.approx(0.5, abs=1e-14)
        (y0, beta), = red.skew_points
        assert y0 == 0.0
        assert beta == pytest.approx(1 / 3, abs=1e-14)
        np.testing.assert_allclose(red.G_inv(red.G(np.array([-0.7, 0.9]))), [-0.7, 0.9],
                                   atol=1e-14)

    def test_skew_point_matches_scale_pushforward(self):
        # independent check: one-sided slopes of S_X(G^{-1}(y)) at the skew point
        coeffs = PiecewiseDiffusion((0.0,), (1.0, 4.0), (1.0, 1.0))
        red = brownian_reduction(coeffs)
        m = build_scale(coeffs)
        (y0, beta), = red.skew_points
        h = 1e-7
        d_plus = (float(m.S(red.G_inv(y0 + h))) - float(m.S(red.G_inv(y0)))) / h
        d_minus = (float(m.S(red.G_inv(y0))) - float(m.S(red.G_inv(y0 - h)))) / h
        # SBM-like scale: slope(+)/slope(-) = (1-alpha)/alpha  =>  beta from slopes
        assert (d_minus - d_plus) / (d_minus + d_plus) == pytest.approx(beta, abs=1e-9)

    def test_sbm_input_single_skew_point(self):
        red = sbm_reduction(make_skew(alpha=0.7))
        (y0, beta), = red.skew_points
        assert y0 == pytest.approx(0.0, abs=1e-14)
        assert beta == pytest.approx(0.4, abs=1e-12)
        xs = np.linspace(-2, 2, 9)
        np.testing.assert_allclose(red.G(xs), xs, atol=1e-12)

    def test_drift_rejected_without_removal(self):
        coeffs = PiecewiseDiffusion(
            (-1.0, 1.0), (1.0, 1.0, 1.0), (1.0, 1.0, 1.0), b_pieces=(0.0, LN3 / 4, 0.0)
        )
        with pytest.raises(ParameterError):
            brownian_reduction(coeffs, drift_free=True)

    def test_zvonkin_fold_telescopes_to_rescaling_alpha(self):
        # b = 1_[-1,1] ln3/4: folded skew points compose to slope ratio 1/3,
        # i.e. the alpha = 3/4 of the rescaling limit
        coeffs = PiecewiseDiffusion(
            (-1.0, 1.0), (1.0, 1.0, 1.0), (1.0, 1.0, 1.0), b_pieces=(0.0, LN3 / 4, 0.0)
        )
        red = brownian_reduction(coeffs, drift_free=False, window=4.0, n_sub=32)
        log_ratio = sum(np.log((1 - b) / (1 + b)) for _, b in red.skew_points)
        assert np.exp(log_ratio) == pytest.approx(1 / 3, abs=1e-12)
        # sqrt(a~ rho~) = sqrt(a rho): G is the identity
        xs = np.linspace(-3, 3, 7)
        np.testing.assert_allclose(red.G(xs), xs, atol=1e-12)


class TestPushforward:
    def test_matches_transformed_coefficients(self):
        # route A: Eq-53 pushforward of the SDE atoms through piecewise-linear F
        # route B: transform the divergence-form coefficients, then the SDE map
        rng = np.random.default_rng(3)
        for _ in range(20):
            brk = float(rng.uniform(-1, 1))
            a_m, a_p = rng.uniform(0.3, 3.0, size=2)
            p_m, p_p = rng.uniform(0.3, 3.0, size=2)  # slopes of F
            coeffs = PiecewiseDiffusion((brk,), (a_m, a_p), (1.0, 1.0))
            sde = sde_from_divergence(coeffs)

            def F(x):
                x = np.asarray(x, dtype=float)
                return np.where(x >= brk, brk + (x - brk) * p_p, brk + (x - brk) * p_m)

            pr = lambda x: np.where(np.asarray(x) >= brk, p_p, p_m)
            pl = lambda x: np.where(np.asarray(x) > brk, p_p, p_m)
            y_locs, mu = pushforward_measure(F, pr, pl, sde.nu, np.array([brk]))

            # transformed medium: a_Y = (a p) o F^{-1}, rho_Y = (p rho) o F^{-1}
            coeffs_y = PiecewiseDiffusion((float(F(brk)),), (a_m * p_m, a_p * p_p),
                                          (p_m, p_p))
            expected = sde_from_divergence(coeffs_y).nu
            assert y_locs[0] == pytest.approx(brk, abs=1e-14)
            if expected.atoms:
                assert mu[0] == pytest.approx(expected.atoms[0][1], abs=1e-10)
            else:
                assert mu[0] == pytest.approx(0.0, abs=1e-10)
