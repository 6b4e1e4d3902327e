"""PWM, (trimmed) L-moment and parameter-recovery tests."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate
from scipy.special import gamma as gamma_fn

from regflood.errors import DataError, ParameterError
from regflood.gev import GevParams, gev_quantile
from regflood.moments import (
    PwmVector,
    gev_from_lmoments,
    gev_from_tlmoments,
    gev_fit_gradient,
    lmoments_from_pwm,
    pwm_of_gev,
    sample_pwm,
    shape_gradient_lmoments,
    shape_gradient_tlmoments,
    tlmoments_from_pwm,
)


def closed_form_pwm(params: GevParams, k: int) -> float:
    """Independent oracle: the textbook GEV PWM formula."""
    if abs(params.xi) < 1e-9:
        return (params.mu + params.sigma * (np.euler_gamma + math.log(k + 1))) / (k + 1)
    return (
        params.mu
        + params.sigma * ((k + 1) ** params.xi * gamma_fn(1 - params.xi) - 1) / params.xi
    ) / (k + 1)


def exact_pwms(params: GevParams, order: int = 4) -> PwmVector:
    return PwmVector([closed_form_pwm(params, k) for k in range(order)])


class TestPwmOfGev:
    def test_gumbel_mean_is_euler_gamma(self):
        assert pwm_of_gev(GevParams(0, 1, 0.0), 0) == pytest.approx(
            np.euler_gamma, abs=1e-10
        )

    def test_beta0_is_mean(self):
        params = GevParams(3, 2, 0.3)
        mean, _ = integrate.quad(
            lambda u: gev_quantile(params, u), 0, 1, epsabs=1e-12, limit=300
        )
        assert pwm_of_gev(params, 0) == pytest.approx(mean, abs=1e-9)

    def test_two_quadratures_agree(self):
        # tanh-sinh quadrature from a different library as the second,
        # independent rule (it handles the u -> 1 endpoint singularity)
        import mpmath

        params = GevParams(0, 1, 0.2)
        mpmath.mp.dps = 25

        def integrand(u):
            y = -mpmath.log(u)
            return (mpmath.power(y, -0.2) - 1) / 0.2 * u

        val = float(mpmath.quad(integrand, [0, 1]))
        assert pwm_of_gev(params, 1) == pytest.approx(val, abs=1e-8)

    @pytest.mark.parametrize("xi", [-0.4, -0.1, 0.1, 0.3, 0.6])
    def test_matches_closed_form(self, xi):
        params = GevParams(1.5, 0.7, xi)
        for k in range(4):
            assert pwm_of_gev(params, k) == pytest.approx(
                closed_form_pwm(params, k), abs=1e-9
            )

    def test_divergent_shape_rejected(self):
        with pytest.raises(ParameterError):
            pwm_of_gev(GevParams(0, 1, 1.0), 0)


class TestSamplePwm:
    def test_beta0_is_sample_mean(self):
        data = np.array([3.0, 1.0, 4.0, 1.5, 9.0])
        assert sample_pwm(data, 0)[0] == pytest.approx(data.mean())

    def test_hand_case(self):
        # (1/3)(1*(1/3) + 2*(2/3) + 3*1) = 14/9
        assert sample_pwm([1.0, 2.0, 3.0], 1)[1] == pytest.approx(14.0 / 9.0)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(1)
        data = rng.gamma(2, size=40)
        a = sample_pwm(data, 3).values
        b = sample_pwm(rng.permutation(data), 3).values
        np.testing.assert_allclose(a, b, rtol=1e-13)

    def test_consistency_on_large_sample(self):
        rng = np.random.default_rng(7)
        params = GevParams(2, 1, 0.2)
        data = gev_quantile(params, rng.uniform(size=200_000))
        betas = sample_pwm(data, 2)
        for k in range(3):
            assert betas[k] == pytest.approx(pwm_of_gev(params, k), rel=5e-3)

    def test_short_sample_rejected(self):
        with pytest.raises(DataError):
            sample_pwm([1.0], 2)


class TestMomentMaps:
    def test_uniform_pwms(self):
        # beta_k of U(0,1) is 1/((k+1)(k+2)) * (k+1) = 1/(k+2)
        pwm = PwmVector([0.5, 1 / 3, 0.25])
        l1, l2, l3 = lmoments_from_pwm(pwm)
        assert l1 == pytest.approx(0.5)
        assert l2 == pytest.approx(1 / 6)
        assert l3 == pytest.approx(0.0, abs=1e-15)

    def test_linearity_and_shift(self):
        # shifting a distribution by c moves its PWMs by c/(k+1); the
        # moment maps must then move lambda_1 only
        base_pwm = exact_pwms(GevParams(2, 1, 0.2))
        c = 5.0
        shifted_pwm = PwmVector(base_pwm.values + c / np.arange(1, 5))
        base = np.array(lmoments_from_pwm(base_pwm))
        shifted = np.array(lmoments_from_pwm(shifted_pwm))
        assert shifted[0] == pytest.approx(base[0] + c)
        assert shifted[1] == pytest.approx(base[1])
        assert shifted[2] == pytest.approx(base[2])
        base_t = np.array(tlmoments_from_pwm(base_pwm))
        shifted_t = np.array(tlmoments_from_pwm(shifted_pwm))
        assert shifted_t[0] == pytest.approx(base_t[0] + c)
        np.testing.assert_allclose(shifted_t[1:], base_t[1:], rtol=1e-9)
        # positive scaling is exact even for plug-in sample PWMs
        rng = np.random.default_rng(3)
        data = rng.gamma(3, size=60)
        scaled_t = np.array(tlmoments_from_pwm(sample_pwm(3.0 * data, 3)))
        samp_t = np.array(tlmoments_from_pwm(sample_pwm(data, 3)))
        np.testing.assert_allclose(scaled_t, 3.0 * samp_t, rtol=1e-10)

    def test_point_mass_trimmed_scale_vanishes(self):
        # all plug-in PWMs of a constant sample equal the constant
        pwm = sample_pwm(np.full(6, 4.2), 3)
        np.testing.assert_allclose(pwm.values, 4.2, rtol=1e-14)
        _, t2, _ = tlmoments_from_pwm(pwm)
        assert t2 == pytest.approx(0.0, abs=1e-12)

    def test_trimmed_matches_integral_definition(self):
        # independent oracle: order-statistic expectations by quadrature.
        # With the largest of the involved order statistics trimmed,
        # lambda_1 = E[X_{1:2}] and lambda_2 = (E[X_{2:3}] - E[X_{1:3}])/2,
        # i.e. quantile integrals against 2(1-u) resp. 1.5(1-u)(3u-1).
        params = GevParams(1, 2, 0.2)

        def quantile_moment(weight_fn):
            val, _ = integrate.quad(
                lambda u: gev_quantile(params, u) * weight_fn(u),
                0,
                1,
                epsabs=1e-12,
                limit=300,
            )
            return val

        t1_int = quantile_moment(lambda u: 2 * (1 - u))
        t2_int = quantile_moment(lambda u: 1.5 * (1 - u) * (3 * u - 1))
        pwm = exact_pwms(params)
        t1, t2, _ = tlmoments_from_pwm(pwm)
        assert t1 == pytest.approx(t1_int, abs=1e-8)
        assert t2 == pytest.approx(t2_int, abs=1e-8)

    def test_insufficient_order(self):
        with pytest.raises(ParameterError):
            lmoments_from_pwm(PwmVector([1.0, 0.5]))
        with pytest.raises(ParameterError):
            tlmoments_from_pwm(PwmVector([1.0, 0.5, 0.4]))


class TestGevFromLmoments:
    def test_gumbel_shape_recovered_exactly(self):
        # exact Gumbel PWMs give 2b1-b0 = sigma*log2 and 3b2-b0 =
        # sigma*log3, so the ratio offset vanishes identically
        pwm = exact_pwms(GevParams(0, 1, 0.0), order=3)
        fit = gev_from_lmoments(pwm)
        assert fit.xi == pytest.approx(0.0, abs=1e-12)
        assert fit.sigma == pytest.approx(1.0, abs=1e-9)
        assert fit.mu == pytest.approx(0.0, abs=1e-9)
        # and the quadrature oracle reproduces the same conclusion
        pwm_q = PwmVector([pwm_of_gev(GevParams(0, 1, 1e-12), k) for k in range(3)])
        assert gev_from_lmoments(pwm_q).xi == pytest.approx(0.0, abs=1e-7)

    @pytest.mark.parametrize("xi", [-0.4, -0.2, 0.0, 0.1, 0.2, 0.3, 0.4])
    def test_shape_error_bound(self, xi):
        pwm = exact_pwms(GevParams(0, 1, xi if xi else 1e-13), order=3)
        fit = gev_from_lmoments(pwm)
        assert abs(fit.xi - xi) <= 0.0009

    def test_exact_inversion_recovers(self):
        pwm = exact_pwms(GevParams(2, 1, 0.3), order=3)
        fit = gev_from_lmoments(pwm, exact_shape=True)
        assert fit.xi == pytest.approx(0.3, abs=1e-10)
        assert fit.sigma == pytest.approx(1.0, abs=1e-9)
        assert fit.mu == pytest.approx(2.0, abs=1e-9)

    def test_scale_equivariance_on_samples(self):
        # positive scaling leaves the empirical cdf untouched, so the
        # plug-in PWMs scale exactly
        rng = np.random.default_rng(11)
        data = gev_quantile(GevParams(2, 1, 0.2), rng.uniform(size=300))
        base = gev_from_lmoments(sample_pwm(data, 2))
        moved = gev_from_lmoments(sample_pwm(3.0 * data, 2))
        assert moved.xi == pytest.approx(base.xi, abs=1e-10)
        assert moved.sigma == pytest.approx(3.0 * base.sigma, rel=1e-10)
        assert moved.mu == pytest.approx(3.0 * base.mu, rel=1e-10)

    def test_affine_equivariance_of_map(self):
        # beta_k -> a*beta_k + b/(k+1) is the affine action on PWMs
        a, b = 3.0, 7.0
        pwm = exact_pwms(GevParams(2, 1, 0.2), order=3)
        moved = PwmVector(a * pwm.values + b / np.arange(1, 4))
        base_fit = gev_from_lmoments(pwm)
        moved_fit = gev_from_lmoments(moved)
        assert moved_fit.xi == pytest.approx(base_fit.xi, abs=1e-12)
        assert moved_fit.sigma == pytest.approx(a * base_fit.sigma, rel=1e-12)
        assert moved_fit.mu == pytest.approx(a * base_fit.mu + b, rel=1e-12)

    def test_shift_equivariance_is_first_order_in_samples(self):
        # the plug-in empirical cdf breaks exact shift equivariance by
        # O(1/n); verify the deviation shrinks at that rate
        shift = 50.0
        devs = []
        for n in (200, 800):
            rng = np.random.default_rng(17)
            data = gev_quantile(GevParams(2, 1, 0.2), rng.uniform(size=n))
            base = gev_from_lmoments(sample_pwm(data, 2))
            moved = gev_from_lmoments(sample_pwm(data + shift, 2))
            devs.append(abs(moved.xi - base.xi))
        assert devs[1] < devs[0]
        assert devs[0] < 0.5 * shift / 200

    def test_degenerate_sample(self):
        # lambda_2 = 0: the spacing information has collapsed
        with pytest.raises(DataError):
            gev_from_lmoments(PwmVector([1.0, 0.5, 1.0 / 3.0]))
        with pytest.raises(DataError):
            gev_from_lmoments(sample_pwm(np.zeros(5), 2))

    def test_shape_pole_rejected(self):
        # a moment ratio implying a shape at or beyond the Gamma pole
        from regflood.errors import NumericError

        assert gev_from_lmoments(PwmVector([1.0, 0.75, 2.0 / 3.0 + 1e-4])).xi < 1
        with pytest.raises(NumericError, match="infinite"):
            gev_from_lmoments(PwmVector([1.0, 0.76, 0.69]))


class TestGevFromTlmoments:
    def test_round_trip_tolerance(self):
        pwm = exact_pwms(GevParams(2, 1, 0.2))
        fit = gev_from_tlmoments(pwm)
        assert abs(fit.xi - 0.2) <= 0.005
        assert fit.sigma == pytest.approx(1.0, abs=0.01)
        assert fit.mu == pytest.approx(2.0, abs=0.01)

    def test_exact_inversion_recovers(self):
        for theta in [GevParams(2, 1, 0.2), GevParams(1.5, 1, 0.4), GevParams(0, 1, -0.2)]:
            fit = gev_from_tlmoments(exact_pwms(theta), exact_shape=True)
            assert fit.xi == pytest.approx(theta.xi, abs=1e-9)
            assert fit.sigma == pytest.approx(theta.sigma, abs=1e-8)
            assert fit.mu == pytest.approx(theta.mu, abs=1e-8)

    @pytest.mark.parametrize("xi", [-0.4, -0.2, -0.05, 0.1, 0.3, 0.5])
    def test_polynomial_close_to_exact_inversion(self, xi):
        pwm = exact_pwms(GevParams(0, 1, xi))
        approx = gev_from_tlmoments(pwm).xi
        exact = gev_from_tlmoments(pwm, exact_shape=True).xi
        assert abs(approx - exact) <= 0.01

    def test_gumbel_limit_branch(self):
        # near-zero shapes go through the analytic limit of the equations;
        # cross-check continuity against +-1e-4 evaluations
        pwm0 = exact_pwms(GevParams(1, 2, 1e-12))
        fit0 = gev_from_tlmoments(pwm0)
        for xi in (1e-4, -1e-4):
            fit = gev_from_tlmoments(exact_pwms(GevParams(1, 2, xi)))
            assert fit.sigma == pytest.approx(fit0.sigma, abs=2e-3)
            assert fit.mu == pytest.approx(fit0.mu, abs=2e-3)

    def test_affine_equivariance_of_map(self):
        a, b = 2.0, -1.0
        pwm = exact_pwms(GevParams(2, 1, 0.3))
        moved = PwmVector(a * pwm.values + b / np.arange(1, 5))
        base_fit = gev_from_tlmoments(pwm)
        moved_fit = gev_from_tlmoments(moved)
        assert moved_fit.xi == pytest.approx(base_fit.xi, abs=1e-12)
        assert moved_fit.sigma == pytest.approx(a * base_fit.sigma, rel=1e-12)
        assert moved_fit.mu == pytest.approx(a * base_fit.mu + b, rel=1e-9)

    def test_scale_equivariance_on_samples(self):
        rng = np.random.default_rng(13)
        data = gev_quantile(GevParams(2, 1, 0.3), rng.uniform(size=300))
        base = gev_from_tlmoments(sample_pwm(data, 3))
        moved = gev_from_tlmoments(sample_pwm(2.0 * data, 3))
        assert moved.xi == pytest.approx(base.xi, abs=1e-10)
        assert moved.sigma == pytest.approx(2.0 * base.sigma, rel=1e-10)
        assert moved.mu == pytest.approx(2.0 * base.mu, rel=1e-9)


class TestGradients:
    @pytest.mark.parametrize("method", ["L", "TL"])
    def test_shape_gradient_matches_fd(self, method):
        pwm = exact_pwms(GevParams(2, 1, 0.25))
        k = 3 if method == "L" else 4
        grad_fn = shape_gradient_lmoments if method == "L" else shape_gradient_tlmoments
        fit_fn = gev_from_lmoments if method == "L" else gev_from_tlmoments
        grad = grad_fn(pwm)
        for i in range(k):
            h = 1e-7 * max(1.0, abs(pwm[i]))
            up = pwm.values[:k].copy()
            dn = pwm.values[:k].copy()
            up[i] += h
            dn[i] -= h
            fd = (fit_fn(PwmVector(up)).xi - fit_fn(PwmVector(dn)).xi) / (2 * h)
            assert grad[i] == pytest.approx(fd, rel=1e-5)

    @pytest.mark.parametrize("method", ["L", "TL"])
    def test_full_map_gradient_matches_fd(self, method):
        pwm = exact_pwms(GevParams(1.5, 1, 0.4))
        k = 3 if method == "L" else 4
        fit_fn = gev_from_lmoments if method == "L" else gev_from_tlmoments
        grad = gev_fit_gradient(pwm, method)
        assert grad.shape == (3, k)
        for i in range(k):
            h = 1e-6 * max(1.0, abs(pwm[i]))
            up = pwm.values[:k].copy()
            dn = pwm.values[:k].copy()
            up[i] += h
            dn[i] -= h
            tu = fit_fn(PwmVector(up)).as_array()
            td = fit_fn(PwmVector(dn)).as_array()
            fd = (tu - td) / (2 * h)
            np.testing.assert_allclose(grad[:, i], fd, rtol=1e-4, atol=1e-8)


@given(
    xi=st.floats(-0.4, 0.55),
    mu=st.floats(-10, 10),
    sigma=st.floats(0.1, 10),
)
@settings(max_examples=100, deadline=None)
def test_round_trip_property(xi, mu, sigma):
    theta = GevParams(mu, sigma, xi if abs(xi) > 1e-9 else 1e-9)
    pwm = exact_pwms(theta)
    fit_l = gev_from_lmoments(pwm)
    assert abs(fit_l.xi - theta.xi) < 0.002
    fit_tl = gev_from_tlmoments(pwm)
    assert abs(fit_tl.xi - theta.xi) < 0.006
