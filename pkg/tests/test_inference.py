import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latescore import (
    DegenerateDataError,
    EmptySet,
    FiniteInterval,
    InvalidConfigError,
    LeftRay,
    Point,
    QuadCoefficients,
    RightRay,
    ScoreSample,
    TwoRays,
    WeakDenominatorError,
    WholeLine,
    dn_statistic,
    drml_estimate,
    instrument_is_weak,
    invert_score_test,
    normal_quantile,
    quad_coefficients,
    score_confidence_set,
    score_statistic,
)

Z975 = 1.959963984540054


def make_coeffs(a, b, c):
    return QuadCoefficients(
        a=a, b=b, c=c, delta=b * b - 4.0 * a * c, n=2, z_crit=Z975, a_scale=max(abs(a), 1.0)
    )


def random_scores(rng, n=50, strong=False):
    psi_a = rng.standard_normal(n) + (2.0 if strong else 0.0)
    psi_b = rng.standard_normal(n) + 0.5 * psi_a
    return ScoreSample(psi_a=psi_a, psi_b=psi_b)


class TestNormalQuantile:
    def test_median(self):
        assert normal_quantile(0.5) == 0.0

    def test_upper_975(self):
        assert abs(normal_quantile(0.975) - 1.959963984540054) < 1e-12

    def test_symmetry(self):
        for p in np.arange(0.01, 1.0, 0.01):
            assert abs(normal_quantile(p) + normal_quantile(1.0 - p)) < 1e-12

    def test_against_scipy_oracle(self):
        scipy_stats = pytest.importorskip("scipy.stats")
        grid = np.concatenate(
            [np.linspace(1e-9, 1 - 1e-9, 4001), [1e-300, 1e-15, 0.5, 1 - 1e-15]]
        )
        for p in grid:
            assert abs(normal_quantile(float(p)) - scipy_stats.norm.ppf(p)) < 1e-12

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.5, 1.5])
    def test_domain(self, p):
        with pytest.raises(InvalidConfigError):
            normal_quantile(p)


class TestScoreStatistic:
    def test_zero_mean_numerator(self):
        s = ScoreSample(psi_a=np.array([0.0, 0.0]), psi_b=np.array([1.0, -1.0]))
        assert score_statistic(s, 5.0) == 0.0

    def test_hand_value(self):
        s = ScoreSample(psi_a=np.array([0.0, 0.0]), psi_b=np.array([1.0, 1.0]))
        for theta in (-3.0, 0.0, 11.0):
            assert score_statistic(s, theta) == pytest.approx(math.sqrt(2.0), abs=1e-14)

    def test_matches_transcription(self):
        rng = np.random.Generator(np.random.PCG64(3))
        s = random_scores(rng)
        for theta in np.linspace(-4, 4, 17):
            d = s.psi_b - theta * s.psi_a
            oracle = math.sqrt(s.n) * d.mean() / math.sqrt((d**2).mean())
            assert abs(score_statistic(s, theta) - oracle) < 1e-12

    def test_degenerate(self):
        s = ScoreSample(psi_a=np.array([1.0, 1.0]), psi_b=np.array([2.0, 2.0]))
        with pytest.raises(DegenerateDataError):
            score_statistic(s, 2.0)


class TestQuadCoefficients:
    def test_hand_case(self):
        s = ScoreSample(psi_a=np.array([1.0, 1.0]), psi_b=np.array([0.0, 0.0]))
        co = quad_coefficients(s, 0.05)
        z2 = co.z_crit**2
        assert co.a == pytest.approx(2.0 - z2, abs=1e-12)
        assert co.b == 0.0
        assert co.c == 0.0
        assert not co.degenerate

    def test_all_zero_scores_flagged(self):
        s = ScoreSample(psi_a=np.zeros(4), psi_b=np.zeros(4))
        co = quad_coefficients(s, 0.05)
        assert (co.a, co.b, co.c) == (0.0, 0.0, 0.0)
        assert co.degenerate
        with pytest.raises(DegenerateDataError):
            score_confidence_set(s, 0.05)

    def test_grid_membership_agrees_with_statistic(self):
        rng = np.random.Generator(np.random.PCG64(8))
        s = random_scores(rng, n=100, strong=True)
        co = quad_coefficients(s, 0.05)
        cset = invert_score_test(co)
        for theta in np.linspace(-10, 10, 2001):
            quad = co.a * theta**2 + co.b * theta + co.c
            band = 1e-6 * (abs(co.a) * theta**2 + abs(co.b) * abs(theta) + abs(co.c) + 1.0)
            if abs(quad) <= band:
                continue
            by_stat = abs(score_statistic(s, theta)) <= co.z_crit
            assert cset.contains(theta) == by_stat

    def test_delta_consistency(self):
        rng = np.random.Generator(np.random.PCG64(9))
        for _ in range(50):
            s = random_scores(rng)
            co = quad_coefficients(s, 0.1)
            ref = max(abs(co.b * co.b), abs(4 * co.a * co.c), 1.0)
            assert abs(co.delta - (co.b * co.b - 4 * co.a * co.c)) <= 8 * np.finfo(float).eps * ref


class TestInvertScoreTest:
    def test_finite_interval(self):
        cset = invert_score_test(make_coeffs(1.0, 0.0, -1.0))
        assert cset == FiniteInterval(lo=-1.0, hi=1.0)

    def test_two_rays(self):
        cset = invert_score_test(make_coeffs(-1.0, 0.0, 1.0))
        assert cset == TwoRays(left_hi=-1.0, right_lo=1.0)
        assert cset.contains(-2.0) and cset.contains(2.0) and not cset.contains(0.0)

    def test_empty(self):
        assert invert_score_test(make_coeffs(1.0, 0.0, 1.0)) == EmptySet()

    def test_whole_line_negative_definite(self):
        assert invert_score_test(make_coeffs(-1.0, 0.0, -1.0)) == WholeLine()

    def test_left_ray(self):
        assert invert_score_test(make_coeffs(0.0, 2.0, -4.0)) == LeftRay(hi=2.0)

    def test_right_ray(self):
        assert invert_score_test(make_coeffs(0.0, -2.0, -4.0)) == RightRay(lo=-2.0)

    def test_point_requires_upward_parabola(self):
        assert invert_score_test(make_coeffs(1.0, -2.0, 1.0)) == Point(value=1.0)

    def test_tangent_downward_parabola_is_whole_line(self):
        # -(theta-1)^2 <= 0 holds everywhere, not only at the vertex
        cset = invert_score_test(make_coeffs(-1.0, 2.0, -1.0))
        assert cset == WholeLine()

    def test_degenerate_constant_cases(self):
        assert invert_score_test(make_coeffs(0.0, 0.0, -1.0)) == WholeLine()
        assert invert_score_test(make_coeffs(0.0, 0.0, 1.0)) == EmptySet()
        assert invert_score_test(make_coeffs(0.0, 0.0, 0.0)) == WholeLine()

    def test_root_ordering(self):
        rng = np.random.Generator(np.random.PCG64(10))
        for _ in range(500):
            a, b, c = rng.standard_normal(3) * 10.0
            cset = invert_score_test(make_coeffs(a, b, c))
            if isinstance(cset, FiniteInterval):
                assert cset.lo <= cset.hi
            elif isinstance(cset, TwoRays):
                assert cset.left_hi <= cset.right_lo

    @given(
        a=st.floats(allow_nan=False, allow_infinity=False, width=64),
        b=st.floats(allow_nan=False, allow_infinity=False, width=64),
        c=st.floats(allow_nan=False, allow_infinity=False, width=64),
        force_a_zero=st.booleans(),
        force_b_zero=st.booleans(),
    )
    @settings(max_examples=400, deadline=None)
    def test_total_on_arbitrary_floats(self, a, b, c, force_a_zero, force_b_zero):
        if force_a_zero:
            a = 0.0
        if force_b_zero:
            b = 0.0
        if max(abs(a), abs(b), abs(c)) > 1e150:
            return  # delta overflows double precision
        cset = invert_score_test(make_coeffs(a, b, c))
        assert cset.diameter() >= 0.0
        tag = cset.tag
        assert tag in {
            "finite_interval", "two_rays", "empty", "whole_line", "left_ray", "right_ray", "point",
        }

    def test_membership_matches_quadratic_sign(self):
        rng = np.random.Generator(np.random.PCG64(11))
        for _ in range(200):
            a, b, c = rng.standard_normal(3)
            co = make_coeffs(a, b, c)
            cset = invert_score_test(co)
            for theta in rng.standard_normal(20) * 5.0:
                quad = a * theta**2 + b * theta + c
                band = 1e-6 * (abs(a) * theta**2 + abs(b) * abs(theta) + abs(c) + 1.0)
                if abs(quad) <= band:
                    continue
                assert cset.contains(theta) == (quad < 0.0)


class TestDiameters:
    def test_forms(self):
        assert FiniteInterval(1.0, 3.5).diameter() == 2.5
        assert TwoRays(0.0, 1.0).diameter() == math.inf
        assert EmptySet().diameter() == 0.0
        assert WholeLine().diameter() == math.inf
        assert LeftRay(2.0).diameter() == math.inf
        assert RightRay(2.0).diameter() == math.inf
        assert Point(4.0).diameter() == 0.0


class TestDrmlEstimate:
    def test_exact_proportionality(self):
        s = ScoreSample(psi_a=np.array([1.0, 3.0]), psi_b=np.array([2.0, 6.0]))
        result = drml_estimate(s, 0.05)
        assert result.phi_hat == 2.0
        assert result.sigma2_hat == 0.0
        assert result.wald_lo == result.wald_hi == 2.0

    def test_hand_case(self):
        s = ScoreSample(psi_a=np.array([1.0, 1.0]), psi_b=np.array([3.0, 1.0]))
        result = drml_estimate(s, 0.05)
        assert result.phi_hat == 2.0
        assert result.sigma2_hat == pytest.approx(1.0, abs=1e-14)

    def test_weak_denominator(self):
        s = ScoreSample(psi_a=np.array([1.0, -1.0]), psi_b=np.array([1.0, 2.0]))
        with pytest.raises(WeakDenominatorError, match="score confidence set"):
            drml_estimate(s, 0.05)

    def test_wald_symmetric_with_exact_diameter(self):
        rng = np.random.Generator(np.random.PCG64(12))
        for _ in range(50):
            s = random_scores(rng, strong=True)
            r = drml_estimate(s, 0.05)
            z = normal_quantile(0.975)
            assert r.wald_hi - r.phi_hat == pytest.approx(r.phi_hat - r.wald_lo, rel=1e-12)
            assert r.diameter() == pytest.approx(
                2.0 * z * math.sqrt(r.sigma2_hat / s.n), rel=1e-12
            )


class TestDnStatistic:
    def test_zero_numerator(self):
        assert dn_statistic(np.array([1.0, 1.0, 1.0]), 1.0) == 0.0

    def test_hand_value(self):
        assert dn_statistic(np.array([2.0, 0.0]), 0.0) == pytest.approx(1.0, abs=1e-14)

    def test_constant_scores_at_theta_give_zero(self):
        # 0/0 corner: the zero numerator wins (and by Jensen a zero
        # denominator cannot occur with a nonzero numerator)
        assert dn_statistic(np.array([3.0, 3.0]), 3.0) == 0.0

    def test_constant_scores_away_from_theta(self):
        assert dn_statistic(np.array([3.0, 3.0, 3.0]), 0.0) == pytest.approx(3.0)

    def test_weak_flag_threshold(self):
        dn0, weak = instrument_is_weak(np.array([2.0, 0.0]), 0.05)
        assert dn0 == pytest.approx(1.0)
        assert weak  # 1.0 <= z^2


class TestEquivariance:
    def test_shift_moves_set_and_estimate(self):
        rng = np.random.Generator(np.random.PCG64(13))
        s = random_scores(rng, strong=True)
        kappa = 1.75
        shifted = ScoreSample(psi_a=s.psi_a, psi_b=s.psi_b + kappa * s.psi_a)
        c1 = score_confidence_set(s, 0.05)
        c2 = score_confidence_set(shifted, 0.05)
        assert type(c1) is type(c2)
        assert np.allclose(
            np.asarray(c2.endpoints()), np.asarray(c1.endpoints()) + kappa, rtol=1e-10, atol=1e-10
        )
        d1 = drml_estimate(s, 0.05)
        d2 = drml_estimate(shifted, 0.05)
        assert d2.phi_hat == pytest.approx(d1.phi_hat + kappa, rel=1e-10)
        assert d2.sigma2_hat == pytest.approx(d1.sigma2_hat, rel=1e-10, abs=1e-12)

    def test_scale_maps_set_and_estimate(self):
        rng = np.random.Generator(np.random.PCG64(14))
        s = random_scores(rng, strong=True)
        lam = 2.5
        scaled = ScoreSample(psi_a=s.psi_a, psi_b=lam * s.psi_b)
        c1 = score_confidence_set(s, 0.05)
        c2 = score_confidence_set(scaled, 0.05)
        assert type(c1) is type(c2)
        assert np.allclose(
            np.asarray(c2.endpoints()), lam * np.asarray(c1.endpoints()), rtol=1e-10, atol=1e-10
        )
        d1 = drml_estimate(s, 0.05)
        d2 = drml_estimate(scaled, 0.05)
        assert d2.phi_hat == pytest.approx(lam * d1.phi_hat, rel=1e-10)
        assert d2.sigma2_hat == pytest.approx(lam * lam * d1.sigma2_hat, rel=1e-10)


class TestStrongSampleSizeAgreement:
    def test_wald_and_score_set_nearly_identical(self):
        from latescore import DgpParams, StudySpec, run_replication

        spec = StudySpec(setting="strong", n_grid=(10500,), reps=1, seed=5)
        params = DgpParams(pi=5.0, n=10500)
        r = run_replication(params, spec, rep_id=0)
        assert r.set_tag == "finite_interval"
        assert abs(r.diam_score / r.diam_wald - 1.0) < 0.05
