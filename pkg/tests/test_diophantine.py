import math

import numpy as np
import pytest

from app.core.constants import MIN_DEPTH
from app.core.errors import ConfigError, DepthInsufficient, PrecisionExhausted, RationalInput
from app.schemas.frequency import FrequencySpec
from app.services import diophantine
from app.services.diophantine import (
    beta_estimate,
    cf_expand,
    dc_check,
    norm_dist,
    norm_dist_direct,
    norm_dist_grid,
    resonance_gap_profile,
    resonances,
    scan_resonances,
    select_scale,
    small_divisor_profile,
    strong_dc_check,
)

GOLDEN_GAP = (3 - math.sqrt(5)) / 2


class TestContinuedFractions:
    def test_golden_convergents_are_fibonacci(self):
        cf = cf_expand(FrequencySpec.golden(), 6)
        assert cf.partial_quotients == (1, 1, 1, 1, 1, 1)
        assert cf.q[:6] == (1, 1, 2, 3, 5, 8)

    def test_silver_ratio(self):
        cf = cf_expand(FrequencySpec.silver(), 4)
        assert cf.partial_quotients == (2, 2, 2, 2)
        assert cf.q[:4] == (1, 2, 5, 12)

    def test_finite_stream(self):
        cf = cf_expand(FrequencySpec.from_stream([1, 2, 3]), 3)
        assert cf.q == (1, 1, 3, 10)
        assert cf.p == (0, 1, 2, 7)

    def test_periodic_stream_matches_quadratic(self, silver):
        cf = cf_expand(FrequencySpec.from_stream([2], periodic=True), 20)
        assert abs(cf.alpha_float - silver.alpha_float) < 1e-15
        assert cf.q == silver.q[:21]

    def test_convergent_determinant(self, golden):
        for k in range(1, golden.depth + 1):
            assert abs(golden.p[k] * golden.q[k - 1] - golden.p[k - 1] * golden.q[k]) == 1

    def test_gap_bracket(self, silver):
        for k in range(1, silver.depth - 1):
            gap = float(silver.gaps[k])
            assert 1 / (2 * silver.q[k + 1]) < gap <= 1 / silver.q[k + 1]

    def test_gaps_match_direct_distance(self, golden):
        for k in range(1, 20):
            assert abs(float(golden.gaps[k]) - float(norm_dist_direct(golden.q[k], golden))) < 1e-30

    def test_rational_decimal_is_rejected(self):
        with pytest.raises(RationalInput) as exc:
            cf_expand(FrequencySpec.from_decimal("0.428571428571428571"), 10)
        assert exc.value.partial_quotients == (2, 3)

    def test_short_decimal_exhausts_precision(self):
        with pytest.raises((PrecisionExhausted, RationalInput)) as exc:
            cf_expand(FrequencySpec.from_decimal("0.6180339887"), 40)
        if isinstance(exc.value, PrecisionExhausted):
            assert 0 < exc.value.deepest_safe_depth < 40

    def test_perfect_square_radicand(self):
        with pytest.raises(RationalInput):
            cf_expand(FrequencySpec.from_quadratic(9), 5)

    def test_terminating_stream(self):
        with pytest.raises(RationalInput) as exc:
            cf_expand(FrequencySpec.from_stream([1, 2]), 5)
        assert exc.value.partial_quotients == (1, 2)

    def test_depth_must_be_positive(self):
        with pytest.raises(ConfigError) as exc:
            cf_expand(FrequencySpec.golden(), MIN_DEPTH - 1)
        assert exc.value.key == "depth"
        assert cf_expand(FrequencySpec.golden(), MIN_DEPTH).depth == MIN_DEPTH

    def test_from_text_forms(self):
        assert FrequencySpec.from_text("golden").quadratic.d == 5
        assert FrequencySpec.from_text("periodic:1,2").periodic
        assert FrequencySpec.from_text("decimal:0.1234").decimal == "0.1234"
        with pytest.raises(ValueError):
            FrequencySpec.from_text("unknown:1")

    def test_report_keeps_big_integers_exact(self, golden):
        report = golden.to_report()
        assert report["q"][-1] == str(golden.q[-1])


class TestDistances:
    def test_golden_norm_dist(self, golden):
        assert abs(float(norm_dist(1, golden)) - GOLDEN_GAP) < 1e-15

    def test_norm_dist_is_even(self, golden):
        assert norm_dist(7, golden) == norm_dist(-7, golden)

    def test_grid_agrees_with_exact(self, golden):
        ks = np.arange(1, 200)
        exact = np.array([float(norm_dist(int(k), golden)) for k in ks])
        assert np.allclose(norm_dist_grid(ks, golden), exact, rtol=0, atol=1e-13)

    def test_resolution_guard(self, golden):
        with pytest.raises(DepthInsufficient):
            norm_dist(golden.q_depth, golden)

    def test_zero_is_rejected(self, golden):
        with pytest.raises(ConfigError):
            norm_dist(0, golden)


class TestDiophantineClasses:
    def test_golden_satisfies_power_condition(self, golden):
        check = dc_check(golden, 0.2, 1.0, 1000)
        assert check.holds
        assert check.first_failure is None
        assert check.witness in golden.q

    def test_large_kappa_fails(self, golden):
        check = dc_check(golden, 0.5, 1.0, 100)
        assert not check.holds
        assert check.first_failure == 1

    def test_strong_condition(self, golden):
        assert strong_dc_check(golden, 0.1, 1.0, 1000).holds

    def test_scan_limit(self, golden, mocker):
        mocker.patch.object(diophantine, "MAX_SCAN", 10)
        with pytest.raises(ConfigError):
            dc_check(golden, 0.1, 1.0, 11)

    def test_golden_beta_is_largest_ratio(self, golden):
        profile = beta_estimate(golden)
        # ln(q_2)/q_1 = ln 2 dominates every later ratio
        assert profile.beta_hat == pytest.approx(math.log(2))
        assert profile.beta_hat == max(profile.ratios)
        assert 0 <= profile.tail_estimate < 1e-2
        assert profile.tail_estimate == profile.tail_sup[golden.depth // 2]
        assert profile.depth_used == golden.depth

    def test_large_partial_quotient_raises_beta(self):
        cf = cf_expand(FrequencySpec.from_stream([1, 1, 1, 1, 10 ** 9, 1, 1, 1]), 8)
        profile = beta_estimate(cf)
        assert profile.beta_hat > 4
        # the spike at n = 4 sits in the second half of the profile
        assert profile.tail_estimate == profile.beta_hat


class TestResonances:
    def test_half_alpha_resonates_at_one(self, golden):
        sequence = resonances(golden.alpha / 2, golden, 0.1, 50)
        assert sequence.resonances == (0, 1)
        assert sequence.gaps[1] == 0

    def test_large_epsilon_leaves_only_zero(self, golden):
        assert resonances(0.1234, golden, 10.0, 20).resonances == (0,)

    def test_gaps_decrease_along_sequence(self, golden):
        sequence = resonances("0.3", golden, 0.05, 200)
        sizes = [abs(k) for k in sequence.resonances]
        assert sizes == sorted(sizes)
        gaps = [float(g) for g in sequence.gaps]
        assert all(b <= a for a, b in zip(gaps, gaps[1:]))

    def test_fast_scan_agrees(self, golden):
        exact = resonances("0.3", golden, 0.05, 200)
        found, gaps = scan_resonances("0.3", golden, 0.05, 200)
        assert tuple(found) == exact.resonances
        assert np.allclose(gaps, [float(g) for g in exact.gaps], atol=1e-14)

    def test_epsilon_must_be_positive(self, golden):
        with pytest.raises(ConfigError):
            resonances(0.1, golden, 0.0, 10)

    def test_gap_profile_rows(self, golden):
        sequence = resonances("0.3", golden, 0.05, 200)
        profile = resonance_gap_profile(sequence, 0.01)
        assert len(profile.rows) == len(sequence.resonances) - 1
        assert profile.fitted_rate >= 0


class TestSmallDivisors:
    def test_zero_phase_columns_coincide(self, golden):
        profile = small_divisor_profile(golden, 0, 100, beta_hat=0.0)
        assert np.array_equal(profile.norm_k, profile.norm_shift)
        assert len(profile.ks) == 200
        assert 0 not in profile.ks

    def test_fitted_constant_is_minimum(self, golden):
        profile = small_divisor_profile(golden, 0.2, 50, beta_hat=0.0)
        assert profile.c_fitted == pytest.approx(float(np.min(profile.norm_k)))


class TestScaleSelection:
    def test_selects_fibonacci_scale(self, golden):
        assert select_scale(100, golden) == (5, 8, 1)

    def test_small_k(self, golden):
        with pytest.raises(ConfigError):
            select_scale(5, golden)
