import math

import numpy as np
import pytest

from app.core.errors import ConfigError, TruncationTooSmall
from app.services.localization import _fit_region, localization_profile, resonance_regions


def test_regions_between_resonances():
    assert resonance_regions([0, 5, 40], 100) == [(1, 1), (16, 13), (121, 100)]


def test_fit_uses_sites_above_floor():
    fit = _fit_region((1, 4), np.array([1, 2, 3, 4]), np.array([1e-1, 1e-2, 1e-15, 1e-16]), 0.05)
    assert fit.fitted
    assert fit.sites == 4
    assert fit.fitted_sites == 2
    assert fit.decay_rate == pytest.approx(math.log(10))
    assert fit.violations == 0


def test_fit_below_floor_is_unfitted():
    fit = _fit_region((5, 7), np.array([5, 6, 7]), np.array([1e-14, 1e-15, 1e-20]), 0.05)
    assert not fit.fitted
    assert fit.decay_rate is None
    assert fit.fitted_sites == 0


def test_small_coupling_decays(amo_operator):
    cfg = amo_operator.with_coupling(0.1)
    report = localization_profile(cfg, 0.2345, 100, 5.0, 0.05)
    assert report.vectors
    assert math.isfinite(report.median_rate)
    assert report.median_rate > 0.5
    assert report.skipped_anchors > 0
    assert report.unfitted == sum(1 for row in report.vectors if not row.fitted)


def test_decay_grows_as_coupling_vanishes(amo_operator):
    weak = localization_profile(amo_operator.with_coupling(1e-3), 0.2345, 60, 5.0, 0.05)
    moderate = localization_profile(amo_operator.with_coupling(0.1), 0.2345, 60, 5.0, 0.05)
    assert math.isfinite(weak.median_rate)
    assert weak.median_rate > 3
    assert weak.median_rate > moderate.median_rate


def test_every_gap_is_fitted(amo_operator, mocker):
    mocker.patch("app.services.localization.scan_resonances", return_value=([0, 10], []))
    report = localization_profile(amo_operator.with_coupling(0.5), 0.2345, 60, 0.5, 0.05)
    assert all([fit.region for fit in row.regions] == [(1, 3), (31, 60 + abs(row.anchor))]
               for row in report.vectors)
    assert report.regions_fitted > len(report.vectors)
    for row in report.vectors:
        nearest = next(fit for fit in row.regions if fit.fitted)
        assert row.decay_rate == nearest.decay_rate


def test_nothing_above_floor_raises(amo_operator, mocker):
    mocker.patch("app.services.localization.scan_resonances", return_value=([0, 3], []))
    with pytest.raises(TruncationTooSmall):
        localization_profile(amo_operator.with_coupling(1e-3), 0.2345, 60, 0.5, 0.05)


def test_exact_resonance_flags_first_gap(amo_operator, golden):
    cfg = amo_operator.with_coupling(0.1)
    report = localization_profile(cfg, golden.alpha_float / 2, 60, 0.5, 0.05)
    assert any(row.first_gap_empty for row in report.vectors if row.anchor in (0, -1))


def test_rejects_tiny_window(amo_operator):
    with pytest.raises(ConfigError):
        localization_profile(amo_operator, 0.2, 1, 0.5, 0.05)
