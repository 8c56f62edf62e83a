import math

import numpy as np
import pytest

from app.core.errors import ConfigError
from app.services.holder import holder_scan, spectral_energies


def test_free_edge_single_vector(free_operator):
    report = holder_scan(free_operator, [2.0], [0.05], 1000, f={0: 1.0})
    assert report.rows[0].ratio == pytest.approx(1 / math.pi, rel=3e-2)


def test_free_edge_phase_measure(free_operator):
    report = holder_scan(free_operator, [2.0], [0.05], 1000)
    assert report.rows[0].ratio == pytest.approx(2 / math.pi, rel=3e-2)
    assert report.global_sup == report.rows[0].ratio


def test_square_root_exponent_at_edge(free_operator):
    report = holder_scan(free_operator, [2.0], [0.05, 0.1, 0.2], 1000, f={0: 1.0})
    exponent = report.exponents[0]
    assert exponent.points == 3
    assert exponent.exponent == pytest.approx(0.5, abs=0.05)


def test_eps_below_floor_is_filtered(amo_operator):
    report = holder_scan(amo_operator, [0.0, 0.5], [1e-3, 0.05], 1000)
    assert report.floor == pytest.approx(4 * math.pi / 1000)
    assert report.filtered == 2
    assert len(report.rows) == 4
    assert all(row.below_resolution == (row.epsilon < report.floor) for row in report.rows)
    assert set(report.decade_sups) == {-2}


def test_resolution_warning_is_logged(amo_operator, mocker):
    warning = mocker.patch("app.services.holder.experiment_logger.resolution_warning")
    holder_scan(amo_operator, [0.0], [1e-4, 0.1], 200)
    warning.assert_called_once()


def test_grids_are_validated(amo_operator):
    with pytest.raises(ConfigError):
        holder_scan(amo_operator, [], [0.1], 50)
    with pytest.raises(ConfigError):
        holder_scan(amo_operator, [0.0], [0.0, 0.1], 50)


def test_spectral_energies_spread(amo_operator):
    energies = spectral_energies(amo_operator, 100, 5)
    assert len(energies) == 5
    assert np.all(np.diff(energies) > 0)
    assert np.all(np.abs(energies) < 3)


def test_spectral_energies_count(amo_operator):
    with pytest.raises(ConfigError):
        spectral_energies(amo_operator, 100, 0)
