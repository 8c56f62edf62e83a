import math

import numpy as np
import pytest

from app.core.errors import BoundaryInput, ConfigError
from app.services.spectral import truncation_measure
from app.services.weyl import (
    free_m_plus,
    herglotz_M,
    herglotz_sample,
    pk_epsilon_pipeline,
    psi,
    psi_grid,
    rotate,
    weyl_m_plus,
)

FREE_M_AT_2I = 1j * (math.sqrt(2) - 1)


class TestWeylFunction:
    def test_free_branch(self):
        assert free_m_plus(2j) == pytest.approx(FREE_M_AT_2I, abs=1e-15)

    def test_free_branch_is_herglotz(self):
        z = np.array([0.5 + 0.01j, -1.9 + 0.1j, 3.0 + 1e-3j])
        assert np.all(free_m_plus(z).imag > 0)

    def test_free_operator_recursion(self, free_operator):
        value = weyl_m_plus(free_operator, 2j)
        assert value.values[0] == pytest.approx(FREE_M_AT_2I, abs=1e-12)

    def test_almost_mathieu_maps_upper_half_plane(self, amo_operator):
        value = weyl_m_plus(amo_operator, [0.3 + 0.1j, -1.0 + 0.5j, 2.5 + 0.05j])
        assert np.all(value.values.imag > 0)
        assert value.depth >= 128

    def test_real_energy_is_rejected(self, amo_operator):
        with pytest.raises(BoundaryInput):
            weyl_m_plus(amo_operator, 0.5)


class TestHerglotz:
    def test_free_whole_line_diagonal(self, free_operator):
        measure = truncation_measure(free_operator, {0: 1.0}, 300)
        assert abs(herglotz_M(measure, 2j) - 1j / (2 * math.sqrt(2))) < 1e-8

    def test_real_point_is_rejected(self, free_operator):
        measure = truncation_measure(free_operator, {0: 1.0}, 20)
        with pytest.raises(BoundaryInput):
            herglotz_M(measure, 0.3)

    def test_sample_row(self, free_operator):
        measure = truncation_measure(free_operator, {0: 1.0}, 100)
        sample = herglotz_sample(measure, free_operator, 2j)
        assert sample.m_plus == pytest.approx(FREE_M_AT_2I, abs=1e-12)
        assert sample.psi == pytest.approx(1 + math.sqrt(2), rel=1e-10)
        assert sample.M.imag > 0


class TestPsi:
    def test_fixed_point(self):
        assert psi(1j) == pytest.approx(1.0)

    def test_imaginary_axis(self):
        assert psi(2j) == pytest.approx(2.0)
        assert psi(0.25j) == pytest.approx(4.0)

    def test_grid_agrees_with_closed_form(self):
        for z in (2j, 0.3 + 0.7j, -1.5 + 0.2j):
            assert psi_grid(z) == pytest.approx(psi(z), rel=1e-6)

    def test_rotation_by_zero(self):
        assert rotate(0.4 + 0.3j, 0.0) == pytest.approx(0.4 + 0.3j)

    def test_lower_half_plane(self):
        with pytest.raises(BoundaryInput):
            psi(1 - 0.5j)
        with pytest.raises(BoundaryInput):
            psi_grid(2.0)


class TestPkEpsilon:
    def test_free_operator_norm_scaling(self, free_operator):
        table = pk_epsilon_pipeline(free_operator, 0.0, 0.0, 30)
        assert len(table.rows) == 30
        for row in table.rows:
            assert row.scaled_norm == pytest.approx(1.0, rel=1e-9)
            assert row.psi >= 1
        assert table.epsilon_ratio_min < 1

    def test_k_max_must_be_positive(self, free_operator):
        with pytest.raises(ConfigError):
            pk_epsilon_pipeline(free_operator, 0.0, 0.0, 0)
