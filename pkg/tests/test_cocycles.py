import math

import numpy as np
import pytest

from app.core.errors import ConfigError, SingularConjugacy, StripExceeded
from app.schemas.cocycles import Cocycle, FourierGenerator, FourierMatrix
from app.services.cocycles import (
    conjugate,
    generator_values,
    lyapunov_finite,
    lyapunov_orbit,
    schrodinger_cocycle,
    strip_growth_scan,
    transfer,
)

HYPERBOLIC_RATE = math.log((3 + math.sqrt(5)) / 2)


@pytest.fixture
def rotation(golden, amo):
    return schrodinger_cocycle(golden, 0.0, 0.0, amo)


@pytest.fixture
def amo_cocycle(golden, amo):
    return schrodinger_cocycle(golden, 0.5, 0.3, amo)


class TestTransfer:
    def test_quarter_rotation_has_period_four(self, rotation):
        product = transfer(rotation, 0.2, 4)
        assert np.allclose(product.result.matrix(), np.eye(2), atol=1e-15)

    def test_empty_product(self, amo_cocycle):
        product = transfer(amo_cocycle, 0.3, 0)
        assert np.array_equal(product.result.entries, np.eye(2))
        assert product.result.log_scale == 0

    def test_cocycle_identity(self, amo_cocycle, golden):
        x, n, m = 0.17, 7, 5
        whole = transfer(amo_cocycle, x, n + m).result.matrix()
        head = transfer(amo_cocycle, x + m * golden.alpha_float, n).result.matrix()
        tail = transfer(amo_cocycle, x, m).result.matrix()
        assert np.allclose(whole, head @ tail, rtol=1e-8, atol=1e-8 * np.abs(whole).max())

    def test_determinant_track(self, golden, amo):
        cocycle = schrodinger_cocycle(golden, 0.0, 0.5, amo)
        result = transfer(cocycle, 0.1, 10_000).result
        assert result.det_defect < 1e-10
        assert abs(result.log_det) < 1e-12

    def test_log_scale_survives_large_n(self, golden, amo):
        cocycle = schrodinger_cocycle(golden, 0.0, 5.0, amo)
        result = transfer(cocycle, 0.0, 5000).result
        assert math.isfinite(result.log_norm)
        assert result.log_norm / 5000 == pytest.approx(math.log((5 + math.sqrt(21)) / 2), rel=1e-3)

    def test_strip_is_enforced(self, amo_cocycle):
        with pytest.raises(StripExceeded):
            transfer(amo_cocycle, 0.1 + 2j, 3)

    def test_negative_length(self, amo_cocycle):
        with pytest.raises(ConfigError):
            transfer(amo_cocycle, 0.1, -1)


class TestLyapunov:
    def test_rotation_has_zero_exponent(self, rotation):
        estimate = lyapunov_finite(rotation, 100, 8)
        assert abs(estimate.value) < 1e-12

    def test_constant_hyperbolic_matrix(self, golden, amo):
        cocycle = schrodinger_cocycle(golden, 0.0, 3.0, amo)
        estimate = lyapunov_finite(cocycle, 1000, 4)
        assert estimate.value == pytest.approx(HYPERBOLIC_RATE, abs=1e-2)
        assert estimate.subadditive

    def test_subadditivity_in_spectrum(self, amo_cocycle):
        assert lyapunov_finite(amo_cocycle, 200, 16).subadditive

    def test_threads_do_not_change_result(self, amo_cocycle):
        single = lyapunov_finite(amo_cocycle, 100, 16, threads=1)
        several = lyapunov_finite(amo_cocycle, 100, 16, threads=4)
        assert single.value == pytest.approx(several.value, abs=1e-14)

    def test_orbit_mode(self, golden, amo):
        cocycle = schrodinger_cocycle(golden, 0.0, 3.0, amo)
        assert lyapunov_orbit(cocycle, 0.0, 1000) == pytest.approx(HYPERBOLIC_RATE, abs=1e-2)

    def test_grid_must_be_positive(self, amo_cocycle):
        with pytest.raises(ConfigError):
            lyapunov_finite(amo_cocycle, 10, 0)


class TestStripGrowth:
    def test_rotation_does_not_grow(self, rotation):
        report = strip_growth_scan(rotation, 0.05, [10, 100], grid=16, strips=3)
        assert abs(report.final_rate) < 1e-12
        assert len(report.rows) == 6

    def test_energy_outside_spectrum_grows(self, golden, amo):
        cocycle = schrodinger_cocycle(golden, 0.0, 10.0, amo)
        report = strip_growth_scan(cocycle, 0.05, [50, 100], grid=8, strips=2)
        assert report.final_rate > 2

    def test_small_coupling_rate_is_small(self, golden, amo):
        cocycle = schrodinger_cocycle(golden, 0.3, 0.0, amo)
        report = strip_growth_scan(cocycle, 0.05, [100, 1000], grid=32, strips=3)
        assert report.final_rate < 0.2

    def test_eta_inside_strip(self, amo_cocycle):
        with pytest.raises(StripExceeded):
            strip_growth_scan(amo_cocycle, 1.5, [10])

    def test_n_list_positive(self, amo_cocycle):
        with pytest.raises(ConfigError):
            strip_growth_scan(amo_cocycle, 0.05, [0, 10])


class TestConjugation:
    def test_identity_conjugacy(self, amo_cocycle):
        conjugated = conjugate(amo_cocycle, FourierMatrix.constant(np.eye(2)))
        xs = np.linspace(0, 1, 9)
        alpha = amo_cocycle.frequency.alpha_float
        assert np.allclose(
            generator_values(conjugated.generator, xs, alpha),
            generator_values(amo_cocycle.generator, xs, alpha),
        )

    def test_rotations_commute(self, golden):
        angle = 0.3
        rotation = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
        cocycle = Cocycle(frequency=golden, generator=FourierGenerator(table=FourierMatrix.constant(rotation)))
        other = np.array([[math.cos(1.1), -math.sin(1.1)], [math.sin(1.1), math.cos(1.1)]])
        conjugated = conjugate(cocycle, FourierMatrix.constant(other))
        values = generator_values(conjugated.generator, np.array([0.0, 0.5]), golden.alpha_float)
        assert np.allclose(values, rotation)

    def test_growth_rate_is_invariant(self, golden, amo):
        cocycle = schrodinger_cocycle(golden, 0.5, 3.0, amo)
        B = FourierMatrix.from_entries({(0, 0): {0: 1.0}, (0, 1): {1: 0.3}, (1, 1): {0: 1.0}})
        original = lyapunov_finite(cocycle, 1000, 8).value
        conjugated = lyapunov_finite(conjugate(cocycle, B), 1000, 8).value
        assert abs(original - conjugated) < 1e-3

    def test_singular_conjugacy(self, amo_cocycle):
        with pytest.raises(SingularConjugacy):
            conjugate(amo_cocycle, FourierMatrix.constant([[1.0, 1.0], [1.0, 1.0]]))

    def test_fourier_generator_needs_unit_determinant(self):
        with pytest.raises(ValueError):
            FourierGenerator(table=FourierMatrix.constant([[2.0, 0.0], [0.0, 2.0]]))
