import math

import numpy as np
import pytest

from app.core.errors import (
    Degenerate,
    LambdaZero,
    SelectionViolated,
    SingularBlock,
    StripExceeded,
    WindowTooSmall,
)
from app.schemas.operators import OperatorConfig, Window
from app.schemas.potential import Potential
from app.services.operators import (
    classify_regular,
    det_PN,
    green,
    green_identity,
    interval_uniformity,
    membership_A,
    potential_eval,
    resolvent,
    resonant_intervals,
    tail_weight,
    truncate,
    uniformity_xi,
)


class TestPotential:
    def test_almost_mathieu_at_zero(self, amo):
        assert potential_eval(amo, 0) == pytest.approx(2.0)

    def test_imaginary_phase(self, amo):
        value = potential_eval(amo, 0.1j)
        assert value.real == pytest.approx(2 * math.cosh(2 * math.pi * 0.1))
        assert abs(value.imag) < 1e-14

    def test_single_mode(self):
        p = Potential.from_modes({2: 0.5, -2: 0.5})
        assert abs(potential_eval(p, 1 / 8)) < 1e-14

    def test_real_phase_gives_real_value(self):
        p = Potential.from_modes({1: 0.3 + 0.4j, 3: 0.1j})
        assert potential_eval(p, 0.37).imag == 0

    def test_strip(self, amo):
        with pytest.raises(StripExceeded):
            potential_eval(amo, 2j)

    def test_table_must_be_conjugate_symmetric(self):
        with pytest.raises(ValueError):
            Potential(coefficients=np.array([1.0, 0.0, 2.0]))

    def test_table_must_have_odd_length(self):
        with pytest.raises(ValueError):
            Potential(coefficients=np.array([1.0, 1.0]))

    def test_tail_weights(self, amo):
        assert tail_weight(amo, 1) == 1
        assert tail_weight(amo, 2) == 0
        assert tail_weight(amo, 0) == 2

    def test_geometric_tail(self):
        p = Potential.geometric(60)
        assert tail_weight(p, 2) == pytest.approx(1.5, abs=1e-12)
        assert tail_weight(p, -2) == pytest.approx(1.5, abs=1e-12)
        assert tail_weight(Potential.geometric(5), 10) == 0

    def test_truncation_error_shrinks_with_width(self):
        assert Potential.geometric(20).truncation_error < Potential.geometric(5).truncation_error


class TestTruncate:
    def test_free_schrodinger_block(self, free_operator):
        block = truncate(free_operator.with_phase(0.3), Window(start=0, end=2))
        expected = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float)
        assert np.array_equal(block.matrix, expected)

    def test_schrodinger_block_is_symmetric(self, amo_operator):
        block = truncate(amo_operator, Window.centered(20))
        assert np.array_equal(block.matrix, block.matrix.T)

    def test_single_site_dual(self, amo_operator):
        block = truncate(amo_operator.with_phase(0.2), Window(start=0, end=0), "dual")
        assert block.matrix.shape == (1, 1)
        assert block.matrix[0, 0] == pytest.approx(2 * math.cos(2 * math.pi * 0.2))

    def test_dual_block_is_hermitian(self, golden):
        p = Potential.from_modes({1: 0.3 + 0.2j, 2: 0.1j, 3: -0.05})
        cfg = OperatorConfig(coupling=0.7, frequency=golden, potential=p, phase=0.41)
        matrix = truncate(cfg, Window(start=-6, end=6), "dual").matrix
        assert np.array_equal(matrix, matrix.conj().T)

    def test_duality_identity(self, amo_operator):
        lam, theta = amo_operator.coupling, 0.2
        window = Window(start=-10, end=10)
        dual = truncate(amo_operator.with_phase(theta), window, "dual").matrix
        direct = truncate(amo_operator.with_coupling(1 / lam).with_phase(theta), window).matrix
        assert np.allclose(dual, lam * direct, atol=1e-13)

    def test_dual_scaled_divides_by_lambda(self, amo_operator):
        window = Window(start=-4, end=4)
        dual = truncate(amo_operator, window, "dual").matrix
        scaled = truncate(amo_operator, window, "dual-scaled").matrix
        assert np.allclose(scaled, dual / amo_operator.coupling)

    def test_dual_scaled_needs_coupling(self, free_operator):
        with pytest.raises(LambdaZero):
            truncate(free_operator, Window(start=0, end=3), "dual-scaled")

    def test_dual_rejects_complex_phase(self, amo_operator):
        with pytest.raises(StripExceeded):
            truncate(amo_operator.with_phase(0.1 + 0.1j), Window(start=0, end=3), "dual")

    def test_header(self, amo_operator):
        header = truncate(amo_operator, Window(start=0, end=4)).header()
        assert header["dimension"] == 5
        assert header["order"] == "column-major"


class TestGreen:
    def test_single_site(self, amo_operator):
        block = truncate(amo_operator, Window(start=0, end=0))
        d = block.matrix[0, 0]
        assert green(block, 0.25, 0, 0).value == pytest.approx(1 / (d - 0.25))

    def test_free_two_sites(self, free_operator):
        block = truncate(free_operator, Window(start=0, end=1))
        G = [[green(block, 0.0, x, y).value for y in (0, 1)] for x in (0, 1)]
        assert np.allclose(G, [[0, 1], [1, 0]])

    def test_against_cofactor_formula(self, amo_operator):
        block = truncate(amo_operator.with_phase(0.3), Window(start=0, end=4), "dual")
        E = 0.37
        shifted = block.matrix - E * np.eye(5)
        det = np.linalg.det(shifted)
        for x, y in [(0, 0), (1, 3), (4, 2)]:
            minor = np.delete(np.delete(shifted, x, axis=1), y, axis=0)
            cofactor = (-1) ** (x + y) * np.linalg.det(minor)
            assert abs(green(block, E, x, y).value - cofactor / det) < 1e-10

    def test_resolvent_inverts(self, amo_operator):
        block = truncate(amo_operator, Window.centered(15))
        E = 0.123 + 0.01j
        G, rcond = resolvent(block, E)
        assert np.allclose(G @ (block.matrix - E * np.eye(block.dimension)), np.eye(block.dimension), atol=1e-8)
        assert rcond > 0

    def test_singular_energy(self, free_operator):
        block = truncate(free_operator, Window(start=0, end=1))
        with pytest.raises(SingularBlock):
            green(block, 1.0, 0, 0)

    def test_site_outside_window(self, free_operator):
        block = truncate(free_operator, Window(start=0, end=1))
        with pytest.raises(WindowTooSmall):
            green(block, 0.3, 0, 5)


def dual_eigenpair(cfg, data_window, index=None):
    matrix = truncate(cfg, data_window, "dual-scaled").matrix
    energies, vectors = np.linalg.eigh(matrix)
    if index is None:
        index = int(np.argmax(np.abs(vectors[data_window.position(0), :])))
    return float(energies[index]), vectors[:, index]


class TestRegularity:
    def test_single_window_by_hand(self, amo_operator):
        cfg = amo_operator.with_phase(0.2)
        data_window = Window(start=-4, end=4)
        phi = np.ones(data_window.size)
        E = 0.3
        report = classify_regular(cfg, phi, data_window, 0, 1.0, 1, E)
        d = 2 * math.cos(2 * math.pi * 0.2) / cfg.coupling
        assert report.candidates == 1
        assert report.window == Window(start=0, end=0)
        assert report.defect == pytest.approx(2 / abs(d - E))

    def test_huge_mass_is_singular(self, amo_operator):
        cfg = amo_operator.with_phase(0.2)
        data_window = Window(start=-20, end=20)
        E, phi = dual_eigenpair(cfg, data_window)
        report = classify_regular(cfg, phi, data_window, 0, 1000.0, 5, E)
        assert not report.regular
        assert report.candidates == 5
        assert report.excluded_windows == 0

    def test_boundary_windows_are_excluded(self, amo_operator):
        with pytest.raises(WindowTooSmall):
            classify_regular(amo_operator, np.ones(5), Window(start=-2, end=2), 0, 1.0, 2, 0.3)

    def test_green_identity_on_eigenvector(self, amo_operator):
        cfg = amo_operator.with_phase(0.2)
        data_window = Window(start=-10, end=10)
        E, phi = dual_eigenpair(cfg, data_window)
        identity = green_identity(cfg, phi, data_window, E, Window(start=-3, end=3), 0)
        assert identity.residual < 1e-8


class TestDeterminants:
    def test_single_site(self, amo_operator):
        theta, E = 0.1, 0.2
        det = det_PN(amo_operator, theta, E, 1)
        expected = math.log(abs(2 * math.cos(2 * math.pi * theta) / amo_operator.coupling - E))
        assert det.log_abs == pytest.approx(expected)

    def test_three_term_recurrence(self, amo_operator):
        theta, E, N = 0.17, 0.3, 12
        lam, alpha = amo_operator.coupling, amo_operator.alpha
        previous, current = 1.0, 2 * math.cos(2 * math.pi * theta) / lam - E
        for n in range(1, N):
            d = 2 * math.cos(2 * math.pi * (theta + n * alpha)) / lam - E
            previous, current = current, d * current - previous
        assert det_PN(amo_operator, theta, E, N).log_abs == pytest.approx(math.log(abs(current)), abs=1e-9)

    def test_evenness(self, amo_operator):
        theta, E, N = 0.13, 0.3, 7
        reflected = -theta - (N - 1) * amo_operator.alpha
        first = det_PN(amo_operator, theta, E, N).log_abs
        second = det_PN(amo_operator, reflected, E, N).log_abs
        assert abs(first - second) < 1e-10

    def test_needs_coupling(self, free_operator):
        with pytest.raises(LambdaZero):
            det_PN(free_operator, 0.1, 0.0, 3)

    def test_membership_limits(self, amo_operator):
        assert membership_A(amo_operator, 6, 1e6, 0.21, 0.3).member
        assert not membership_A(amo_operator, 6, -1e6, 0.21, 0.3).member

    def test_membership_symmetry(self, amo_operator):
        for theta in (0.05, 0.17, 0.33):
            plus = membership_A(amo_operator, 6, 0.0, theta, 0.3)
            minus = membership_A(amo_operator, 6, 0.0, -theta, 0.3)
            assert plus.log_abs == pytest.approx(minus.log_abs, abs=1e-8)
            assert plus.member == minus.member


class TestUniformity:
    def test_two_phases(self):
        report = uniformity_xi([0.0, 0.25], 101)
        assert report.xi_hat == pytest.approx(math.log(2), rel=1e-12)
        assert report.argmax == -1.0

    def test_antipodal_pair(self):
        assert abs(uniformity_xi([0.0, 0.5], 101).xi_hat) < 1e-12

    def test_permutation_and_reflection(self):
        thetas = [0.1, 0.2, 0.35, 0.45]
        base = uniformity_xi(thetas).xi_hat
        assert uniformity_xi(thetas[::-1]).xi_hat == pytest.approx(base, rel=1e-9)
        assert uniformity_xi([-t for t in thetas]).xi_hat == pytest.approx(base, rel=1e-9)

    def test_chebyshev_nodes_spread_well(self):
        def xi(k):
            thetas = [(2 * j + 1) / (4 * (k + 1)) for j in range(k + 1)]
            return uniformity_xi(thetas).xi_hat

        assert xi(8) < xi(2) < 1.0

    def test_repeated_cosine(self):
        with pytest.raises(Degenerate):
            uniformity_xi([0.1, 0.9])

    def test_resonant_windows(self, golden):
        first, second = resonant_intervals(100, -3, 8, 1)
        assert first == Window(start=-15, end=0)
        assert second == Window(start=85, end=116)
        assert first.size + second.size == 6 * 8

        first, _ = resonant_intervals(100, 3, 8, 1)
        assert first == Window(start=0, end=15)

    @pytest.mark.parametrize("s", [0, 2])
    def test_scale_violation(self, s):
        with pytest.raises(SelectionViolated):
            resonant_intervals(100, 1, 8, s)

    def test_interval_uniformity_counts_sites(self, golden):
        report = interval_uniformity(0.2345, 100, 5, golden, 512)
        assert report.count == 48
        assert math.isfinite(report.xi_hat)
