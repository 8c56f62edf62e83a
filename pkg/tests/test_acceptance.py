import json
import math

import numpy as np
import pytest
from scipy.linalg import eigh_tridiagonal

from app.db.run_store import RunStore
from app.schemas.experiment import ExperimentConfig
from app.schemas.frequency import FrequencySpec
from app.schemas.operators import OperatorConfig, Window
from app.services.cocycles import lyapunov_finite, schrodinger_cocycle, strip_growth_scan
from app.services.diophantine import cf_expand, norm_dist_grid
from app.services.experiment_runner import ExperimentRunner
from app.services.holder import holder_scan, spectral_energies
from app.services.localization import localization_profile
from app.services.reducibility import model_X, pk_sequence
from app.services.spectral import duality_gap, ids, thouless_residual, tridiagonal
from app.services.weyl import free_m_plus, pk_epsilon_pipeline, weyl_m_plus

pytestmark = pytest.mark.slow


def bulk_energies(cfg, count, N=200):
    """Truncation eigenvalues whose eigenvectors keep most of their mass away from the window edges"""
    diagonal, off = tridiagonal(cfg, Window.centered(N))
    energies, vectors = eigh_tridiagonal(diagonal, off)
    rim = N // 10
    mass = np.abs(vectors) ** 2
    edge = mass[:rim].sum(axis=0) + mass[-rim:].sum(axis=0)
    bulk = energies[edge < 0.3]
    return bulk[np.linspace(0, bulk.size - 1, count + 2).round().astype(int)[1:-1]]


def test_free_operator_closed_forms(free_operator):
    energies = np.linspace(-1.99, 1.99, 101)
    values = ids(free_operator, energies, 2000)
    expected = 1 - np.arccos(energies / 2) / np.pi
    assert np.max(np.abs(values - expected)) < 1e-2

    report = holder_scan(free_operator, [2.0], [1e-3, 3e-3, 1e-2], 2000, f={0: 1.0})
    for row in report.rows:
        assert row.ratio == pytest.approx(1 / math.pi, rel=0.1)

    rng = np.random.default_rng(11)
    z = rng.uniform(-3, 3, 100) + 1j * rng.uniform(0.05, 2.0, 100)
    assert np.max(np.abs(weyl_m_plus(free_operator, z).values - free_m_plus(z))) < 1e-8


def test_zero_exponent_on_spectrum(amo_operator):
    for E in bulk_energies(amo_operator, 4):
        cocycle = schrodinger_cocycle(amo_operator.frequency, 0.5, float(E), amo_operator.potential)
        assert lyapunov_finite(cocycle, 10_000, 16).value < 0.02


def test_pk_pipeline(golden, amo, free_operator):
    table = pk_epsilon_pipeline(free_operator, 0.0, 0.0, 200)
    assert all(row.scaled_norm == pytest.approx(1.0, rel=1e-9) for row in table.rows)

    cfg = free_operator.with_coupling(0.2)
    E = float(bulk_energies(cfg, 1)[0])
    sequence = pk_sequence(schrodinger_cocycle(golden, 0.2, E, amo), 0.0, 1000)
    assert sequence.positive_definite
    assert sequence.monotone
    assert sequence.trace_bound
    assert sequence.epsilon_decreasing


def test_continued_fraction_brackets():
    rng = np.random.default_rng(5)
    for _ in range(10):
        period = [int(a) for a in rng.integers(1, 20, size=int(rng.integers(1, 5)))]
        cf = cf_expand(FrequencySpec.from_stream(period, periodic=True), 30)
        for k in range(1, cf.depth - 1):
            gap = float(cf.gaps[k])
            assert 1 / (2 * cf.q[k + 1]) < gap <= 1 / cf.q[k + 1]
        for n in range(1, cf.depth - 1):
            if cf.q[n + 1] > 10 ** 5:
                break
            ks = np.arange(1, cf.q[n + 1])
            assert int(ks[np.argmin(norm_dist_grid(ks, cf))]) == cf.q[n]


@pytest.mark.parametrize("E", [0.0, 3.0])
def test_thouless_residual_free(free_operator, E):
    assert thouless_residual(free_operator, E, 4000, 4000).residual < 1e-2


def test_strip_growth_ladder_and_off_spectrum_contrast(golden, amo):
    cfg = OperatorConfig(coupling=0.3, frequency=golden, potential=amo)
    E = float(bulk_energies(cfg, 1)[0])
    on_spectrum = strip_growth_scan(schrodinger_cocycle(golden, 0.3, E, amo), 0.05, [100, 1000, 10_000],
                                    grid=256, strips=3)
    assert on_spectrum.monotone
    assert on_spectrum.final_rate < 0.05

    off_spectrum = strip_growth_scan(schrodinger_cocycle(golden, 0.3, 3.0, amo), 0.05, [100, 1000, 10_000],
                                     grid=256, strips=3)
    assert off_spectrum.final_rate == pytest.approx(math.log((3 + math.sqrt(5)) / 2), rel=0.05)


def test_duality_distance_shrinks(amo_operator):
    distances = [duality_gap(amo_operator, N).distance for N in (375, 750, 1500)]
    assert distances[0] > distances[1] > distances[2]
    assert distances[-1] < 0.05


def test_herglotz_bounds_hold_on_every_sample(run_dir):
    config = ExperimentConfig.build({
        "coupling": 0.2, "N": 2000, "energy_count": 100,
        "eps_min": 1e-2, "eps_max": 1.0, "eps_points": 10,
    })
    ExperimentRunner(config, RunStore(run_dir), threads=1).execute("weyl")
    summary = json.loads((run_dir / "weyl.json").read_text(encoding="utf-8"))
    assert summary["samples"] == 1000
    assert summary["psi_violations"] == 0
    lines = (run_dir / "weyl.csv").read_text(encoding="utf-8").splitlines()
    header = lines[0].split(",")
    lower_bound = header.index("herglotz_bound")
    assert all(line.split(",")[lower_bound] == "true" for line in lines[1:])


def test_pk_ratio_band(golden, amo):
    cfg = OperatorConfig(coupling=0.2, frequency=golden, potential=amo)
    E = float(bulk_energies(cfg, 1)[0])
    table = pk_epsilon_pipeline(cfg, 0.0, E, 1000)
    assert table.ratio_min >= 1e-2
    assert table.ratio_max <= 1e2
    assert math.isfinite(table.normalized_psi_max)


@pytest.mark.parametrize("theta", [0.1, 0.2345, 0.4])
@pytest.mark.parametrize("t_hat", [0.1, 0.5, 1.0])
def test_model_x_inverse_norm_band(golden, theta, t_hat):
    for k in (10, 100, 1000):
        report = model_X(theta, 1, t_hat, golden, k)
        assert 0.1 <= report.inverse_norm / k <= 10


def test_thouless_residual_halves_as_scales_double(free_operator):
    coarse = thouless_residual(free_operator, 3.0, 2000, 2000).residual
    fine = thouless_residual(free_operator, 3.0, 4000, 4000).residual
    assert fine / coarse == pytest.approx(0.5, rel=0.3)


def test_localization_sweep(amo_operator):
    cfg = amo_operator.with_coupling(0.1)
    thetas = np.random.default_rng(7).random(10)
    reports = [localization_profile(cfg, float(theta), 250, 0.1, 0.05) for theta in thetas]
    assert all(math.isfinite(report.median_rate) for report in reports)
    rates = [row.decay_rate for report in reports for row in report.vectors if row.fitted]
    assert np.median(rates) > 0.5 * math.log(10)
    assert np.mean([report.violation_fraction for report in reports]) < 0.05


def test_holder_decade_sups_do_not_blow_up(golden, amo):
    cfg = OperatorConfig(coupling=0.2, frequency=golden, potential=amo)
    energies = spectral_energies(cfg, 4000, 64)
    report = holder_scan(cfg, energies, np.logspace(-3, -1, 9), 4000)
    assert math.isfinite(report.global_sup)
    sups = [report.decade_sups[d] for d in sorted(report.decade_sups)]
    assert len(sups) >= 2
    assert all(fine <= 3 * coarse for fine, coarse in zip(sups, sups[1:]))
