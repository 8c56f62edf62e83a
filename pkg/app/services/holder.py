# app/services/holder.py
"""Interval-mass scans of mu_x against eps^(1/2)"""

import math
from collections import defaultdict
from typing import Dict, List, Sequence

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal

from app.core.errors import ConfigError
from app.core.logging import ExperimentLogger, get_logger
from app.schemas.operators import OperatorConfig, Window
from app.schemas.spectral import EnergyExponent, HolderReport, HolderRow
from app.services.spectral import measure_interval, phase_measure, tridiagonal, truncation_measure

logger = get_logger("holder")
experiment_logger = ExperimentLogger()


def spectral_energies(cfg: OperatorConfig, N: int, count: int) -> np.ndarray:
    """count truncation eigenvalues spread evenly by index over the spectrum of H on [-N, N]"""
    if count < 1:
        raise ConfigError("energy count must be at least 1", key="energies", value=count)
    window = Window.centered(N)
    diagonal, off = tridiagonal(cfg, window)
    values = eigvalsh_tridiagonal(diagonal, off)
    # skip the outermost tenth where Dirichlet edge states sit
    lo, hi = values.size // 10, values.size - 1 - values.size // 10
    picks = np.linspace(lo, hi, count).round().astype(int)
    return values[picks]


def _fit_exponent(eps: np.ndarray, mass: np.ndarray) -> float | None:
    keep = mass > 0
    if np.count_nonzero(keep) < 2 or np.unique(eps[keep]).size < 2:
        return None
    slope, _ = np.polyfit(np.log(eps[keep]), np.log(mass[keep]), 1)
    return float(slope)


def holder_scan(cfg: OperatorConfig, energies: Sequence[float], epsilons: Sequence[float],
                N: int, x: float = 0.0, f=None) -> HolderReport:
    """mu_x(E - eps, E + eps) / eps^(1/2) over an (E, eps) grid, with sup statistics and per-energy exponents

    mu_x is mu^{e_-1} + mu^{e_0} unless explicit vectors f are given.
    """
    energies = [float(e) for e in energies]
    epsilons = sorted(float(e) for e in epsilons)
    if not energies:
        raise ConfigError("energy grid is empty", key="energies", value=energies)
    if not epsilons or epsilons[0] <= 0:
        raise ConfigError("eps grid must hold positive values", key="eps", value=epsilons)

    shifted = cfg.with_phase(x)
    measure = phase_measure(shifted, N) if f is None else truncation_measure(shifted, f, N)
    rows: List[HolderRow] = []
    decades: Dict[int, float] = defaultdict(float)
    exponents: List[EnergyExponent] = []
    global_sup = 0.0
    filtered = 0

    for E in energies:
        kept_eps, kept_mass = [], []
        for eps in epsilons:
            mass = measure_interval(measure, E, eps)
            ratio = mass.value / math.sqrt(eps)
            rows.append(HolderRow(energy=E, epsilon=eps, mass=mass.value, ratio=ratio,
                                  below_resolution=mass.below_resolution))
            if mass.below_resolution:
                filtered += 1
                continue
            global_sup = max(global_sup, ratio)
            decade = math.floor(math.log10(eps))
            decades[decade] = max(decades[decade], ratio)
            kept_eps.append(eps)
            kept_mass.append(mass.value)
        exponents.append(EnergyExponent(
            energy=E,
            exponent=_fit_exponent(np.array(kept_eps), np.array(kept_mass)),
            points=len(kept_eps),
        ))

    if filtered:
        experiment_logger.resolution_warning(epsilons[0], measure.resolution_floor, filtered)
    logger.debug("Holder scan done", energies=len(energies), eps=len(epsilons), sup=global_sup)
    return HolderReport(
        rows=rows,
        global_sup=global_sup,
        decade_sups=dict(sorted(decades.items())),
        exponents=exponents,
        filtered=filtered,
        floor=measure.resolution_floor,
    )
