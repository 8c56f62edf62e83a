# app/services/localization.py
"""Decay profiles of dual eigenvectors between consecutive resonances"""

import math
from typing import List, Tuple

import numpy as np
from scipy.linalg import eigh

from app.core.constants import AMPLITUDE_FLOOR, ENVELOPE_SLACK, REGION_C0
from app.core.errors import ConfigError, TruncationTooSmall
from app.core.logging import get_logger
from app.core.precision import make_context
from app.schemas.operators import EigenvectorDecay, LocalizationReport, OperatorConfig, RegionFit, Window
from app.services.diophantine import GUARD_BITS, scan_resonances, to_mpf
from app.services.operators import truncate

logger = get_logger("localization")


def resonance_regions(found: List[int], limit: int) -> List[Tuple[int, int]]:
    """Open gaps C0|n_j| < |k| < |n_{j+1}|/C0 as inclusive integer ranges, the last one capped at limit"""
    regions = []
    for j, n_j in enumerate(found):
        lower = REGION_C0 * abs(n_j) + 1
        if j + 1 < len(found):
            upper = math.ceil(abs(found[j + 1]) / REGION_C0) - 1
        else:
            upper = limit
        regions.append((lower, min(upper, limit)))
    return regions


def _fit_region(region: Tuple[int, int], offsets: np.ndarray, amplitudes: np.ndarray,
                epsilon1: float) -> RegionFit:
    """Least-squares line through the log amplitudes that clear the floor"""
    keep = amplitudes > AMPLITUDE_FLOOR
    sites, fitted_sites = int(offsets.size), int(np.count_nonzero(keep))
    if np.unique(offsets[keep]).size < 2:
        return RegionFit(region=region, sites=sites, fitted_sites=fitted_sites, fitted=False)
    distance = offsets[keep].astype(np.float64)
    logs = np.log(amplitudes[keep])
    slope, intercept = np.polyfit(distance, logs, 1)
    envelope = intercept + slope * distance + ENVELOPE_SLACK
    fixed = float(np.mean(logs + epsilon1 * distance))
    return RegionFit(
        region=region,
        sites=sites,
        fitted_sites=fitted_sites,
        fitted=True,
        decay_rate=float(-slope),
        intercept=float(intercept),
        violations=int(np.count_nonzero(logs > envelope)),
        fixed_rate_constant=fixed,
        fixed_rate_violations=int(np.count_nonzero(logs > fixed - epsilon1 * distance + ENVELOPE_SLACK)),
    )


def localization_profile(cfg_dual: OperatorConfig, theta: float, N_trunc: int,
                         epsilon0: float, epsilon1: float) -> LocalizationReport:
    """Fitted decay rates of the eigenvectors of the dual truncation on [-N, N].

    Each eigenvector is normalized by its largest entry and anchored there;
    resonances are those of theta + anchor * alpha. Only anchors with
    |c| <= N/2 are profiled. Every non-empty gap is fitted on the sites above
    the amplitude floor; an eigenvector whose gaps all hold fewer than two
    such sites is counted as unfitted and left out of the median.
    """
    if N_trunc < 2:
        raise ConfigError("truncation half-width must be at least 2", key="N_trunc", value=N_trunc)
    if epsilon0 <= 0 or epsilon1 < 0:
        raise ConfigError("epsilon0 must be positive and epsilon1 non-negative", key="epsilon0", value=epsilon0)

    window = Window.centered(N_trunc)
    block = truncate(cfg_dual.with_phase(theta), window, "dual")
    energies, vectors = eigh(block.matrix)

    ctx = make_context(cfg_dual.frequency.precision_bits + GUARD_BITS)
    theta_mp = to_mpf(ctx, theta)
    alpha = cfg_dual.frequency.alpha

    rows: List[EigenvectorDecay] = []
    skipped, empty, unfitted = 0, 0, 0
    total_sites, total_violations = 0, 0
    for index in range(vectors.shape[1]):
        vector = vectors[:, index]
        position = int(np.argmax(np.abs(vector)))
        anchor = position - N_trunc
        if 2 * abs(anchor) > N_trunc:
            skipped += 1
            continue
        amplitudes = np.abs(vector) / np.abs(vector[position])
        distance = np.abs(np.arange(-N_trunc, N_trunc + 1) - anchor)
        limit = N_trunc + abs(anchor)

        found, _ = scan_resonances(theta_mp + anchor * alpha, cfg_dual.frequency, epsilon0, limit)
        regions = resonance_regions(found, limit)

        fits: List[RegionFit] = []
        for lower, upper in regions:
            mask = (distance >= lower) & (distance <= upper)
            if lower <= upper and mask.any():
                fits.append(_fit_region((lower, upper), distance[mask], amplitudes[mask], epsilon1))
        if not fits:
            empty += 1
            continue

        nearest = next((fit for fit in fits if fit.fitted), None)
        if nearest is None:
            unfitted += 1
        for fit in fits:
            if fit.fitted:
                total_sites += fit.fitted_sites
                total_violations += fit.violations
        rows.append(EigenvectorDecay(
            index=index,
            energy=float(energies[index]),
            anchor=anchor,
            first_gap_empty=regions[0][0] > regions[0][1],
            regions=fits,
            decay_rate=nearest.decay_rate if nearest else None,
        ))

    rates = [row.decay_rate for row in rows if row.decay_rate is not None]
    if not rates:
        raise TruncationTooSmall("no resonance gap inside the window holds two sites above the amplitude floor",
                                 key="N_trunc", value=N_trunc)

    logger.debug("Localization profile", profiled=len(rows), skipped=skipped, empty=empty, unfitted=unfitted)
    return LocalizationReport(
        theta=float(theta),
        half_width=N_trunc,
        epsilon0=epsilon0,
        epsilon1=epsilon1,
        vectors=rows,
        skipped_anchors=skipped,
        empty_profiles=empty,
        unfitted=unfitted,
        regions_fitted=sum(fit.fitted for row in rows for fit in row.regions),
        median_rate=float(np.median(rates)),
        violation_fraction=total_violations / total_sites if total_sites else 0.0,
    )
