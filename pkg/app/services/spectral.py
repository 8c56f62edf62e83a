# app/services/spectral.py
"""Spectral measures, IDS, Aubry duality and the Thouless formula on Dirichlet truncations"""

import math
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import eigh, eigh_tridiagonal, eigvalsh_tridiagonal

from app.core.config import settings
from app.core.constants import COLLISION_DISTANCE, EDGE_FRACTION, MAX_SUPPORT_FRACTION
from app.core.errors import AtomCollision, ConfigError, DepthInsufficient, SupportTooWide
from app.core.logging import get_logger
from app.core.workers import parallel_map
from app.schemas.operators import OperatorConfig, Window
from app.schemas.spectral import (
    CovarianceReport,
    DualityReport,
    GapRow,
    IntervalMass,
    MeasureApprox,
    SeminormRow,
    ThoulessReport,
)
from app.services.cocycles import lyapunov_finite, schrodinger_cocycle
from app.services.diophantine import orbit_phases
from app.services.operators import potential_values, truncate

logger = get_logger("spectral")

Vector = Dict[int, complex]


def _check_size(N: int, limit: int, key: str = "N") -> None:
    if N < 1:
        raise ConfigError("truncation half-width must be positive", key=key, value=N)
    if N > limit:
        raise ConfigError(f"truncation half-width exceeds {limit}", key=key, value=N)


def tridiagonal(cfg: OperatorConfig, window: Window, phase: float | None = None) -> Tuple[np.ndarray, np.ndarray]:
    """Diagonal lambda v(x + n alpha) and unit off-diagonal of H on a window"""
    x = cfg.phase.real if phase is None else phase
    reach = max(abs(window.start), abs(window.end))
    if reach >= cfg.frequency.q_depth:
        raise DepthInsufficient("window exceeds the resolved frequency scale", key="N", value=reach)
    diagonal = cfg.coupling * potential_values(cfg.potential, orbit_phases(x, window.indices(), cfg.frequency))
    return diagonal, np.ones(window.size - 1)


def resolution_floor(N: int) -> float:
    return settings.resolution_constant / N


def _normalize_vectors(f: Union[Vector, Sequence[Vector]]) -> List[Vector]:
    vectors = [f] if isinstance(f, dict) else list(f)
    if not vectors or any(not v for v in vectors):
        raise ConfigError("vector f must have finite nonempty support", key="f", value=None)
    return [{int(n): complex(value) for n, value in v.items()} for v in vectors]


def _spectral_weights(diagonal: np.ndarray, off: np.ndarray, window: Window,
                      vectors: List[Vector]) -> Tuple[np.ndarray, np.ndarray]:
    """Eigenvalues and summed weights |<f, phi_i>|^2, eigenvectors computed in index batches"""
    dim = diagonal.size
    batch = settings.eigvec_batch
    rows = [(np.array([window.position(n) for n in v]), np.array(list(v.values()))) for v in vectors]

    def accumulate(vecs: np.ndarray) -> np.ndarray:
        total = np.zeros(vecs.shape[1])
        for positions, values in rows:
            total += np.abs(values.conj() @ vecs[positions, :]) ** 2
        return total

    if dim <= 8 * batch:
        energies, vecs = eigh_tridiagonal(diagonal, off)
        return energies, accumulate(vecs)

    energies = np.empty(dim)
    weights = np.empty(dim)
    for start in range(0, dim, batch):
        stop = min(start + batch, dim) - 1
        values, vecs = eigh_tridiagonal(diagonal, off, select="i", select_range=(start, stop))
        energies[start:stop + 1] = values
        weights[start:stop + 1] = accumulate(vecs)
    return energies, weights


def truncation_measure(cfg: OperatorConfig, f: Union[Vector, Sequence[Vector]], N: int) -> MeasureApprox:
    """Atoms of mu^f (or of the sum of mu^f over several f) for H on [-N, N]"""
    _check_size(N, settings.max_truncation)
    vectors = _normalize_vectors(f)
    support = max(abs(n) for v in vectors for n in v)
    if support > MAX_SUPPORT_FRACTION * N:
        raise SupportTooWide("support of f must lie in [-N/2, N/2]", key="f", value=support)

    window = Window.centered(N)
    diagonal, off = tridiagonal(cfg, window)
    energies, weights = _spectral_weights(diagonal, off, window, vectors)
    order = np.argsort(energies, kind="stable")
    return MeasureApprox(
        half_width=N,
        vectors=vectors,
        energies=energies[order],
        weights=weights[order],
        total_mass=float(weights.sum()),
        phase=cfg.phase.real,
        resolution_floor=resolution_floor(N),
        truncation_error=cfg.potential.truncation_error,
    )


def phase_measure(cfg: OperatorConfig, N: int) -> MeasureApprox:
    """mu = mu^{e_-1} + mu^{e_0}"""
    return truncation_measure(cfg, [{-1: 1.0}, {0: 1.0}], N)


def measure_interval(m: MeasureApprox, E: float, eps: float) -> IntervalMass:
    """mu([E - eps, E + eps)) with a flag when eps is below the resolution floor"""
    if eps <= 0:
        raise ConfigError("eps must be positive", key="eps", value=eps)
    cumulative = m.cumulative()
    lo = np.searchsorted(m.energies, E - eps, side="left")
    hi = np.searchsorted(m.energies, E + eps, side="left")
    return IntervalMass(
        value=float(cumulative[hi] - cumulative[lo]),
        below_resolution=eps < m.resolution_floor,
        floor=m.resolution_floor,
    )


def ids(cfg: OperatorConfig, E, N: int, phase_avg: int = 1, threads: int | None = None):
    """#{E_i <= E} / dim averaged over phase_avg equally spaced phases; E may be an array"""
    _check_size(N, settings.max_truncation)
    if phase_avg < 1:
        raise ConfigError("phase_avg must be at least 1", key="phase_avg", value=phase_avg)
    window = Window.centered(N)
    energies = np.atleast_1d(np.asarray(E, dtype=np.float64))

    def count(phase: float) -> np.ndarray:
        diagonal, off = tridiagonal(cfg, window, phase)
        spectrum = eigvalsh_tridiagonal(diagonal, off)
        return np.searchsorted(spectrum, energies, side="right") / spectrum.size

    phases = [cfg.phase.real + j / phase_avg for j in range(phase_avg)]
    values = np.mean(parallel_map(count, phases, threads), axis=0)
    return float(values[0]) if np.ndim(E) == 0 else values


# ---------------------------------------------------------------------------
# Aubry duality
# ---------------------------------------------------------------------------

def _edge_mask(vectors: np.ndarray) -> np.ndarray:
    """True for eigenvectors carrying more than half their mass in the outer tenth of the window"""
    dim = vectors.shape[0]
    rim = max(1, int(EDGE_FRACTION * dim / 2))
    mass = np.abs(vectors) ** 2
    outer = mass[:rim].sum(axis=0) + mass[dim - rim:].sum(axis=0)
    return outer > 0.5 * mass.sum(axis=0)


def _directed(a: np.ndarray, b: np.ndarray) -> float:
    idx = np.clip(np.searchsorted(b, a), 1, b.size - 1) if b.size > 1 else np.zeros(a.size, dtype=int)
    left = np.abs(a - b[idx - 1]) if b.size > 1 else np.abs(a - b[0])
    right = np.abs(a - b[idx]) if b.size > 1 else left
    return float(np.max(np.minimum(left, right)))


def hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.sort(a), np.sort(b)
    return max(_directed(a, b), _directed(b, a))


def _gap_table(direct: np.ndarray, dual: np.ndarray, min_width: float) -> List[GapRow]:
    rows = []
    spacing = np.diff(direct)
    for i in np.nonzero(spacing > min_width)[0]:
        lower, upper = direct[i], direct[i + 1]
        middle = 0.5 * (lower + upper)
        below = dual[dual <= middle]
        above = dual[dual > middle]
        if below.size == 0 or above.size == 0:
            continue
        dual_lower, dual_upper = float(below.max()), float(above.min())
        rows.append(GapRow(
            lower=float(lower), upper=float(upper),
            dual_lower=dual_lower, dual_upper=dual_upper,
            mismatch=max(abs(lower - dual_lower), abs(upper - dual_upper)),
        ))
    return rows


def duality_gap(cfg: OperatorConfig, N: int, phases: int = 4, min_gap: float = 0.05,
                threads: int | None = None) -> DualityReport:
    """Hausdorff distance between the spectra of the H and dual truncations on [-N, N]"""
    _check_size(N, settings.max_duality_truncation)
    window = Window.centered(N)
    samples = [cfg.phase.real + j / phases for j in range(phases)]

    def direct_spectrum(phase: float):
        diagonal, off = tridiagonal(cfg, window, phase)
        energies, vectors = eigh_tridiagonal(diagonal, off)
        edge = _edge_mask(vectors)
        return energies[~edge], int(edge.sum())

    def dual_spectrum(phase: float):
        block = truncate(cfg.with_phase(phase), window, "dual")
        energies, vectors = eigh(block.matrix)
        edge = _edge_mask(vectors)
        return energies[~edge], int(edge.sum())

    direct_parts = parallel_map(direct_spectrum, samples, threads)
    dual_parts = parallel_map(dual_spectrum, samples, threads)
    direct = np.sort(np.concatenate([part[0] for part in direct_parts]))
    dual = np.sort(np.concatenate([part[0] for part in dual_parts]))
    edge_states = sum(part[1] for part in direct_parts) + sum(part[1] for part in dual_parts)

    return DualityReport(
        half_width=N,
        phases=phases,
        distance=hausdorff(direct, dual),
        gaps=_gap_table(direct, dual, min_gap),
        edge_states=edge_states,
    )


# ---------------------------------------------------------------------------
# Thouless formula
# ---------------------------------------------------------------------------

def thouless_residual(cfg: OperatorConfig, E: float, N: int, n_L: int, grid: int = 16,
                      threads: int | None = None) -> ThoulessReport:
    """|L_{n_L}(E) - (1/dim) sum_i ln|E - E_i||, eigenvalues of H on [-N+1, N]"""
    _check_size(N, settings.max_truncation)
    window = Window(start=-N + 1, end=N)
    diagonal, off = tridiagonal(cfg, window)
    spectrum = eigvalsh_tridiagonal(diagonal, off)
    nearest = float(np.min(np.abs(spectrum - E)))
    if nearest < COLLISION_DISTANCE:
        raise AtomCollision("energy sits on a truncation eigenvalue", key="E", value=E)
    log_potential = float(np.mean(np.log(np.abs(E - spectrum))))

    cocycle = schrodinger_cocycle(cfg.frequency, cfg.coupling, E, cfg.potential)
    lyapunov = lyapunov_finite(cocycle, n_L, grid, threads).value
    return ThoulessReport(
        energy=E,
        half_width=N,
        n_lyapunov=n_L,
        lyapunov=lyapunov,
        log_potential=log_potential,
        residual=abs(lyapunov - log_potential),
        nearest_atom=nearest,
    )


# ---------------------------------------------------------------------------
# Measure identities
# ---------------------------------------------------------------------------

def stieltjes(m: MeasureApprox, z) -> np.ndarray:
    z = np.atleast_1d(np.asarray(z, dtype=np.complex128))
    return (m.weights[None, :] / (m.energies[None, :] - z[:, None])).sum(axis=1)


def shift_covariance(cfg: OperatorConfig, k: int, N: int, imag: float = 0.5, samples: int = 64) -> CovarianceReport:
    """Compare mu^{e_k} at phase x with mu^{e_0} at phase x + k alpha"""
    shifted_phase = float(orbit_phases(cfg.phase.real, [k], cfg.frequency)[0])
    m_k = truncation_measure(cfg, {k: 1.0}, N)
    m_0 = truncation_measure(cfg.with_phase(shifted_phase), {0: 1.0}, N)

    z = np.linspace(-3.0, 3.0, samples) + 1j * imag
    stieltjes_difference = float(np.max(np.abs(stieltjes(m_k, z) - stieltjes(m_0, z))))
    grid = np.linspace(min(m_k.energies[0], m_0.energies[0]), max(m_k.energies[-1], m_0.energies[-1]), samples)
    cdf_k = m_k.cumulative()[np.searchsorted(m_k.energies, grid, side="right")]
    cdf_0 = m_0.cumulative()[np.searchsorted(m_0.energies, grid, side="right")]
    return CovarianceReport(
        k=k,
        half_width=N,
        stieltjes_difference=stieltjes_difference,
        distribution_difference=float(np.max(np.abs(cdf_k - cdf_0))),
    )


def seminorm_check(cfg: OperatorConfig, f: Vector, g: Vector, intervals: Sequence[Tuple[float, float]],
                   N: int) -> List[SeminormRow]:
    """mu^{f+g}(J)^(1/2) <= mu^f(J)^(1/2) + mu^g(J)^(1/2) for each J = [lower, upper)"""
    combined = dict(f)
    for n, value in g.items():
        combined[n] = combined.get(n, 0) + value
    measures = [truncation_measure(cfg, vector, N) for vector in (combined, f, g)]

    rows = []
    for lower, upper in intervals:
        if upper <= lower:
            raise ConfigError("interval must have positive length", key="interval", value=(lower, upper))
        centre, radius = 0.5 * (lower + upper), 0.5 * (upper - lower)
        masses = [max(measure_interval(m, centre, radius).value, 0.0) for m in measures]
        value = math.sqrt(masses[0])
        bound = math.sqrt(masses[1]) + math.sqrt(masses[2])
        rows.append(SeminormRow(
            lower=lower, upper=upper, combined=value, bound=bound,
            holds=value <= bound * (1 + 1e-10) + 1e-14,
        ))
    return rows
