# app/services/reducibility.py
"""Small-divisor solves, Bloch lifts of dual vectors and the P_(k) sums"""

import math
from typing import Iterable, List, Optional

import numpy as np
from scipy.linalg import LinAlgError, cholesky

from app.core.constants import DEFAULT_DIVISOR_FLOOR, LOG_OVERFLOW_GUARD, MONOTONE_RELATIVE_TOL, STRIP_LINES
from app.core.errors import ConfigError, DivisorBelowFloor
from app.core.logging import ExperimentLogger, get_logger
from app.schemas.cocycles import (
    BlochDefect,
    Cocycle,
    DivisorSolution,
    FourierTable,
    ModelTGenerator,
    ModelXReport,
    PkRow,
    PkSequence,
    SchrodingerGenerator,
)
from app.schemas.frequency import CFExpansion
from app.schemas.operators import OperatorConfig, Window
from app.services.cocycles import ProductState, generator_values
from app.services.diophantine import orbit_phases, shift_dist_grid

logger = get_logger("reducibility")
experiment_logger = ExperimentLogger()


# ---------------------------------------------------------------------------
# Small divisors
# ---------------------------------------------------------------------------

def divisor_solve(b_hat: FourierTable, theta: float, cf: CFExpansion, excluded: Iterable[int],
                  K: int, floor: float = DEFAULT_DIVISOR_FLOOR) -> DivisorSolution:
    """w_k = -b_k e^{-2 pi i theta} / (1 - e^{-2 pi i (2 theta - k alpha)}) for |k| <= K, k not excluded"""
    if K < 0:
        raise ConfigError("cutoff must be non-negative", key="K", value=K)
    excluded = sorted(set(int(k) for k in excluded))
    ks = np.arange(-K, K + 1)
    two_theta = 2 * theta
    distances = shift_dist_grid(two_theta, ks, cf)
    active = ~np.isin(ks, excluded)

    too_small = active & (distances < floor)
    if too_small.any():
        k = int(ks[np.argmax(too_small)])
        raise DivisorBelowFloor(
            f"||2 theta - k alpha|| = {distances[ks == k][0]:.3e} is below the floor; exclude k",
            key="k",
            value=k,
        )

    delta = orbit_phases(two_theta, -ks, cf)  # 2 theta - k alpha mod 1
    divisors = 1 - np.exp(-2j * np.pi * delta)
    b = np.array([b_hat.coefficient(int(k)) for k in ks])
    w = np.zeros(ks.size, dtype=np.complex128)
    w[active] = -b[active] * np.exp(-2j * np.pi * theta) / divisors[active]

    used = np.abs(divisors[active])
    return DivisorSolution(
        coefficients=w,
        cutoff=K,
        excluded=excluded,
        min_divisor=float(used.min()) if used.size else math.inf,
        w_bound=float(np.abs(w).sum()),
    )


def conjugation_residual(b_hat: FourierTable, w_hat: FourierTable, theta: float,
                         cf: CFExpansion, grid: Optional[int] = None) -> FourierTable:
    """Fourier table of e^{2 pi i theta} w(x) + b(x) - e^{-2 pi i theta} w(x + alpha).

    This is the upper-right entry of W(x+alpha)^{-1} [[e^{2 pi i theta}, b], [0, e^{-2 pi i theta}]] W(x)
    with W = [[1, w], [0, 1]].
    """
    K = max(b_hat.half_width, w_hat.half_width)
    minimum = 4 * K + 9
    size = grid or 1 << max(4, (minimum - 1).bit_length())
    if size < minimum:
        raise ConfigError(f"grid must exceed {minimum - 1}", key="grid", value=size)
    xs = np.arange(size) / size
    shift = orbit_phases(0.0, [1], cf)[0]
    rotation = np.exp(2j * np.pi * theta)
    values = rotation * w_hat.evaluate(xs) + b_hat.evaluate(xs) - w_hat.evaluate(xs + shift) / rotation
    spectrum = np.fft.fft(values) / size
    ks = np.arange(-K, K + 1)
    return FourierTable(coefficients=spectrum[ks % size])


# ---------------------------------------------------------------------------
# Bloch lift
# ---------------------------------------------------------------------------

def _dual_defect(cfg: OperatorConfig, theta: float, E: float, u: np.ndarray, start: int,
                 ks: np.ndarray) -> np.ndarray:
    """(E - 2cos 2pi(theta + k alpha)) u_k - lambda (v * u)_k on the index range ks"""
    p = cfg.potential
    K = p.half_width
    padded = np.zeros(ks.size, dtype=np.complex128)
    offset = start - int(ks[0])
    padded[offset:offset + u.size] = u
    convolution = np.convolve(padded, p.coefficients)[K:K + ks.size]
    cosines = 2 * np.cos(2 * np.pi * orbit_phases(theta, ks, cfg.frequency))
    return (E - cosines) * padded - cfg.coupling * convolution


def lift_values(u_hat: np.ndarray, window: Window, theta: float, xs, alpha: float) -> np.ndarray:
    """U^I(x) = (e^{2 pi i theta} u^I(x), u^I(x - alpha)) at each phase; shape (len(xs), 2)"""
    xs = np.asarray(xs, dtype=np.complex128)
    ks = window.indices()
    u = np.exp(2j * np.pi * np.multiply.outer(xs, ks)) @ u_hat
    u_back = np.exp(2j * np.pi * np.multiply.outer(xs - alpha, ks)) @ u_hat
    return np.stack((np.exp(2j * np.pi * theta) * u, u_back), axis=-1)


def strip_sup_norm(ks: np.ndarray, coefficients: np.ndarray, eta: float, grid: int = 256,
                   lines: int = STRIP_LINES) -> float:
    """sup of |sum_k c_k e^{2 pi i k x}| over |Im x| <= eta, sampled on horizontal lines.

    The lines run symmetrically and include both edges Im x = -eta and +eta.
    """
    if eta < 0:
        raise ConfigError("strip half-width must be non-negative", key="eta", value=eta)
    xs = np.arange(grid) / grid
    heights = np.linspace(-eta, eta, lines) if eta > 0 else np.zeros(1)
    sup_norm = 0.0
    for eps in heights:
        values = np.exp(2j * np.pi * np.multiply.outer(xs + 1j * eps, ks)) @ coefficients
        sup_norm = max(sup_norm, float(np.max(np.abs(values))))
    return sup_norm


def bloch_lift(cfg: OperatorConfig, theta: float, E: float, u_hat: np.ndarray, window: Window,
               data: Optional[np.ndarray] = None, data_window: Optional[Window] = None,
               eta: float = 0.0, grid: int = 256) -> BlochDefect:
    """Defect g of the lift of u restricted to window, computed directly and from the outside data.

    With data an eigenvector on data_window, the two defects are negatives of each
    other wherever the potential band stays inside data_window.
    """
    u_hat = np.asarray(u_hat, dtype=np.complex128)
    if u_hat.size != window.size:
        raise ConfigError("vector length does not match its window", key="u_hat", value=u_hat.size)
    K = cfg.potential.half_width
    if data is None:
        data, data_window = u_hat, window
    data = np.asarray(data, dtype=np.complex128)
    if not (data_window.start <= window.start and window.end <= data_window.end):
        raise ConfigError("window must lie inside the data window", key="window", value=(window.start, window.end))

    ks = np.arange(data_window.start - K, data_window.end + K + 1)
    direct = _dual_defect(cfg, theta, E, u_hat, window.start, ks)
    outside = data.copy()
    outside[window.start - data_window.start:window.end - data_window.start + 1] = 0
    boundary = _dual_defect(cfg, theta, E, outside, data_window.start, ks)

    interior = (ks >= data_window.start + K) & (ks <= data_window.end - K)
    scale = max(float(np.max(np.abs(direct))), 1e-300)
    agreement = float(np.max(np.abs(direct + boundary)[interior])) / scale if interior.any() else 0.0

    keep = np.nonzero(direct)[0]
    lo, hi = (int(keep[0]), int(keep[-1])) if keep.size else (0, 0)
    table_ks = ks[lo:hi + 1]
    sup_norm = strip_sup_norm(table_ks, direct[lo:hi + 1], eta, grid)

    return BlochDefect(
        window=window,
        ks=table_ks,
        g_direct=direct[lo:hi + 1],
        g_boundary=boundary[lo:hi + 1],
        agreement=agreement,
        checked=int(interior.sum()),
        sup_norm=sup_norm,
    )


# ---------------------------------------------------------------------------
# P_(k) sums
# ---------------------------------------------------------------------------

def _hermitian_eigen(P: np.ndarray):
    a, d = P[0, 0].real, P[1, 1].real
    b = P[0, 1]
    trace = a + d
    det = a * d - abs(b) ** 2
    top = trace / 2 + math.hypot((a - d) / 2, abs(b))
    return trace, det, top, det / top


def _monotone(values: List[float]) -> bool:
    return all(b >= a - MONOTONE_RELATIVE_TOL * max(1.0, abs(a)) for a, b in zip(values, values[1:]))


def pk_sequence(c: Cocycle, x: float, k_max: int) -> PkSequence:
    """P_(k) = sum_{j<=k} A_{2j-1}(x+alpha)^* A_{2j-1}(x+alpha) with online checks"""
    if not isinstance(c.generator, SchrodingerGenerator):
        raise ConfigError("P_(k) needs a Schrodinger cocycle", key="generator", value=c.generator.type)
    if k_max < 1:
        raise ConfigError("k_max must be at least 1", key="k_max", value=k_max)

    alpha = c.frequency.alpha_float
    shifts = orbit_phases(float(x), np.arange(1, 2 * k_max), c.frequency)
    steps = generator_values(c.generator, shifts, alpha)

    state = ProductState(1)
    state.push(steps[0:1])
    P = np.zeros((2, 2), dtype=np.complex128)
    sigma = 0.0  # P = e^{sigma} * P
    log_scaled = False
    positive_definite = True
    rows: List[PkRow] = []
    for k in range(1, k_max + 1):
        if k > 1:
            state.push(steps[2 * k - 3:2 * k - 2])
            state.push(steps[2 * k - 2:2 * k - 1])
        entries = state.entries[0]
        s = float(state.log_scale[0])
        new_sigma = max(sigma, 2 * s)
        P = P * math.exp(sigma - new_sigma) + (entries.conj().T @ entries) * math.exp(2 * s - new_sigma)
        sigma = new_sigma
        if sigma > LOG_OVERFLOW_GUARD and not log_scaled:
            log_scaled = True
            experiment_logger.overflow_guard("pk_sequence", k, sigma)

        trace, det, top, bottom = _hermitian_eigen(P)
        if bottom <= 0:
            positive_definite = False
        else:
            try:
                cholesky(P, lower=True)
            except LinAlgError:
                positive_definite = False
        log_det = 2 * sigma + math.log(det) if det > 0 else -math.inf
        if sigma == 0 and det > 0:
            epsilon = 1 / (2 * math.sqrt(det))
        else:
            epsilon = math.exp(-0.5 * (math.log(4) + log_det))
        log_norm = sigma + math.log(top)
        log_min = sigma + math.log(bottom) if bottom > 0 else -math.inf
        rows.append(PkRow(
            k=k,
            log_norm=log_norm,
            log_min=log_min,
            log_det=log_det,
            log_trace=sigma + math.log(trace),
            epsilon=epsilon,
            log_ratio=log_norm - 3 * log_min,
        ))

    norms = [row.log_norm for row in rows]
    dets = [row.log_det for row in rows]
    mins = [row.log_det - row.log_norm for row in rows]
    trace_bound = all(row.log_trace >= math.log(2 * row.k) - 1e-12 for row in rows)
    epsilons = [row.epsilon for row in rows]
    return PkSequence(
        x=float(x),
        energy=c.generator.energy,
        rows=rows,
        positive_definite=positive_definite,
        monotone=_monotone(norms) and _monotone(dets) and _monotone(mins),
        trace_bound=trace_bound,
        epsilon_decreasing=all(b < a for a, b in zip(epsilons, epsilons[1:])),
        log_scaled=log_scaled,
    )


# ---------------------------------------------------------------------------
# Model sums X
# ---------------------------------------------------------------------------

def corner_magnitude(theta: float, r: int, t_hat: complex, cf: CFExpansion, s: int) -> float:
    """|t sin(pi s delta) / sin(pi delta)| with delta = 2 theta - r alpha"""
    delta = orbit_phases(2 * theta, [-r], cf)[0]
    denominator = math.sin(math.pi * delta)
    if abs(denominator) < 1e-15:
        return abs(t_hat) * s
    return abs(t_hat * math.sin(math.pi * s * delta) / denominator)


def model_X(theta: float, r: int, t_hat: complex, cf: CFExpansion, k: int, phase: float = 0.0) -> ModelXReport:
    """Norms of X = sum_{j<=k} T_{2j-1}^* T_{2j-1} for the single-mode upper triangular T"""
    if k < 1:
        raise ConfigError("k must be at least 1", key="k", value=k)
    generator = ModelTGenerator(theta=theta, r=r, t_hat=t_hat)
    xs = orbit_phases(phase, np.arange(2 * k - 1), cf)
    steps = generator_values(generator, xs, cf.alpha_float)

    T = np.eye(2, dtype=np.complex128)
    X = np.zeros((2, 2), dtype=np.complex128)
    corner_error = 0.0
    log_ks, log_norms = [], []
    for s in range(1, 2 * k):
        T = steps[s - 1] @ T
        exact = corner_magnitude(theta, r, t_hat, cf, s)
        corner_error = max(corner_error, abs(abs(T[0, 1]) - exact) / max(1.0, exact))
        if s % 2 == 1:
            X += T.conj().T @ T
            j = (s + 1) // 2
            _, _, top, _ = _hermitian_eigen(X)
            log_ks.append(math.log(j))
            log_norms.append(math.log(top))

    _, _, top, bottom = _hermitian_eigen(X)
    gap = float(shift_dist_grid(2 * theta, [r], cf)[0])
    weight = abs(t_hat) ** 2
    shape_a = k * (1 + weight * min(k ** 2, gap ** -2 if gap > 0 else math.inf))
    shape_b = k * (1 + weight * min(k ** 2, gap))
    half = len(log_ks) // 2
    if len(log_ks) - half >= 2:
        exponent = float(np.polyfit(log_ks[half:], log_norms[half:], 1)[0])
    else:
        exponent = float("nan")
    return ModelXReport(
        k=k,
        norm=top,
        inverse_norm=bottom,
        shape_a=shape_a,
        shape_b=shape_b,
        empirical_exponent=exponent,
        corner_error=corner_error,
    )
