# app/services/cocycles.py
"""Transfer products of SL(2, C) cocycles with log-scale renormalization"""

import math
from typing import Dict, List, Sequence, Tuple

import numpy as np

from app.core.errors import ConfigError, SingularConjugacy, StripExceeded
from app.core.logging import get_logger
from app.core.workers import parallel_map, chunked
from app.schemas.cocycles import (
    Cocycle,
    ConjugatedGenerator,
    FourierGenerator,
    FourierMatrix,
    LyapunovEstimate,
    Mat2C,
    ModelTGenerator,
    SchrodingerGenerator,
    StripGrowthReport,
    StripRow,
    TransferProduct,
)
from app.schemas.frequency import CFExpansion
from app.services.diophantine import orbit_phases
from app.services.operators import potential_values

logger = get_logger("cocycles")

SINGULAR_CONJUGACY_TOL = 1e-12


def schrodinger_cocycle(cf: CFExpansion, coupling: float, energy: float, potential) -> Cocycle:
    return Cocycle(
        frequency=cf,
        generator=SchrodingerGenerator(coupling=coupling, energy=energy, potential=potential),
    )


def generator_values(generator, xs: np.ndarray, alpha: float) -> np.ndarray:
    """A(x) for each phase; shape (len(xs), 2, 2)"""
    xs = np.asarray(xs, dtype=np.complex128)
    out = np.zeros(xs.shape + (2, 2), dtype=np.complex128)
    if isinstance(generator, SchrodingerGenerator):
        v = potential_values(generator.potential, xs if np.any(xs.imag) else xs.real)
        out[:, 0, 0] = generator.energy - generator.coupling * v
        out[:, 0, 1] = -1.0
        out[:, 1, 0] = 1.0
    elif isinstance(generator, FourierGenerator):
        out = generator.table.evaluate(xs)
    elif isinstance(generator, ModelTGenerator):
        rotation = np.exp(2j * np.pi * generator.theta)
        out[:, 0, 0] = rotation
        out[:, 1, 1] = 1 / rotation
        out[:, 0, 1] = generator.t_hat * np.exp(2j * np.pi * generator.r * xs)
    elif isinstance(generator, ConjugatedGenerator):
        inner = generator_values(generator.base, xs, alpha)
        right = generator.conjugacy.evaluate(xs)
        left = generator.conjugacy.evaluate(xs + alpha)
        det = left[:, 0, 0] * left[:, 1, 1] - left[:, 0, 1] * left[:, 1, 0]
        scale = np.max(np.abs(left), axis=(1, 2)) ** 2
        if np.any(np.abs(det) <= SINGULAR_CONJUGACY_TOL * scale):
            i = int(np.argmin(np.abs(det) / np.maximum(scale, 1e-300)))
            raise SingularConjugacy("conjugacy is not invertible", key="x", value=complex(xs[i]))
        out = np.linalg.solve(left, inner @ right)
    else:
        raise ConfigError("unknown generator", key="generator", value=type(generator).__name__)
    return out


def _strip_width(generator) -> float:
    if isinstance(generator, SchrodingerGenerator):
        return generator.potential.rho
    if isinstance(generator, ConjugatedGenerator):
        return _strip_width(generator.base)
    return math.inf


def _check_strip(c: Cocycle, imag) -> None:
    width = _strip_width(c.generator)
    reach = float(np.max(np.abs(imag))) if np.size(imag) else 0.0
    if reach >= width:
        raise StripExceeded("phase outside the generator strip", key="eta", value=reach)


class ProductState:
    """Batched e^{s} * entries products over a phase grid"""

    def __init__(self, size: int):
        self.entries = np.broadcast_to(np.eye(2, dtype=np.complex128), (size, 2, 2)).copy()
        self.log_scale = np.zeros(size)
        self.log_det = np.zeros(size, dtype=np.complex128)
        self.renormalizations = 0

    def push(self, step: np.ndarray) -> None:
        det = step[:, 0, 0] * step[:, 1, 1] - step[:, 0, 1] * step[:, 1, 0]
        self.log_det += np.log(det)
        self.entries = step @ self.entries
        scale = np.max(np.abs(self.entries), axis=(1, 2))
        scale = np.where(scale > 0, scale, 1.0)
        self.entries /= scale[:, None, None]
        self.log_scale += np.log(scale)
        self.renormalizations += 1

    def log_norms(self) -> np.ndarray:
        singular = np.linalg.svd(self.entries, compute_uv=False)[:, 0]
        return self.log_scale + np.log(singular)


def _run_products(c: Cocycle, xs: np.ndarray, checkpoints: Sequence[int]) -> Tuple[ProductState, Dict[int, np.ndarray]]:
    """Multiply A(x + j alpha) for j < max(checkpoints); log-norms recorded at each checkpoint"""
    xs = np.asarray(xs, dtype=np.complex128)
    _check_strip(c, xs.imag)
    last = max(checkpoints) if checkpoints else 0
    shifts = orbit_phases(0.0, np.arange(last), c.frequency)
    alpha = c.frequency.alpha_float
    state = ProductState(xs.size)
    norms: Dict[int, np.ndarray] = {}
    if 0 in checkpoints:
        norms[0] = state.log_norms()
    wanted = set(checkpoints)
    for j in range(last):
        state.push(generator_values(c.generator, xs + shifts[j], alpha))
        if j + 1 in wanted:
            norms[j + 1] = state.log_norms()
    return state, norms


def transfer(c: Cocycle, x: complex, n: int) -> TransferProduct:
    """A_n(x) = A(x + (n-1) alpha) ... A(x) with per-step renormalization"""
    if n < 0:
        raise ConfigError("n must be non-negative", key="n", value=n)
    state, _ = _run_products(c, np.array([complex(x)]), [n])
    result = Mat2C(
        entries=state.entries[0].copy(),
        log_scale=float(state.log_scale[0]),
        log_det=complex(state.log_det[0]),
    )
    return TransferProduct(n=n, phase=complex(x), result=result, renormalizations=state.renormalizations)


def grid_log_norms(c: Cocycle, xs: np.ndarray, checkpoints: Sequence[int], threads: int | None = None) -> Dict[int, np.ndarray]:
    """ln ||A_n(x)|| over a phase grid at each checkpoint, chunked across workers"""
    parts = parallel_map(lambda chunk: _run_products(c, chunk, checkpoints)[1], chunked(xs, threads), threads)
    return {n: np.concatenate([part[n] for part in parts]) for n in checkpoints}


def _mean_and_error(values: np.ndarray, n: int) -> Tuple[float, float]:
    mean = float(np.mean(values)) / n
    if values.size < 2:
        return mean, 0.0
    return mean, float(np.std(values, ddof=1) / math.sqrt(values.size)) / n


def lyapunov_finite(c: Cocycle, n: int, grid: int, threads: int | None = None) -> LyapunovEstimate:
    """L_n = (1/n) mean of ln ||A_n(x)|| over grid equally spaced real phases"""
    if n < 1:
        raise ConfigError("n must be at least 1", key="n", value=n)
    if grid < 1:
        raise ConfigError("phase grid must be at least 1", key="G", value=grid)
    xs = np.arange(grid) / grid
    norms = grid_log_norms(c, xs, [n, 2 * n], threads)
    value, error = _mean_and_error(norms[n], n)
    doubled, doubled_error = _mean_and_error(norms[2 * n], 2 * n)
    slack = 3 * math.hypot(error, doubled_error) + 1e-12 * max(1.0, abs(value))
    return LyapunovEstimate(
        n=n,
        grid=grid,
        value=value,
        standard_error=error,
        doubled_value=doubled,
        doubled_error=doubled_error,
        subadditive=doubled <= value + slack,
    )


def lyapunov_orbit(c: Cocycle, x: float, n: int) -> float:
    """(1/n) ln ||A_n(x)|| along a single orbit"""
    if n < 1:
        raise ConfigError("n must be at least 1", key="n", value=n)
    return transfer(c, x, n).result.log_norm / n


def strip_growth_scan(c: Cocycle, eta: float, ns: Sequence[int], grid: int = 256,
                      strips: int = 5, threads: int | None = None) -> StripGrowthReport:
    """(1/n) sup over x of ln ||A_n(x + i eps)|| for eps in [0, eta] and n in ns"""
    if eta <= 0:
        raise ConfigError("eta must be positive", key="eta", value=eta)
    ns = sorted(set(int(n) for n in ns))
    if not ns or ns[0] < 1:
        raise ConfigError("n list must hold positive integers", key="n", value=ns)
    _check_strip(c, np.array([eta]))

    rows: List[StripRow] = []
    monotone = True
    final_rate = -math.inf
    for eps in np.linspace(0.0, eta, strips):
        xs = np.arange(grid) / grid + 1j * eps
        norms = grid_log_norms(c, xs, ns, threads)
        rates = [float(np.max(norms[n])) / n for n in ns]
        rows.extend(StripRow(epsilon=float(eps), n=n, rate=rate) for n, rate in zip(ns, rates))
        monotone = monotone and all(b <= a for a, b in zip(rates, rates[1:]))
        final_rate = max(final_rate, rates[-1])
        logger.debug("Strip row done", eps=float(eps), final=rates[-1])
    return StripGrowthReport(eta=eta, grid=grid, rows=rows, final_rate=final_rate, monotone=monotone)


def conjugate(c: Cocycle, B: FourierMatrix) -> Cocycle:
    """The cocycle x -> B(x + alpha)^{-1} A(x) B(x); invertibility is checked on a sample grid"""
    generator = ConjugatedGenerator(base=c.generator, conjugacy=B)
    generator_values(generator, np.linspace(0.0, 1.0, 64, endpoint=False), c.frequency.alpha_float)
    return Cocycle(frequency=c.frequency, generator=generator)
