# app/services/operators.py
"""Truncated operators, Green functions and determinant polynomials"""

import math
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import get_lapack_funcs, lu_factor, lu_solve, toeplitz
from scipy.optimize import minimize_scalar

from app.core.config import settings
from app.core.constants import DEFAULT_UNIFORMITY_GRID, DEGENERATE_COSINE_TOL
from app.core.errors import (
    ConfigError,
    Degenerate,
    DepthInsufficient,
    LambdaZero,
    SelectionViolated,
    SingularBlock,
    StripExceeded,
    WindowTooSmall,
)
from app.core.logging import get_logger
from app.schemas.frequency import CFExpansion
from app.schemas.operators import (
    Determinant,
    GreenIdentity,
    GreenValue,
    MatrixBlock,
    Membership,
    OperatorConfig,
    RegularityReport,
    ScaleSelection,
    UniformityReport,
    Window,
)
from app.schemas.potential import Potential
from app.services.diophantine import orbit_phases, select_scale

logger = get_logger("operators")


# ---------------------------------------------------------------------------
# Potentials
# ---------------------------------------------------------------------------

def potential_values(p: Potential, xs) -> np.ndarray:
    """v at an array of phases; real input gives an exactly real result"""
    xs = np.asarray(xs)
    K = p.half_width
    if np.iscomplexobj(xs):
        if np.any(np.abs(xs.imag) >= p.rho):
            raise StripExceeded("phase outside the analyticity strip", key="x", value=float(np.abs(xs.imag).max()))
        ks = np.arange(-K, K + 1)
        return np.exp(2j * np.pi * np.multiply.outer(xs, ks)) @ p.coefficients

    values = np.full(xs.shape, p.coefficients[K].real)
    for k in range(1, K + 1):
        c = p.coefficients[K + k]
        angle = 2 * np.pi * k * xs
        values = values + 2 * (c.real * np.cos(angle) - c.imag * np.sin(angle))
    return values


def potential_eval(p: Potential, x: complex) -> complex:
    """v(x) = sum_k v_k e^{2 pi i k x} for |Im x| < rho"""
    x = complex(x)
    if abs(x.imag) >= p.rho:
        raise StripExceeded("phase outside the analyticity strip", key="x", value=x)
    if x.imag == 0:
        return complex(potential_values(p, np.array([x.real]))[0])
    return complex(potential_values(p, np.array([x]))[0])


def tail_weight(p: Potential, k: int) -> float:
    """a_k = sum over |j| >= |k| with jk >= 0 of |j v_j|; a_0 sums both sides"""
    K = p.half_width
    js = np.arange(-K, K + 1)
    weights = np.abs(js * p.coefficients)
    if k > 0:
        mask = js >= k
    elif k < 0:
        mask = js <= k
    else:
        mask = np.ones_like(js, dtype=bool)
    return float(weights[mask].sum())


# ---------------------------------------------------------------------------
# Truncations
# ---------------------------------------------------------------------------

def _check_window(cfg: OperatorConfig, w: Window) -> None:
    reach = max(abs(w.start), abs(w.end))
    if reach >= cfg.frequency.q_depth:
        raise DepthInsufficient("window exceeds the resolved frequency scale", key="window", value=reach)
    if w.size > settings.max_truncation:
        raise ConfigError(f"window larger than {settings.max_truncation}", key="N", value=w.size)


def truncate(cfg: OperatorConfig, w: Window, kind: str = "schrodinger") -> MatrixBlock:
    """Dirichlet restriction of H, of the dual operator, or of the dual divided by lambda"""
    _check_window(cfg, w)
    ns = w.indices()
    phase = cfg.phase
    if kind == "schrodinger":
        if phase.imag == 0:
            diagonal = cfg.coupling * potential_values(cfg.potential, orbit_phases(phase.real, ns, cfg.frequency))
            matrix = np.diag(diagonal)
        else:
            xs = orbit_phases(phase.real, ns, cfg.frequency) + 1j * phase.imag
            matrix = np.diag(cfg.coupling * potential_values(cfg.potential, xs))
        off = np.ones(w.size - 1)
        matrix = matrix + np.diag(off, 1) + np.diag(off, -1)
    elif kind in ("dual", "dual-scaled"):
        if phase.imag != 0:
            raise StripExceeded("dual phase must be real", key="theta", value=phase)
        if kind == "dual-scaled" and cfg.coupling == 0:
            raise LambdaZero("dual-scaled block needs lambda != 0", key="lambda", value=0)
        column = np.zeros(w.size, dtype=np.complex128)
        reach = min(w.size - 1, cfg.potential.half_width)
        for k in range(reach + 1):
            column[k] = cfg.coupling * cfg.potential.coefficient(k)
        # Hermitian Toeplitz band from one triangle; the row is conj(column)
        matrix = toeplitz(column)
        cosines = 2 * np.cos(2 * np.pi * orbit_phases(phase.real, ns, cfg.frequency))
        matrix[np.diag_indices(w.size)] += cosines
        if kind == "dual-scaled":
            matrix = matrix / cfg.coupling
    else:
        raise ConfigError(f"unknown block kind '{kind}'", key="kind", value=kind)

    return MatrixBlock(
        matrix=matrix,
        kind=kind,
        config=cfg,
        window=w,
        truncation_error=cfg.potential.truncation_error,
    )


# ---------------------------------------------------------------------------
# Green functions
# ---------------------------------------------------------------------------

def _factor(matrix: np.ndarray, E: complex):
    shifted = np.asarray(matrix, dtype=np.complex128) - E * np.eye(matrix.shape[0])
    anorm = np.linalg.norm(shifted, 1)
    lu, piv = lu_factor(shifted, check_finite=False)
    if anorm == 0:
        rcond = 0.0
    else:
        gecon, = get_lapack_funcs(("gecon",), (lu,))
        rcond, _ = gecon(lu, anorm, norm="1")
    if not rcond > settings.singular_rcond:
        raise SingularBlock("energy within tolerance of the block spectrum", key="E", value=E)
    return (lu, piv), float(rcond)


def resolvent(b: MatrixBlock, E: complex) -> Tuple[np.ndarray, float]:
    """(block - E)^{-1} and its reciprocal condition estimate"""
    factors, rcond = _factor(b.matrix, E)
    return lu_solve(factors, np.eye(b.dimension, dtype=np.complex128)), rcond


def green(b: MatrixBlock, E: complex, x: int, y: int) -> GreenValue:
    """G_I(x, y) = ((block - E)^{-1})_{x,y} with window coordinates x, y"""
    for key, value in (("x", x), ("y", y)):
        if not b.window.contains(value):
            raise WindowTooSmall("site outside the block window", key=key, value=value)
    factors, rcond = _factor(b.matrix, E)
    rhs = np.zeros(b.dimension, dtype=np.complex128)
    rhs[b.window.position(y)] = 1.0
    column = lu_solve(factors, rhs)
    return GreenValue(value=complex(column[b.window.position(x)]), rcond=rcond)


def green_identity(cfg_dual: OperatorConfig, phi: np.ndarray, data_window: Window,
                   E: float, I: Window, x: int) -> GreenIdentity:
    """Rebuild phi(x) from its values outside I through G_I of the scaled dual operator"""
    phi = np.asarray(phi, dtype=np.complex128)
    if phi.shape[0] != data_window.size:
        raise ConfigError("vector length does not match its window", key="phi", value=phi.shape[0])
    if not (data_window.start <= I.start and I.end <= data_window.end and I.start <= x <= I.end):
        raise WindowTooSmall("window I must lie inside the data window and contain x", key="I", value=(I.start, I.end))

    full = truncate(cfg_dual, data_window, "dual-scaled").matrix
    inside = np.arange(data_window.position(I.start), data_window.position(I.end) + 1)
    outside = np.setdiff1d(np.arange(data_window.size), inside)
    factors, _ = _factor(full[np.ix_(inside, inside)], E)
    boundary = full[np.ix_(inside, outside)] @ phi[outside]
    solved = lu_solve(factors, boundary)
    reconstructed = -complex(solved[x - I.start])
    actual = complex(phi[data_window.position(x)])
    return GreenIdentity(
        x=x,
        window=I,
        reconstructed=reconstructed,
        actual=actual,
        residual=abs(reconstructed - actual),
    )


def classify_regular(cfg_dual: OperatorConfig, phi: np.ndarray, data_window: Window,
                     x: int, m: float, N: int, E: float) -> RegularityReport:
    """(m, N)-regularity of site x for the scaled dual operator at energy E.

    Candidates are I = [x1 + 1, x1 + N] with x2 = x1 + N + 1 and x strictly
    between x1 and x2. Candidates whose [x1, x2] reaches the boundary of the
    data window are excluded and counted.
    """
    if N < 1 or m <= 0:
        raise ConfigError("classification needs N >= 1 and m > 0", key="N", value=N)
    if not data_window.contains(x):
        raise WindowTooSmall("site outside the data window", key="x", value=x)

    p = cfg_dual.potential
    log_threshold = -m * N
    best: Optional[Tuple[float, Window]] = None
    excluded, candidates = 0, 0
    singular = []
    for x1 in range(x - N, x):
        x2 = x1 + N + 1
        if not (data_window.start < x1 and x2 < data_window.end):
            excluded += 1
            continue
        candidates += 1
        I = Window(start=x1 + 1, end=x2 - 1)
        block = truncate(cfg_dual, I, "dual-scaled")
        try:
            factors, _ = _factor(block.matrix, E)
        except SingularBlock:
            singular.append(I)
            continue
        # row x of G_I via the transposed system
        rhs = np.zeros(I.size, dtype=np.complex128)
        rhs[I.position(x)] = 1.0
        row = lu_solve(factors, rhs, trans=1)
        ys = I.indices()
        weights = np.array([tail_weight(p, y - x1) + tail_weight(p, y - x2) for y in ys])
        defect = float(np.sum(np.abs(row) * weights))
        if best is None or defect < best[0]:
            best = (defect, I)

    if candidates == 0:
        raise WindowTooSmall("no admissible candidate window inside the data window", key="N", value=N)
    if best is None:
        logger.debug("Every candidate window singular", x=x, N=N)
        return RegularityReport(
            regular=False, window=None, defect=math.inf, log_defect=math.inf,
            log_threshold=log_threshold, candidates=candidates,
            excluded_windows=excluded, singular_windows=singular,
        )

    defect, window = best
    log_defect = math.log(defect) if defect > 0 else -math.inf
    reconstruction = green_identity(cfg_dual, phi, data_window, E, window, x)
    return RegularityReport(
        regular=log_defect < log_threshold,
        window=window,
        defect=defect,
        log_defect=log_defect,
        log_threshold=log_threshold,
        candidates=candidates,
        excluded_windows=excluded,
        singular_windows=singular,
        reconstruction=reconstruction,
    )


# ---------------------------------------------------------------------------
# Determinants
# ---------------------------------------------------------------------------

def det_PN(cfg_dual: OperatorConfig, theta: float, E: float, N: int) -> Determinant:
    """P_N(theta) = det(scaled dual - E) on [0, N-1] in log-magnitude and phase form"""
    if N < 1:
        raise ConfigError("N must be at least 1", key="N", value=N)
    if cfg_dual.coupling == 0:
        raise LambdaZero("P_N needs lambda != 0", key="lambda", value=0)
    block = truncate(cfg_dual.with_phase(theta), Window(start=0, end=N - 1), "dual-scaled")
    sign, log_abs = np.linalg.slogdet(block.matrix - E * np.eye(N))
    return Determinant(log_abs=float(log_abs), phase=complex(sign))


def membership_A(cfg_dual: OperatorConfig, N: int, r: float, theta: float, E: float) -> Membership:
    """theta in A_{N,r}: log|P_N(theta - (N-1) alpha / 2)| <= (N + 1) r"""
    shifted = theta - 0.5 * (N - 1) * cfg_dual.alpha
    det = det_PN(cfg_dual, shifted, E, N)
    log_bound = (N + 1) * r
    return Membership(member=det.log_abs <= log_bound, log_abs=det.log_abs, log_bound=log_bound)


# ---------------------------------------------------------------------------
# xi-uniformity
# ---------------------------------------------------------------------------

def _lagrange_log_max(xs: np.ndarray, cosines: np.ndarray, log_denominators: np.ndarray) -> np.ndarray:
    """max_i ln prod_{j != i} |x - c_j| / |c_i - c_j| at each x"""
    with np.errstate(divide="ignore", invalid="ignore"):
        log_dist = np.log(np.abs(np.subtract.outer(cosines, xs)))
        total = log_dist.sum(axis=0)
        logs = total[None, :] - log_dist - log_denominators[:, None]
    logs = np.where(np.subtract.outer(cosines, xs) == 0, 0.0, logs)
    return logs.max(axis=0)


def uniformity_xi(thetas: Sequence[float], M: int = DEFAULT_UNIFORMITY_GRID) -> UniformityReport:
    """Smallest xi with {theta_1..theta_{k+1}} xi-uniform, from a grid plus golden refinement"""
    thetas = np.asarray(thetas, dtype=np.float64)
    if thetas.size < 2:
        raise ConfigError("uniformity needs at least two phases", key="thetas", value=thetas.size)
    if M < 3:
        raise ConfigError("grid must have at least three points", key="M", value=M)
    cosines = np.cos(2 * np.pi * thetas)
    ordered = np.sort(cosines)
    gaps = np.diff(ordered)
    if np.any(gaps < DEGENERATE_COSINE_TOL):
        i = int(np.argmin(gaps))
        raise Degenerate("repeated cosine values", key="cos", value=float(ordered[i]))

    diffs = np.abs(np.subtract.outer(cosines, cosines))
    np.fill_diagonal(diffs, 1.0)
    log_denominators = np.log(diffs).sum(axis=1)

    grid = np.linspace(-1.0, 1.0, M)
    values = np.concatenate([
        _lagrange_log_max(chunk, cosines, log_denominators)
        for chunk in np.array_split(grid, max(1, (thetas.size * M) // 4_000_000 + 1))
    ])
    i = int(np.argmax(values))
    best_x, best = float(grid[i]), float(values[i])

    if 0 < i < M - 1:
        def objective(x):
            return -float(_lagrange_log_max(np.array([x]), cosines, log_denominators)[0])
        try:
            refined = minimize_scalar(objective, bracket=(grid[i - 1], grid[i], grid[i + 1]), method="golden")
            if -1.0 <= refined.x <= 1.0 and -refined.fun > best:
                best_x, best = float(refined.x), float(-refined.fun)
        except ValueError:
            pass

    k = thetas.size - 1
    return UniformityReport(xi_hat=best / k, argmax=best_x, count=thetas.size)


def resonant_intervals(k: int, n_j: int, q_n: int, s: int) -> Tuple[Window, Window]:
    """The two windows around 0 and k whose phases test uniformity; together 6 s q_n sites"""
    if s < 1:
        raise SelectionViolated("s must be at least 1", key="s", value=s)
    if 8 * s * q_n > k:
        raise SelectionViolated("s q_n must not exceed k/8", key="s", value=s)
    span = 2 * s * q_n
    if n_j < 0:
        first = Window(start=-span + 1, end=0)
    else:
        first = Window(start=0, end=span - 1)
    second = Window(start=k - span + 1, end=k + span)
    return first, second


def scale_selection(k: int, cf: CFExpansion) -> ScaleSelection:
    n, q_n, s = select_scale(k, cf)
    return ScaleSelection(n=n, q_n=q_n, s=s)


def interval_uniformity(theta: float, k: int, n_j: int, cf: CFExpansion,
                        M: int = DEFAULT_UNIFORMITY_GRID) -> UniformityReport:
    """xi-uniformity of theta + j alpha over the resonant windows of k"""
    selection = scale_selection(k, cf)
    first, second = resonant_intervals(k, n_j, selection.q_n, selection.s)
    js = np.concatenate((first.indices(), second.indices()))
    return uniformity_xi(orbit_phases(theta, js, cf), M)
