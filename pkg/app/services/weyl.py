# app/services/weyl.py
"""Weyl m-function, Herglotz transforms and the psi bound"""

import math
from typing import List

import numpy as np
from scipy.optimize import minimize_scalar

from app.core.config import settings
from app.core.constants import PSI_GRID_POINTS, WEYL_DEFAULT_TOL, WEYL_INITIAL_DEPTH
from app.core.errors import BoundaryInput, ConfigError, NoConvergence
from app.core.logging import ExperimentLogger, get_logger
from app.schemas.operators import OperatorConfig
from app.schemas.spectral import HerglotzSample, MeasureApprox, PkEpsilonRow, PkEpsilonTable, WeylValue
from app.services.cocycles import schrodinger_cocycle
from app.services.diophantine import orbit_phases
from app.services.operators import potential_values
from app.services.reducibility import pk_sequence

logger = get_logger("weyl")
experiment_logger = ExperimentLogger()


def free_m_plus(z) -> np.ndarray:
    """Root of g^2 + z g + 1 = 0 with Im g > 0"""
    z = np.asarray(z, dtype=np.complex128)
    root = np.sqrt(z * z - 4)
    g = (-z + root) / 2
    return np.where(g.imag > 0, g, (-z - root) / 2)


def _check_upper(z: np.ndarray, key: str = "z") -> None:
    if np.any(z.imag <= 0):
        bad = complex(z[np.argmin(z.imag)])
        raise BoundaryInput("Im z must be positive", key=key, value=bad)


def _recursion(potential: np.ndarray, z: np.ndarray) -> np.ndarray:
    """g_1 from g_n = 1 / (V_n - z - g_{n+1}), seeded with the free half-line value"""
    g = free_m_plus(z)
    for v in potential[::-1]:
        g = 1 / (v - z - g)
    return g


def weyl_m_plus(cfg: OperatorConfig, z, tol: float = WEYL_DEFAULT_TOL) -> WeylValue:
    """m+(z) = G_+(1, 1) of H on {1, 2, ...}, depth doubled until successive values agree"""
    z = np.atleast_1d(np.asarray(z, dtype=np.complex128))
    _check_upper(z)
    x = cfg.phase.real
    depth = WEYL_INITIAL_DEPTH
    previous = None
    while depth <= settings.weyl_depth_cap:
        sites = np.arange(1, depth + 1)
        potential = cfg.coupling * potential_values(cfg.potential, orbit_phases(x, sites, cfg.frequency))
        current = _recursion(potential, z)
        if previous is not None and np.max(np.abs(current - previous)) < tol * max(1.0, float(np.max(np.abs(current)))):
            return WeylValue(z=z, values=current, depth=depth)
        previous = current
        depth *= 2
        experiment_logger.depth_escalated("weyl_m_plus", depth)
    raise NoConvergence("m+ recursion did not settle within the depth cap", key="z", value=complex(z[0]))


def herglotz_M(m: MeasureApprox, z) -> complex:
    """M(z) = sum_i w_i / (E_i - z)"""
    z = complex(z)
    if z.imag <= 0:
        raise BoundaryInput("Im z must be positive", key="z", value=z)
    return complex(np.sum(m.weights / (m.energies - z)))


def psi(z) -> float:
    """sup over rotations of |R_gamma . z| = (1 + u) / (1 - u), u = |z - i| / |z + i|"""
    z = complex(z)
    if z.imag <= 0:
        raise BoundaryInput("psi needs Im z > 0", key="z", value=z)
    u = abs(z - 1j) / abs(z + 1j)
    return (1 + u) / (1 - u)


def rotate(z: complex, gamma) -> np.ndarray:
    c, s = np.cos(gamma), np.sin(gamma)
    return (c * z - s) / (s * z + c)


def psi_grid(z, points: int = PSI_GRID_POINTS) -> float:
    """psi by maximizing |R_gamma . z| over a gamma grid with golden refinement"""
    z = complex(z)
    if z.imag <= 0:
        raise BoundaryInput("psi needs Im z > 0", key="z", value=z)
    gammas = np.linspace(0.0, math.pi, points, endpoint=False)
    values = np.abs(rotate(z, gammas))
    i = int(np.argmax(values))
    best = float(values[i])
    step = math.pi / points
    try:
        refined = minimize_scalar(
            lambda g: -float(np.abs(rotate(z, g))),
            bracket=(gammas[i] - step, gammas[i], gammas[i] + step),
            method="golden",
        )
        best = max(best, -float(refined.fun))
    except ValueError:
        pass
    return best


def herglotz_sample(m: MeasureApprox, cfg: OperatorConfig, z: complex) -> HerglotzSample:
    weyl = weyl_m_plus(cfg, z)
    m_plus = complex(weyl.values[0])
    return HerglotzSample(z=complex(z), M=herglotz_M(m, z), m_plus=m_plus, psi=psi(m_plus), depth=weyl.depth)


def pk_epsilon_pipeline(cfg: OperatorConfig, x: float, E: float, k_max: int) -> PkEpsilonTable:
    """For each k: eps_k, psi(m+(E + i eps_k)), 2 eps_k ||P_(k)|| and their ratio"""
    if k_max < 1:
        raise ConfigError("k_max must be at least 1", key="k_max", value=k_max)
    sequence = pk_sequence(schrodinger_cocycle(cfg.frequency, cfg.coupling, E, cfg.potential), x, k_max)
    epsilons = np.array([row.epsilon for row in sequence.rows])
    weyl = weyl_m_plus(cfg.with_phase(x), E + 1j * epsilons)

    rows: List[PkEpsilonRow] = []
    for i, row in enumerate(sequence.rows):
        value = psi(weyl.values[i])
        scaled = 2 * math.exp(math.log(row.epsilon) + row.log_norm)
        rows.append(PkEpsilonRow(
            k=row.k,
            epsilon=row.epsilon,
            psi=value,
            scaled_norm=scaled,
            ratio=value / scaled,
            normalized_psi=value * math.sqrt(row.epsilon),
            epsilon_ratio=row.epsilon / sequence.rows[i - 1].epsilon if i else None,
        ))
    ratios = [row.ratio for row in rows]
    consecutive = [row.epsilon_ratio for row in rows if row.epsilon_ratio is not None]
    return PkEpsilonTable(
        rows=rows,
        ratio_min=min(ratios),
        ratio_max=max(ratios),
        normalized_psi_max=max(row.normalized_psi for row in rows),
        epsilon_ratio_min=min(consecutive) if consecutive else None,
    )
