# app/schemas/spectral.py
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class MeasureApprox(BaseModel):
    """Atoms (E_i, w_i) of a Dirichlet truncation on [-N, N], sorted by energy"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    half_width: int
    vectors: List[Dict[int, complex]] = Field(..., description="Finitely supported f; the measure sums over them")
    energies: np.ndarray
    weights: np.ndarray
    total_mass: float
    phase: float
    resolution_floor: float
    truncation_error: float = 0.0

    def cumulative(self) -> np.ndarray:
        return np.concatenate(([0.0], np.cumsum(self.weights)))


class IntervalMass(BaseModel):
    value: float
    below_resolution: bool
    floor: float


class WeylValue(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    z: np.ndarray
    values: np.ndarray
    depth: int = Field(..., description="Recursion depth at which successive values agreed")


class HerglotzSample(BaseModel):
    z: complex
    M: complex
    m_plus: complex
    psi: float
    depth: int


class PkEpsilonRow(BaseModel):
    k: int
    epsilon: float
    psi: float
    scaled_norm: float = Field(..., description="2 eps_k ||P_(k)||")
    ratio: float = Field(..., description="psi / (2 eps_k ||P_(k)||)")
    normalized_psi: float = Field(..., description="psi * eps_k^(1/2)")
    epsilon_ratio: Optional[float] = Field(None, description="eps_k / eps_{k-1}")


class PkEpsilonTable(BaseModel):
    rows: List[PkEpsilonRow]
    ratio_min: float
    ratio_max: float
    normalized_psi_max: float
    epsilon_ratio_min: Optional[float] = None


class HolderRow(BaseModel):
    energy: float
    epsilon: float
    mass: float
    ratio: float
    below_resolution: bool


class EnergyExponent(BaseModel):
    energy: float
    exponent: Optional[float] = None
    points: int


class HolderReport(BaseModel):
    rows: List[HolderRow]
    global_sup: float
    decade_sups: Dict[int, float] = Field(..., description="sup of the ratio per floor(log10 eps)")
    exponents: List[EnergyExponent]
    filtered: int
    floor: float


class GapRow(BaseModel):
    lower: float
    upper: float
    dual_lower: float
    dual_upper: float
    mismatch: float


class DualityReport(BaseModel):
    half_width: int
    phases: int
    distance: float = Field(..., description="Hausdorff distance of the two spectra")
    gaps: List[GapRow]
    edge_states: int = Field(..., description="Eigenvectors dropped for sitting on the window edge")


class ThoulessReport(BaseModel):
    energy: float
    half_width: int
    n_lyapunov: int
    lyapunov: float
    log_potential: float
    residual: float
    nearest_atom: float


class CovarianceReport(BaseModel):
    k: int
    half_width: int
    stieltjes_difference: float
    distribution_difference: float


class SeminormRow(BaseModel):
    lower: float
    upper: float
    combined: float = Field(..., description="mu^{f+g}(J)^(1/2)")
    bound: float = Field(..., description="mu^f(J)^(1/2) + mu^g(J)^(1/2)")
    holds: bool
