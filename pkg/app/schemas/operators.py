# app/schemas/operators.py
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.schemas.frequency import CFExpansion
from app.schemas.potential import Potential

BlockKind = Literal["schrodinger", "dual", "dual-scaled"]


class Window(BaseModel):
    """Integer interval [start, end], both ends included"""
    model_config = ConfigDict(frozen=True)

    start: int
    end: int

    @model_validator(mode="after")
    def check_order(self):
        if self.start > self.end:
            raise ValueError("window start must not exceed its end")
        return self

    @classmethod
    def centered(cls, half_width: int) -> "Window":
        return cls(start=-half_width, end=half_width)

    @property
    def size(self) -> int:
        return self.end - self.start + 1

    def indices(self) -> np.ndarray:
        return np.arange(self.start, self.end + 1)

    def contains(self, n: int) -> bool:
        return self.start <= n <= self.end

    def position(self, n: int) -> int:
        return n - self.start


class OperatorConfig(BaseModel):
    """Coupling, frequency, phase and potential of H (phase x) or of its dual (phase theta)"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    coupling: float
    frequency: CFExpansion
    phase: complex = 0j
    potential: Potential

    @property
    def alpha(self) -> float:
        return self.frequency.alpha_float

    def with_phase(self, phase) -> "OperatorConfig":
        return self.model_copy(update={"phase": complex(phase)})

    def with_coupling(self, coupling: float) -> "OperatorConfig":
        return self.model_copy(update={"coupling": float(coupling)})


class MatrixBlock(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    matrix: np.ndarray
    kind: BlockKind
    config: OperatorConfig
    window: Window
    truncation_error: float = 0.0

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def header(self) -> dict:
        return {
            "kind": self.kind,
            "window": [self.window.start, self.window.end],
            "dimension": self.dimension,
            "coupling": self.config.coupling,
            "phase": [self.config.phase.real, self.config.phase.imag],
            "potential": self.config.potential.name,
            "truncation_error": self.truncation_error,
            "dtype": "complex128",
            "order": "column-major",
        }


class GreenValue(BaseModel):
    value: complex
    rcond: float = Field(..., description="Reciprocal 1-norm condition estimate of the shifted block")


class GreenIdentity(BaseModel):
    """phi(x) rebuilt from boundary data: -sum_{y in I, k not in I} G_I(x, y) H_{y,k} phi(k)"""
    x: int
    window: Window
    reconstructed: complex
    actual: complex
    residual: float


class RegularityReport(BaseModel):
    regular: bool
    window: Optional[Window] = Field(None, description="Minimizing candidate window")
    defect: float
    log_defect: float
    log_threshold: float = Field(..., description="-m N")
    candidates: int
    excluded_windows: int = Field(0, description="Candidates touching the data boundary")
    singular_windows: List[Window] = Field(default_factory=list)
    reconstruction: Optional[GreenIdentity] = None


class Determinant(BaseModel):
    log_abs: float
    phase: complex


class Membership(BaseModel):
    member: bool
    log_abs: float
    log_bound: float


class UniformityReport(BaseModel):
    xi_hat: float
    argmax: float = Field(..., description="Point in [-1, 1] attaining the maximal Lagrange ratio")
    count: int


class ScaleSelection(BaseModel):
    n: int
    q_n: int
    s: int


class RegionFit(BaseModel):
    region: Tuple[int, int] = Field(..., description="Resonance gap (lower, upper) in |k|")
    sites: int
    fitted_sites: int = Field(..., description="Sites whose amplitude clears the floor")
    fitted: bool
    decay_rate: Optional[float] = None
    intercept: Optional[float] = None
    violations: int = 0
    fixed_rate_constant: Optional[float] = Field(None, description="ln C for the best fit C e^{-epsilon1 |k|}")
    fixed_rate_violations: int = 0


class EigenvectorDecay(BaseModel):
    index: int
    energy: float
    anchor: int
    first_gap_empty: bool = False
    regions: List[RegionFit]
    decay_rate: Optional[float] = Field(None, description="Rate on the nearest fitted gap; None when no gap is fitted")

    @property
    def fitted(self) -> bool:
        return self.decay_rate is not None


class LocalizationReport(BaseModel):
    theta: float
    half_width: int
    epsilon0: float
    epsilon1: float
    vectors: List[EigenvectorDecay]
    skipped_anchors: int
    empty_profiles: int
    unfitted: int = Field(..., description="Profiled eigenvectors with no gap holding two sites above the floor")
    regions_fitted: int
    median_rate: float = Field(..., description="Median nearest-gap rate over fitted eigenvectors")
    violation_fraction: float
