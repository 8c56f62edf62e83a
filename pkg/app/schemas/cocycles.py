# app/schemas/cocycles.py
from typing import Annotated, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.schemas.frequency import CFExpansion
from app.schemas.operators import Window
from app.schemas.potential import Potential

DET_TOLERANCE = 1e-10


def _fourier_basis(xs: np.ndarray, half_width: int) -> np.ndarray:
    ks = np.arange(-half_width, half_width + 1)
    return np.exp(2j * np.pi * np.multiply.outer(np.asarray(xs, dtype=np.complex128), ks))


class FourierTable(BaseModel):
    """Trigonometric polynomial sum_{|k| <= K} c_k e^{2 pi i k x}; coefficients[j] = c_{j-K}"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    coefficients: np.ndarray

    @model_validator(mode="after")
    def check_shape(self):
        table = np.asarray(self.coefficients, dtype=np.complex128)
        if table.ndim != 1 or table.size % 2 == 0:
            raise ValueError("Fourier table must be 1-d with odd length")
        object.__setattr__(self, "coefficients", table)
        return self

    @property
    def half_width(self) -> int:
        return (len(self.coefficients) - 1) // 2

    def coefficient(self, k: int) -> complex:
        if abs(k) > self.half_width:
            return 0j
        return complex(self.coefficients[k + self.half_width])

    def evaluate(self, xs) -> np.ndarray:
        return _fourier_basis(xs, self.half_width) @ self.coefficients

    @classmethod
    def from_modes(cls, modes: Dict[int, complex], half_width: Optional[int] = None) -> "FourierTable":
        K = max([abs(k) for k in modes] + [0]) if half_width is None else half_width
        table = np.zeros(2 * K + 1, dtype=np.complex128)
        for k, value in modes.items():
            table[k + K] = value
        return cls(coefficients=table)

    @classmethod
    def zeros(cls, half_width: int) -> "FourierTable":
        return cls(coefficients=np.zeros(2 * half_width + 1, dtype=np.complex128))


class FourierMatrix(BaseModel):
    """2x2 matrix-valued trigonometric polynomial; coefficients has shape (2, 2, 2K+1)"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    coefficients: np.ndarray

    @model_validator(mode="after")
    def check_shape(self):
        table = np.asarray(self.coefficients, dtype=np.complex128)
        if table.ndim != 3 or table.shape[:2] != (2, 2) or table.shape[2] % 2 == 0:
            raise ValueError("Fourier matrix must have shape (2, 2, 2K+1)")
        object.__setattr__(self, "coefficients", table)
        return self

    @property
    def half_width(self) -> int:
        return (self.coefficients.shape[2] - 1) // 2

    def evaluate(self, xs) -> np.ndarray:
        basis = _fourier_basis(xs, self.half_width)
        return np.einsum("gk,ijk->gij", basis, self.coefficients)

    @classmethod
    def constant(cls, matrix) -> "FourierMatrix":
        return cls(coefficients=np.asarray(matrix, dtype=np.complex128).reshape(2, 2, 1))

    @classmethod
    def from_entries(cls, entries: Dict[Tuple[int, int], Dict[int, complex]]) -> "FourierMatrix":
        K = max([abs(k) for modes in entries.values() for k in modes] + [0])
        table = np.zeros((2, 2, 2 * K + 1), dtype=np.complex128)
        for (i, j), modes in entries.items():
            for k, value in modes.items():
                table[i, j, k + K] = value
        return cls(coefficients=table)


class SchrodingerGenerator(BaseModel):
    """S(x) = [[E - lambda v(x), -1], [1, 0]]"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    type: Literal["schrodinger"] = "schrodinger"
    coupling: float
    energy: float
    potential: Potential


class FourierGenerator(BaseModel):
    """Explicit Fourier table per entry; det A(x) = 1 is checked on a sample grid"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    type: Literal["fourier"] = "fourier"
    table: FourierMatrix

    @model_validator(mode="after")
    def check_unimodular(self):
        xs = np.linspace(0.0, 1.0, 64, endpoint=False)
        values = self.table.evaluate(xs)
        det = values[:, 0, 0] * values[:, 1, 1] - values[:, 0, 1] * values[:, 1, 0]
        if np.max(np.abs(det - 1)) > DET_TOLERANCE:
            raise ValueError("Fourier generator must have determinant 1")
        return self


class ModelTGenerator(BaseModel):
    """T(x) = [[e^{2 pi i theta}, t_r e^{2 pi i r x}], [0, e^{-2 pi i theta}]]"""
    type: Literal["model-T"] = "model-T"
    theta: float
    r: int
    t_hat: complex


class ConjugatedGenerator(BaseModel):
    """x -> B(x + alpha)^{-1} A(x) B(x)"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    type: Literal["conjugated"] = "conjugated"
    base: "Generator"
    conjugacy: FourierMatrix


Generator = Annotated[
    Union[SchrodingerGenerator, FourierGenerator, ModelTGenerator, ConjugatedGenerator],
    Field(discriminator="type"),
]
ConjugatedGenerator.model_rebuild()


class Cocycle(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    frequency: CFExpansion
    generator: Generator


class Mat2C(BaseModel):
    """e^{log_scale} * entries; log_det tracks the log of the represented determinant"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    entries: np.ndarray
    log_scale: float = 0.0
    log_det: complex = 0j

    def matrix(self) -> np.ndarray:
        return np.exp(self.log_scale) * self.entries

    @property
    def log_norm(self) -> float:
        return self.log_scale + float(np.log(np.linalg.norm(self.entries, 2)))

    @property
    def det_defect(self) -> float:
        """|det(entries) e^{2s} / e^{log_det} - 1|"""
        det = self.entries[0, 0] * self.entries[1, 1] - self.entries[0, 1] * self.entries[1, 0]
        return abs(det * np.exp(2 * self.log_scale - self.log_det) - 1)


class TransferProduct(BaseModel):
    n: int
    phase: complex
    result: Mat2C
    renormalizations: int


class LyapunovEstimate(BaseModel):
    n: int
    grid: int
    value: float
    standard_error: float
    doubled_value: float = Field(..., description="L_{2n} on the same grid")
    doubled_error: float
    subadditive: bool = Field(..., description="L_{2n} <= L_n + 3 standard errors")


class StripRow(BaseModel):
    epsilon: float
    n: int
    rate: float


class StripGrowthReport(BaseModel):
    eta: float
    grid: int
    rows: List[StripRow]
    final_rate: float = Field(..., description="Largest rate over the strip at the largest n")
    monotone: bool = Field(..., description="Rates are nonincreasing in n for every epsilon")


class DivisorSolution(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    coefficients: np.ndarray = Field(..., description="w_k for k = -K..K")
    cutoff: int
    excluded: List[int]
    min_divisor: float
    w_bound: float = Field(..., description="sum_k |w_k|, a bound on sup |w| over real x")

    def table(self) -> FourierTable:
        return FourierTable(coefficients=self.coefficients)


class BlochDefect(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    window: Window
    ks: np.ndarray
    g_direct: np.ndarray = Field(..., description="Defect from the restricted vector")
    g_boundary: np.ndarray = Field(..., description="Defect from the vector outside the window")
    agreement: float = Field(..., description="max |g_direct + g_boundary| relative to max |g_direct|")
    checked: int
    sup_norm: float

    def defect_table(self) -> FourierTable:
        return FourierTable(coefficients=self._centered())

    def _centered(self) -> np.ndarray:
        K = int(max(abs(self.ks[0]), abs(self.ks[-1])))
        table = np.zeros(2 * K + 1, dtype=np.complex128)
        table[self.ks + K] = self.g_direct
        return table


class PkRow(BaseModel):
    k: int
    log_norm: float
    log_min: float = Field(..., description="ln of the smallest eigenvalue, -ln ||P^{-1}||")
    log_det: float
    log_trace: float
    epsilon: float
    log_ratio: float = Field(..., description="ln(||P|| ||P^{-1}||^3)")


class PkSequence(BaseModel):
    x: float
    energy: float
    rows: List[PkRow]
    positive_definite: bool
    monotone: bool
    trace_bound: bool
    epsilon_decreasing: bool
    log_scaled: bool


class ModelXReport(BaseModel):
    k: int
    norm: float
    inverse_norm: float = Field(..., description="||X^{-1}||^{-1}")
    shape_a: float = Field(..., description="k (1 + |t|^2 min(k^2, ||delta||^-2))")
    shape_b: float = Field(..., description="k (1 + |t|^2 min(k^2, ||delta||))")
    empirical_exponent: float
    corner_error: float
