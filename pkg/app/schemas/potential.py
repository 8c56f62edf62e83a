# app/schemas/potential.py
import math
from typing import Dict, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.core.config import settings

DECAY_SLACK = 1e-12


def parse_potential_text(text: str) -> Dict[int, complex]:
    """Parse 'k, re[, im]' lines into Fourier modes; '#' starts a comment"""
    modes: Dict[int, complex] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.replace(";", ",").split(",")]
        if len(parts) not in (2, 3):
            raise ValueError(f"line {number}: expected 'k, re[, im]'")
        try:
            k = int(parts[0])
            value = complex(float(parts[1]), float(parts[2]) if len(parts) == 3 else 0.0)
        except ValueError:
            raise ValueError(f"line {number}: '{line}' is not numeric")
        if k in modes:
            raise ValueError(f"line {number}: mode {k} listed twice")
        modes[k] = value
    if not modes:
        raise ValueError("potential table is empty")
    return modes


class Potential(BaseModel):
    """Finite Fourier table v_k, |k| <= K, of a real analytic potential.

    coefficients[j] holds v_{j-K}. The decay certificate (C_v, sigma) bounds
    |v_k| <= C_v exp(-2 sigma |k|); C_v defaults to the smallest constant
    that makes the table satisfy it.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    coefficients: np.ndarray
    rho: float = Field(default_factory=lambda: settings.potential_rho, gt=0)
    sigma: float = Field(default_factory=lambda: settings.potential_sigma, gt=0)
    decay_constant: Optional[float] = Field(None, gt=0)
    name: str = "table"

    @model_validator(mode="after")
    def check_table(self):
        table = np.asarray(self.coefficients, dtype=np.complex128)
        if table.ndim != 1 or table.size % 2 == 0:
            raise ValueError("coefficients must be a 1-d table of odd length 2K+1")
        if not np.array_equal(table[::-1], np.conj(table)):
            raise ValueError("coefficients must satisfy v_{-k} = conj(v_k)")
        table.setflags(write=False)
        object.__setattr__(self, "coefficients", table)

        ks = np.abs(np.arange(-self.half_width, self.half_width + 1))
        weights = np.abs(table) * np.exp(2 * self.sigma * ks)
        fitted = float(weights.max())
        if self.decay_constant is None:
            object.__setattr__(self, "decay_constant", fitted if fitted > 0 else 1.0)
        elif fitted > self.decay_constant * (1 + DECAY_SLACK):
            raise ValueError(
                f"decay certificate fails: max |v_k| exp(2 sigma |k|) = {fitted} exceeds C_v = {self.decay_constant}"
            )
        return self

    @property
    def half_width(self) -> int:
        return (len(self.coefficients) - 1) // 2

    @property
    def truncation_error(self) -> float:
        """C_v e^{-2 sigma K} / (1 - e^{-2 sigma})"""
        return self.decay_constant * math.exp(-2 * self.sigma * self.half_width) / (-math.expm1(-2 * self.sigma))

    @property
    def sup_norm(self) -> float:
        """Upper bound on max |v(x)| over real x"""
        return float(np.abs(self.coefficients).sum())

    def coefficient(self, k: int) -> complex:
        if abs(k) > self.half_width:
            return 0j
        return complex(self.coefficients[k + self.half_width])

    @classmethod
    def from_modes(cls, modes: Dict[int, complex], **kwargs) -> "Potential":
        """Build from {k: v_k}; missing negative modes are filled by conjugation"""
        K = max(abs(k) for k in modes)
        table = np.zeros(2 * K + 1, dtype=np.complex128)
        for k, value in modes.items():
            table[k + K] = value
            if -k not in modes:
                table[-k + K] = np.conj(value)
        return cls(coefficients=table, **kwargs)

    @classmethod
    def almost_mathieu(cls, **kwargs) -> "Potential":
        """v(x) = 2 cos(2 pi x)"""
        return cls.from_modes({1: 1.0, -1: 1.0}, name="almost_mathieu", **kwargs)

    @classmethod
    def geometric(cls, K: int, ratio: float = 0.5, **kwargs) -> "Potential":
        """v_k = ratio^|k| for |k| <= K"""
        return cls.from_modes({k: ratio ** abs(k) for k in range(-K, K + 1)}, name="geometric", **kwargs)

    @classmethod
    def from_text(cls, text: str, **kwargs) -> "Potential":
        return cls.from_modes(parse_potential_text(text), **kwargs)

    def to_report(self) -> dict:
        return {
            "name": self.name,
            "half_width": self.half_width,
            "rho": self.rho,
            "sigma": self.sigma,
            "decay_constant": self.decay_constant,
            "truncation_error": self.truncation_error,
            "modes": {
                str(k): [self.coefficient(k).real, self.coefficient(k).imag]
                for k in range(-self.half_width, self.half_width + 1)
                if self.coefficient(k) != 0
            },
        }
