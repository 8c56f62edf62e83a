# app/schemas/frequency.py
from fractions import Fraction
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.core.config import settings
from app.core.precision import to_decimal


# HELPER VALIDATION FUNCTIONS
def validate_rational_text(v):
    if v is None:
        return v
    try:
        Fraction(str(v).strip())
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"'{v}' is not a rational number")
    return str(v).strip()


def validate_partial_quotients(v):
    if v is None:
        return v
    if len(v) == 0:
        raise ValueError("partial-quotient stream cannot be empty")
    for a in v:
        if a < 1:
            raise ValueError("partial quotients must be positive integers")
    return v


class QuadraticDescriptor(BaseModel):
    """alpha = offset + scale * sqrt(d), reduced mod 1"""
    d: int = Field(..., gt=1, description="Radicand; must not be a perfect square")
    offset: str = Field("0", description="Rational offset, e.g. '-1/2'")
    scale: str = Field("1", description="Nonzero rational scale, e.g. '1/2'")

    @field_validator("offset", mode="before")
    @classmethod
    def validate_offset(cls, v):
        return validate_rational_text(v)

    @field_validator("scale", mode="before")
    @classmethod
    def validate_scale(cls, v):
        v = validate_rational_text(v)
        if Fraction(v) == 0:
            raise ValueError("scale must be nonzero")
        return v


class FrequencySpec(BaseModel):
    """One of the three accepted descriptions of an irrational frequency"""
    model_config = ConfigDict(frozen=True)

    kind: Literal["stream", "quadratic", "decimal"]
    partial_quotients: Optional[List[int]] = Field(None, description="a_1, a_2, ... for stream input")
    periodic: bool = Field(False, description="The stream repeats forever")
    quadratic: Optional[QuadraticDescriptor] = None
    decimal: Optional[str] = Field(None, description="Decimal digits of alpha")
    precision_bits: int = Field(default_factory=lambda: settings.precision_bits, ge=64, le=8192)

    @field_validator("partial_quotients")
    @classmethod
    def validate_stream(cls, v):
        return validate_partial_quotients(v)

    @field_validator("decimal")
    @classmethod
    def validate_decimal(cls, v):
        if v is None:
            return v
        v = v.strip()
        try:
            Fraction(v)
        except (ValueError, ZeroDivisionError):
            raise ValueError(f"'{v}' is not a decimal number")
        return v

    @model_validator(mode="after")
    def check_payload(self):
        if self.kind == "stream" and self.partial_quotients is None:
            raise ValueError("stream frequency requires partial_quotients")
        if self.kind == "quadratic" and self.quadratic is None:
            raise ValueError("quadratic frequency requires a quadratic descriptor")
        if self.kind == "decimal" and self.decimal is None:
            raise ValueError("decimal frequency requires decimal digits")
        return self

    @classmethod
    def golden(cls, precision_bits: Optional[int] = None) -> "FrequencySpec":
        return cls.from_quadratic(5, "-1/2", "1/2", precision_bits)

    @classmethod
    def silver(cls, precision_bits: Optional[int] = None) -> "FrequencySpec":
        return cls.from_quadratic(2, "-1", "1", precision_bits)

    @classmethod
    def from_quadratic(cls, d: int, offset: str = "0", scale: str = "1",
                       precision_bits: Optional[int] = None) -> "FrequencySpec":
        extra = {} if precision_bits is None else {"precision_bits": precision_bits}
        return cls(kind="quadratic", quadratic=QuadraticDescriptor(d=d, offset=offset, scale=scale), **extra)

    @classmethod
    def from_stream(cls, partial_quotients: List[int], periodic: bool = False,
                    precision_bits: Optional[int] = None) -> "FrequencySpec":
        extra = {} if precision_bits is None else {"precision_bits": precision_bits}
        return cls(kind="stream", partial_quotients=list(partial_quotients), periodic=periodic, **extra)

    @classmethod
    def from_decimal(cls, digits: str, precision_bits: Optional[int] = None) -> "FrequencySpec":
        extra = {} if precision_bits is None else {"precision_bits": precision_bits}
        return cls(kind="decimal", decimal=digits, **extra)

    @classmethod
    def from_text(cls, text: str, precision_bits: Optional[int] = None) -> "FrequencySpec":
        """Parse 'golden', 'silver', 'stream:1,2,3', 'periodic:1,2',
        'quadratic:d,offset,scale' or 'decimal:0.123...'"""
        text = text.strip()
        name, _, payload = text.partition(":")
        name = name.strip().lower()
        if name == "golden":
            return cls.golden(precision_bits)
        if name == "silver":
            return cls.silver(precision_bits)
        if name in ("stream", "periodic"):
            quotients = [int(a) for a in payload.split(",") if a.strip()]
            return cls.from_stream(quotients, periodic=(name == "periodic"), precision_bits=precision_bits)
        if name == "quadratic":
            parts = [p.strip() for p in payload.split(",")]
            if len(parts) != 3:
                raise ValueError("quadratic frequency needs 'd,offset,scale'")
            return cls.from_quadratic(int(parts[0]), parts[1], parts[2], precision_bits)
        if name == "decimal":
            return cls.from_decimal(payload, precision_bits)
        raise ValueError(f"unknown frequency form '{name}'")


class CFExpansion(BaseModel):
    """Continued-fraction data of alpha to a fixed depth.

    p and q hold p_0..p_depth and q_0..q_depth. gaps holds
    Delta_k = ||q_k alpha|| for k = 0..depth-1; offsets holds the signed
    q_k alpha - p_k for the same k.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    depth: int
    partial_quotients: Tuple[int, ...]
    p: Tuple[int, ...]
    q: Tuple[int, ...]
    gaps: Tuple[object, ...]
    offsets: Tuple[object, ...]
    gap_radius: object
    alpha: object
    alpha_radius: object
    precision_bits: int
    source: str

    @property
    def alpha_float(self) -> float:
        return float(self.alpha)

    @property
    def q_depth(self) -> int:
        return self.q[self.depth]

    def to_report(self) -> dict:
        digits = max(17, int(self.precision_bits * 0.30103) // 2)
        return {
            "depth": self.depth,
            "source": self.source,
            "precision_bits": self.precision_bits,
            "alpha": to_decimal(self.alpha, digits),
            "alpha_radius": to_decimal(self.alpha_radius, 6),
            "partial_quotients": [str(a) for a in self.partial_quotients],
            "p": [str(v) for v in self.p],
            "q": [str(v) for v in self.q],
            "gaps": [to_decimal(g, digits) for g in self.gaps],
            "gap_radius": to_decimal(self.gap_radius, 6),
        }


class ResonanceSequence(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    theta: object
    epsilon0: float = Field(..., gt=0)
    k_max: int
    resonances: Tuple[int, ...]
    gaps: Tuple[object, ...]

    def to_report(self) -> dict:
        return {
            "theta": to_decimal(self.theta, 30),
            "epsilon0": self.epsilon0,
            "k_max": self.k_max,
            "resonances": list(self.resonances),
            "gaps": [to_decimal(g, 20) for g in self.gaps],
        }


class BetaProfile(BaseModel):
    beta_hat: float = Field(..., description="max over n of ln(q_{n+1})/q_n")
    tail_estimate: float = Field(..., description="Running sup from the middle index on")
    depth_used: int
    ratios: List[float] = Field(..., description="ln(q_{n+1})/q_n for n = 0..depth-1")
    tail_sup: List[float] = Field(..., description="max over m >= n of the ratios")


class DiophantineCheck(BaseModel):
    holds: bool
    witness: int = Field(..., description="Minimizer of the normalized distance")
    witness_norm: str = Field(..., description="||witness * alpha|| as a decimal string")
    min_normalized: float
    first_failure: Optional[int] = None
    scanned: int
    condition: Literal["power", "strong"] = "power"


class SmallDivisorProfile(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    ks: object
    norm_k: object
    norm_shift: object
    beta_hat: float
    c_fitted: float = Field(..., description="min_k ||k alpha|| e^{2 beta |k|}")
    c_resonant: Optional[float] = Field(None, description="min ||2theta - k alpha|| e^{4 beta |n_j|}, |k| <= |n_j|, k != n_j")


class ResonanceGapRow(BaseModel):
    n_j: int
    n_next: int
    gap: float
    bound: float
    holds: bool


class ResonanceGapProfile(BaseModel):
    rows: List[ResonanceGapRow]
    beta_hat: float
    fitted_rate: float = Field(..., description="Smallest c with gap_j >= e^{-c |n_{j+1}|}")
