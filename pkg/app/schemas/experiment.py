# app/schemas/experiment.py
import hashlib
import json
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from app.core.config import settings
from app.core.errors import ConfigError


# HELPER VALIDATION FUNCTIONS
def split_list(v):
    """Accept '1, 2, 3' text as well as real lists"""
    if isinstance(v, str):
        return [item.strip() for item in v.replace(";", ",").split(",") if item.strip()]
    return v


def parse_config_text(text: str) -> Dict[str, str]:
    """Flat 'key = value' lines; '#' starts a comment"""
    values: Dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"line {number}: expected 'key = value'", key=f"line {number}", value=line)
        if key in values:
            raise ConfigError(f"line {number}: key given twice", key=key, value=value.strip())
        values[key] = value.strip()
    return values


def parse_override(text: str) -> tuple:
    key, sep, value = text.partition("=")
    if not sep or not key.strip():
        raise ConfigError("overrides take the form key=value", key="--set", value=text)
    return key.strip(), value.strip()


def parse_vector(text: str) -> Dict[int, complex]:
    """'0:1, 1:0.5' -> {0: 1, 1: 0.5}; a value may be any Python complex literal"""
    vector: Dict[int, complex] = {}
    for item in split_list(text):
        site, sep, value = item.partition(":")
        try:
            vector[int(site)] = complex(value.replace(" ", "")) if sep else 1.0
        except ValueError:
            raise ConfigError("vector entries take the form site:value", key="f", value=item)
    if not vector:
        raise ConfigError("vector f is empty", key="f", value=text)
    return vector


class ExperimentConfig(BaseModel):
    """Resolved flat configuration of one run; unknown keys are rejected"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    # Frequency
    frequency: str = "golden"
    depth: int = Field(default_factory=lambda: settings.default_depth, ge=1)
    precision: Optional[int] = Field(None, ge=64, le=8192)

    # Operator
    potential: str = Field("amo", description="'amo', 'geometric:K,ratio' or inline 'k,re[,im]; ...'")
    potential_file: Optional[str] = None
    rho: Optional[float] = Field(None, gt=0)
    sigma: Optional[float] = Field(None, gt=0)
    coupling: float = 0.0
    phase: float = 0.0
    theta: float = 0.0

    # Grids
    N: int = Field(200, gt=0)
    n: int = Field(1000, ge=1)
    n_list: List[int] = Field(default_factory=lambda: [100, 1000])
    grid: int = Field(256, ge=1)
    K: int = Field(100, ge=1)
    k: int = Field(64, ge=1)
    k_max: int = Field(100, ge=1)
    energy: float = 0.0
    energies: List[float] = Field(default_factory=list)
    energy_count: int = Field(0, ge=0, description="Pick this many truncation eigenvalues when energies is empty")
    eps: List[float] = Field(default_factory=list)
    eps_min: float = Field(1e-3, gt=0)
    eps_max: float = Field(1e-1, gt=0)
    eps_points: int = Field(7, ge=1)
    f: str = "0:1"
    measure_vectors: Literal["phase", "f"] = "phase"

    # Diophantine
    kappa: float = Field(0.1, gt=0)
    tau: float = Field(2.0, gt=0)
    eps0: float = Field(0.1, gt=0)
    eps1: float = Field(0.05, ge=0)
    floor: float = Field(1e-8, gt=0)
    excluded: List[int] = Field(default_factory=list)

    # Cocycles
    eta: float = Field(0.05, gt=0)
    strips: int = Field(5, ge=1)
    n_lyapunov: int = Field(1000, ge=1)
    tol: float = Field(1e-12, gt=0)
    r: int = 1
    t_hat_re: float = 0.5
    t_hat_im: float = 0.0

    # Spectral
    phase_avg: int = Field(1, ge=1)
    phases: int = Field(4, ge=1)
    min_gap: float = Field(0.05, gt=0)
    n_j: int = 0
    M: int = Field(4096, ge=16)
    trials: int = Field(10, ge=1)
    seed: int = 0
    window: int = Field(0, ge=0, description="Half-width of the Bloch-lift window; 0 picks N/2")

    @field_validator("n_list", "energies", "eps", "excluded", mode="before")
    @classmethod
    def validate_lists(cls, v):
        return split_list(v)

    @model_validator(mode="after")
    def check_ranges(self):
        if self.eps_min > self.eps_max:
            raise ValueError("eps_min must not exceed eps_max")
        if any(e <= 0 for e in self.eps):
            raise ValueError("eps values must be positive")
        if any(n < 1 for n in self.n_list):
            raise ValueError("n_list entries must be positive")
        return self

    @property
    def t_hat(self) -> complex:
        return complex(self.t_hat_re, self.t_hat_im)

    @property
    def precision_bits(self) -> int:
        return self.precision or settings.precision_bits

    def vector(self) -> Dict[int, complex]:
        return parse_vector(self.f)

    def config_hash(self) -> str:
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    @classmethod
    def build(cls, values: Dict[str, object]) -> "ExperimentConfig":
        """Validate raw values, reporting the first offending key as a ConfigError"""
        try:
            return cls.model_validate(values)
        except ValidationError as exc:
            first = exc.errors()[0]
            key = ".".join(str(part) for part in first["loc"]) or "config"
            raise ConfigError(first["msg"], key=key, value=values.get(key, first.get("input")))

    @classmethod
    def load(cls, path: Optional[str] = None, overrides: Sequence[str] = (),
             precision: Optional[int] = None) -> "ExperimentConfig":
        """Read a config file, apply --set overrides, then resolve potential_file against the file's directory"""
        values: Dict[str, object] = {}
        base = Path.cwd()
        if path is not None:
            config_path = Path(path)
            try:
                text = config_path.read_text(encoding="utf-8")
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc.strerror}", key="--config", value=path)
            values.update(parse_config_text(text))
            base = config_path.resolve().parent
        for item in overrides:
            key, value = parse_override(item)
            values[key] = value
        if precision is not None:
            values["precision"] = precision
        potential_file = values.get("potential_file")
        if potential_file:
            values["potential_file"] = str((base / str(potential_file)).resolve())
        return cls.build(values)


class RunManifest(BaseModel):
    """Reproducibility record written next to every output"""
    artifact_version: str = Field(default_factory=lambda: settings.project_version)
    command: str
    config_hash: str
    config: dict
    precision_bits: int
    threads: int
    wall_seconds: float = 0.0
    stages: Dict[str, float] = Field(default_factory=dict)
    warnings: List[str] = Field(default_factory=list)
    outputs: List[str] = Field(default_factory=list)
    status: Literal["ok", "failed"] = "ok"
    error: Optional[dict] = None
