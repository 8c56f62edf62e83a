# app/core/config.py
import math
import os
from pydantic import field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict
from dotenv import load_dotenv

load_dotenv()


class Settings(BaseSettings):
    # Project Configuration
    project_name: str = "quasilab"
    project_version: str = "1.0.0"

    # Precision Configuration
    precision_bits: int = int(os.getenv("QUASILAB_PRECISION_BITS", "256"))
    default_depth: int = int(os.getenv("QUASILAB_DEFAULT_DEPTH", "60"))

    # Execution Configuration
    threads: int = int(os.getenv("QUASILAB_THREADS", "0"))  # 0 = auto
    output_dir: str = os.getenv("QUASILAB_OUTPUT_DIR", "./runs")
    log_level: str = os.getenv("QUASILAB_LOG_LEVEL", "INFO")

    # Truncation Limits
    max_truncation: int = int(os.getenv("QUASILAB_MAX_TRUNCATION", "5000"))
    max_duality_truncation: int = int(os.getenv("QUASILAB_MAX_DUALITY_TRUNCATION", "3000"))
    eigvec_batch: int = int(os.getenv("QUASILAB_EIGVEC_BATCH", "512"))

    # Numerical Tolerances
    weyl_depth_cap: int = int(os.getenv("QUASILAB_WEYL_DEPTH_CAP", "1000000"))
    singular_rcond: float = float(os.getenv("QUASILAB_SINGULAR_RCOND", "1e-13"))
    resolution_constant: float = float(os.getenv("QUASILAB_RESOLUTION_CONSTANT", str(4 * math.pi)))

    # Potential Defaults
    potential_rho: float = float(os.getenv("QUASILAB_POTENTIAL_RHO", "1.0"))
    potential_sigma: float = float(os.getenv("QUASILAB_POTENTIAL_SIGMA", "1.0"))

    model_config = SettingsConfigDict(env_file=".env", extra="ignore")

    @field_validator("precision_bits")
    @classmethod
    def validate_precision_bits(cls, v):
        if v < 64 or v > 8192:
            raise ValueError("QUASILAB_PRECISION_BITS must be between 64 and 8192")
        return v

    @field_validator("default_depth")
    @classmethod
    def validate_default_depth(cls, v):
        if v < 2 or v > 100000:
            raise ValueError("QUASILAB_DEFAULT_DEPTH must be between 2 and 100000")
        return v

    @field_validator("threads")
    @classmethod
    def validate_threads(cls, v):
        if v < 0 or v > 256:
            raise ValueError("QUASILAB_THREADS must be between 0 and 256")
        return v

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v):
        if v.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ValueError("QUASILAB_LOG_LEVEL must be a standard logging level")
        return v.upper()

    @field_validator("max_truncation")
    @classmethod
    def validate_max_truncation(cls, v):
        if v < 1 or v > 20000:
            raise ValueError("QUASILAB_MAX_TRUNCATION must be between 1 and 20000")
        return v

    @field_validator("eigvec_batch")
    @classmethod
    def validate_eigvec_batch(cls, v):
        if v < 1 or v > 100000:
            raise ValueError("QUASILAB_EIGVEC_BATCH must be between 1 and 100000")
        return v

    @field_validator("weyl_depth_cap")
    @classmethod
    def validate_weyl_depth_cap(cls, v):
        if v < 1024:
            raise ValueError("QUASILAB_WEYL_DEPTH_CAP must be at least 1024")
        return v

    @field_validator("singular_rcond")
    @classmethod
    def validate_singular_rcond(cls, v):
        if v <= 0 or v > 1e-3:
            raise ValueError("QUASILAB_SINGULAR_RCOND must be in (0, 1e-3]")
        return v

    @field_validator("resolution_constant", "potential_rho", "potential_sigma")
    @classmethod
    def validate_positive(cls, v, info):
        if v <= 0:
            raise ValueError(f"QUASILAB_{info.field_name.upper()} must be positive")
        return v


settings = Settings()


def resolve_threads(requested: int | None = None) -> int:
    """Number of worker threads for a run; 0 means one per CPU"""
    value = settings.threads if requested is None else requested
    if value <= 0:
        return os.cpu_count() or 1
    return value
