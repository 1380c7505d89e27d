# sojourn/settings.py
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # Logging
    LOG_LEVEL: str = Field("INFO", description="Logging level")
    LOG_FILE: str = Field("sojourn.log.jsonl", description="JSON-lines log file, relative to the output directory")

    # Geometry
    COLLAR_X0: float = Field(0.2, gt=0, le=0.5, description="Chart-switch threshold in the boundary defining function")

    # Integrator
    RTOL: float = Field(1e-10, gt=0, description="Relative tolerance of the Runge-Kutta integrator")
    ATOL: float = Field(1e-12, gt=0, description="Absolute tolerance of the Runge-Kutta integrator")
    TRAP_FACTOR: float = Field(50.0, gt=0, description="Trapping budget in units of the model diameter scale")

    # Branch search
    MULTISTART_N2: int = Field(64, ge=4, description="Multistart directions for dim 2")
    MULTISTART_N3: int = Field(256, ge=8, description="Multistart directions for dim 3")
    DEDUPE_RADIUS: float = Field(1e-4, gt=0, description="Minimal distance between distinct initial directions")
    DEGENERACY_THRESHOLD: float = Field(1e-8, gt=0, description="Threshold on |det dy/d(dir)|")
    FD_STEP: float = Field(1e-5, gt=0, description="Base finite-difference step on the direction sphere")
    NEWTON_TOL: float = Field(1e-9, gt=0, description="Newton residual accepted for a branch")

    # Kernels and radiation field
    FRONT_THRESHOLD: float = Field(0.05, gt=0, lt=1, description="Front detector threshold as a fraction of the peak")
    LAMBDA_MIN: float = Field(10.0, gt=0, description="Default lower end of the frequency grid")
    LAMBDA_MAX: float = Field(100.0, gt=0, description="Default upper end of the frequency grid")
    LAMBDA_POINTS: int = Field(4096, ge=16, description="Default number of frequency samples")
    MOLLIFIER_WIDTH: float = Field(1.0, gt=0, description="Default support half-width of the mollifier bump")

    # Catalog validation
    CATALOG_SAMPLES: int = Field(10_000, ge=1, description="Random chart points per metric family in CatalogValidate")

    # Execution
    THREADS: int = Field(1, ge=1, description="Worker pool size for point sweeps")
    DEBUG: bool = Field(False, description="Enable debug mode")

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=True,
        extra="ignore",
    )


settings = Settings()
