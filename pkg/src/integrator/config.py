from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class IntegratorConfig(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env",
        case_sensitive=True,
        env_prefix="INTEGRATOR_",
        extra="ignore",
    )

    RTOL: float = Field(default=1e-8, description="Relative local error tolerance")
    ATOL: float = Field(default=1e-10, description="Absolute local error tolerance")
    EVENT_TOLERANCE: float = Field(
        default=1e-9, description="Width of the bracket that localizes an event"
    )
    MAX_STEP: float = Field(default=1.0, description="Upper bound on the step size")
    MIN_STEP: float = Field(default=1e-12, description="Step size underflow threshold")
    MAX_STEPS: int = Field(default=5_000_000, description="Accepted plus rejected steps cap")
    SAFETY: float = Field(default=0.9)
    FACTOR_MIN: float = Field(default=0.2)
    FACTOR_MAX: float = Field(default=5.0)
    PI_BETA: float = Field(default=0.04, description="Step-size controller memory term")


INTEGRATOR_SETTINGS = IntegratorConfig()
