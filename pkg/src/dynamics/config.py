from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class DynamicsConfig(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env",
        case_sensitive=True,
        env_prefix="DYNAMICS_",
        extra="ignore",
    )

    EPS_TS: float = Field(default=0.05, description="Default intermediate scale ratio")
    DELTA: float = Field(default=0.1, description="Default slow scale ratio")
    MIN_SCALE_PRODUCT: float = Field(
        default=1e-12, description="Smallest admissible eps_ts * delta"
    )
    FD_STEP_FACTOR: float = Field(
        default=1e-6, description="Central difference step is factor * (1 + |state|)"
    )
    BOUND_GRID_REFINEMENT: int = Field(
        default=2, ge=0, le=6, description="Bound grid level k; 2^k + 1 points per axis"
    )
    BOX_INFLATION: float = Field(
        default=0.1, ge=0.0, description="Relative inflation of trajectory boxes"
    )


DYNAMICS_SETTINGS = DynamicsConfig()
