from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class LingerConfig(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env",
        case_sensitive=True,
        env_prefix="LINGER_",
        extra="ignore",
    )

    WINDOW_FRACTION: float = Field(
        default=0.05, description="Default delta_y, delta_z as a share of the slow chart extent"
    )
    ANCHOR_FRACTION: float = Field(
        default=0.02, description="Default delta_x as a share of |x_c - x_f|"
    )
    QUAD_RTOL: float = Field(default=1e-10, description="Relative tolerance for quadrature")
    QUAD_LIMIT: int = Field(default=200, description="Adaptive quadrature subinterval cap")
    SIGN_SAMPLES: int = Field(
        default=201, description="Samples of g1 checked for a sign change before integrating"
    )
    LEAD_WINDOWS: float = Field(
        default=2.0, ge=0.0, description="Measured passages start this many delta_y below the entry"
    )
    FREEZE_Z: bool = Field(
        default=True, description="Hold z at the section value during measured passages"
    )
    HORIZON_FACTOR: float = Field(
        default=2.0, gt=1.0, description="Passage horizon as a multiple of the quadrature time"
    )


LINGER_SETTINGS = LingerConfig()
