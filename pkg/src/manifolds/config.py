from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class ManifoldConfig(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env",
        case_sensitive=True,
        env_prefix="MANIFOLD_",
        extra="ignore",
    )

    ROOT_TOLERANCE: float = Field(default=1e-10, description="Residual bound for accepted roots")
    NEWTON_MAX_ITER: int = Field(default=50, description="Newton iteration cap")
    NEWTON_MAX_HALVINGS: int = Field(default=30, description="Damping halvings per iteration")
    V_SCAN_MIN: float = Field(default=-6.0, description="Lower end of the voltage scan")
    V_SCAN_MAX: float = Field(default=6.0, description="Upper end of the voltage scan")
    V_SCAN_POINTS: int = Field(default=1201, ge=3, description="Voltage scan resolution")
    SCAN_BLOCK_NODES: int = Field(default=512, ge=1, description="Grid nodes per scan block")
    SHEET_LINK_TOLERANCE: float = Field(
        default=0.5, description="Largest voltage jump between linked roots of one sheet"
    )
    FOLD_BISECTION_STEPS: int = Field(default=30)
    FD_DET_TOLERANCE: float = Field(
        default=1e-7, description="Determinant residual accepted when the Jacobian is differenced"
    )
    DEDUP_DECIMALS: int = Field(default=8)


MANIFOLD_SETTINGS = ManifoldConfig()
