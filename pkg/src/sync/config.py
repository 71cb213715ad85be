from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

from src.sync.constants import EvaluationPoint


class SyncConfig(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env",
        case_sensitive=True,
        env_prefix="SYNC_",
        extra="ignore",
    )

    ENVELOPE_SLACK: float = Field(
        default=1e-6, description="Envelope violations below slack * (1 + W0) are ignored"
    )
    CS_SLACK_TOLERANCE: float = Field(
        default=1e-9, description="Admissible negative Cauchy-Schwarz slack"
    )
    MIN_W: float = Field(
        default=1e-12, description="W below this is treated as zero in the W-inequality"
    )
    PASS_POINT: EvaluationPoint = Field(
        default=EvaluationPoint.THEOREM,
        description="Which evaluation time decides the verdict: delta*t_min or t_min",
    )


SYNC_SETTINGS = SyncConfig()
