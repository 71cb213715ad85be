from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

from src.constants import Environment


class Config(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
        validate_default=True,
    )

    LOG_LEVEL: str = Field(default="INFO", description="Root logging level")

    # Harness
    SWEEP_WORKERS: int = Field(
        default=1, ge=1, description="Worker processes used for sweep rows"
    )
    OUTPUT_DIR: Path = Field(
        default=Path("runs"), description="Base directory for run artifacts"
    )

    CORS_ORIGINS: list[str] = ["*"]
    CORS_HEADERS: list[str] = ["*"]

    APP_VERSION: str = "0.1.0"
    ENVIRONMENT: Environment = Field(
        default=Environment.DEVELOPMENT, description="Deployment Environment"
    )


SETTINGS = Config()
