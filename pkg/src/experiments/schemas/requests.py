from typing import List, Optional

from pydantic import BaseModel, Field

from src.experiments.schemas.config import ExperimentConfig


class SweepRequest(BaseModel):
    config: ExperimentConfig = Field(..., description="Experiment to sweep.")
    grid: Optional[List[float]] = Field(
        default=None, description="Overrides config.sweep.grid when given."
    )
