import math
from typing import Callable, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.constants import STATE_DIM, StateColumn
from src.integrator.config import INTEGRATOR_SETTINGS
from src.integrator.constants import CrossingDirection, IntegratorMethod
from src.utils import ArraySchema, FloatArray

EventFunction = Callable[[float, FloatArray], float]


class IntegratorSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    rtol: float = Field(default=INTEGRATOR_SETTINGS.RTOL, gt=0.0)
    atol: float = Field(default=INTEGRATOR_SETTINGS.ATOL, gt=0.0)
    max_step: float = Field(default=INTEGRATOR_SETTINGS.MAX_STEP, gt=0.0)
    initial_step: Optional[float] = Field(default=None, gt=0.0)
    method: IntegratorMethod = IntegratorMethod.EXPLICIT
    event_tolerance: float = Field(default=INTEGRATOR_SETTINGS.EVENT_TOLERANCE, gt=0.0)
    max_steps: int = Field(default=INTEGRATOR_SETTINGS.MAX_STEPS, ge=1)

    @model_validator(mode="after")
    def _finite(self) -> "IntegratorSettings":
        if not math.isfinite(self.max_step):
            raise ValueError("max_step must be finite")
        return self


class EventSpec(ArraySchema):
    """Scalar event g(t, states); a sign change of g is an event."""

    event_id: str
    function: EventFunction
    direction: CrossingDirection = CrossingDirection.EITHER
    terminal: bool = False


class EventRecord(ArraySchema):
    event_id: str
    t: float
    state: np.ndarray
    direction: CrossingDirection


class IntegrationStats(BaseModel):
    method: IntegratorMethod
    accepted_steps: int = 0
    rejected_steps: int = 0
    rhs_evaluations: int = 0
    terminated_by: Optional[str] = None


class Section(BaseModel):
    """Plane state[axis] = anchor for one oscillator.

    ``bounds`` holds (column, center, half_width); a crossing counts only if
    every bounded coordinate lies strictly inside its window.
    """

    model_config = ConfigDict(frozen=True)

    oscillator: int = Field(default=0, ge=0)
    axis: int = Field(default=StateColumn.X, ge=0, lt=STATE_DIM)
    anchor: float
    direction: CrossingDirection = CrossingDirection.EITHER
    bounds: Tuple[Tuple[int, float, float], ...] = ()

    @property
    def label(self) -> str:
        return "section"

    def windows(self) -> List[Tuple[StateColumn, float, float]]:
        return [(StateColumn(column), center, width) for column, center, width in self.bounds]
