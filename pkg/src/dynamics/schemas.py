import math
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.constants import STATE_DIM, StateColumn
from src.dynamics.config import DYNAMICS_SETTINGS
from src.dynamics.constants import BoundSource, CouplingScheme
from src.exceptions import ArgumentError
from src.utils import ArraySchema, FloatArray, as_float_array


class TimeScales(BaseModel):
    model_config = ConfigDict(frozen=True)

    eps_ts: float = Field(default=DYNAMICS_SETTINGS.EPS_TS, gt=0.0, lt=1.0)
    delta: float = Field(default=DYNAMICS_SETTINGS.DELTA, gt=0.0, lt=1.0)

    @model_validator(mode="after")
    def _check_product(self) -> "TimeScales":
        if self.eps_ts * self.delta < DYNAMICS_SETTINGS.MIN_SCALE_PRODUCT:
            raise ValueError(
                f"eps_ts * delta = {self.eps_ts * self.delta:.3e} below "
                f"{DYNAMICS_SETTINGS.MIN_SCALE_PRODUCT:.1e}"
            )
        return self

    @property
    def slowest_rate(self) -> float:
        return self.eps_ts * self.delta


class OscillatorParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    mu: tuple[float, ...] = Field(default=(0.0,), min_length=1)

    @field_validator("mu")
    @classmethod
    def _finite(cls, value: tuple[float, ...]) -> tuple[float, ...]:
        if not all(math.isfinite(item) for item in value):
            raise ValueError("control parameters must be finite")
        return value

    def as_array(self) -> FloatArray:
        return as_float_array(self.mu)


def parameter_matrix(params: Sequence[OscillatorParams]) -> FloatArray:
    widths = {len(item.mu) for item in params}
    if len(widths) != 1:
        raise ArgumentError("all oscillators must share the parameter dimension")
    return np.vstack([item.as_array() for item in params])


class NetworkConfig(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    n_oscillators: int = Field(default=10, ge=1, alias="N")
    k: float = Field(default=1.0, ge=0.0)
    coupling: CouplingScheme = CouplingScheme.ALL_TO_ALL


class NetworkState(ArraySchema):
    """Network state at time t; rows are oscillators, columns (v, u, x, y, z)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=False)

    t: float = 0.0
    states: np.ndarray

    @field_validator("states", mode="before")
    @classmethod
    def _shape(cls, value: object) -> FloatArray:
        array = np.array(value, dtype=np.float64)
        if array.ndim != 2 or array.shape[1] != STATE_DIM:
            raise ValueError(f"states must have shape (N, {STATE_DIM}), got {array.shape}")
        if not np.all(np.isfinite(array)):
            raise ValueError("states must be finite")
        return array

    @property
    def n_oscillators(self) -> int:
        return int(self.states.shape[0])

    def column(self, column: StateColumn) -> FloatArray:
        return self.states[:, int(column)]


class StateBox(BaseModel):
    """Axis-aligned box in (v, u, x, y, z)."""

    model_config = ConfigDict(frozen=True)

    lower: tuple[float, float, float, float, float]
    upper: tuple[float, float, float, float, float]

    @classmethod
    def from_points(cls, points: FloatArray) -> "StateBox":
        flat = np.asarray(points, dtype=np.float64).reshape(-1, STATE_DIM)
        low = flat.min(axis=0)
        high = flat.max(axis=0)
        return cls(
            lower=tuple(float(item) for item in low),  # type: ignore[arg-type]
            upper=tuple(float(item) for item in high),  # type: ignore[arg-type]
        )

    @property
    def is_empty(self) -> bool:
        return any(high < low for low, high in zip(self.lower, self.upper))

    def inflated(self, fraction: float) -> "StateBox":
        low = np.asarray(self.lower)
        high = np.asarray(self.upper)
        pad = fraction * (high - low)
        # degenerate axes still get a sliver so the grid is not collapsed
        pad = np.maximum(pad, 1e-9 * (1.0 + np.abs(low)))
        return StateBox(
            lower=tuple(float(item) for item in low - pad),  # type: ignore[arg-type]
            upper=tuple(float(item) for item in high + pad),  # type: ignore[arg-type]
        )


class GridSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    refinement: int = Field(default=DYNAMICS_SETTINGS.BOUND_GRID_REFINEMENT, ge=0, le=6)

    @property
    def points_per_axis(self) -> int:
        return 2**self.refinement + 1


class HeterogeneityBound(BaseModel):
    model_config = ConfigDict(frozen=True)

    M: float = Field(ge=0.0)
    points_per_axis: int
    refinement: Optional[int] = None
    source: BoundSource = BoundSource.MEASURED


class ReferenceCoefficients(BaseModel):
    """Coefficient table of the reference burster."""

    model_config = ConfigDict(frozen=True)

    a: float = 1.0
    b: float = 3.0
    c: float = 1.0
    d: float = 5.0
    s: float = 4.0
    v0: float = -1.6
    I: float = 0.75
    e1: float = 2.5
    r: float = 1.0
    mu0: float = 0.0
