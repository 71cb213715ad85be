from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.dynamics.constants import BoundSource
from src.sync.constants import CheckStatus, EvaluationPoint
from src.utils import ArraySchema


class SyncTrace(ArraySchema):
    """Synchronization error along a run; optional series share the time axis."""

    times: np.ndarray
    V_v: np.ndarray
    W: np.ndarray
    v_bar: np.ndarray
    envelope: Optional[np.ndarray] = None
    residual: Optional[np.ndarray] = None
    cs_slack: Optional[np.ndarray] = None

    @field_validator("times", "V_v", "W", "v_bar", "envelope", "residual", "cs_slack", mode="before")
    @classmethod
    def _as_array(cls, value: object) -> Optional[np.ndarray]:
        if value is None:
            return None
        return np.asarray(value, dtype=np.float64)

    @model_validator(mode="after")
    def _aligned(self) -> "SyncTrace":
        size = self.times.shape[0]
        for name in ("V_v", "W", "v_bar", "envelope", "residual", "cs_slack"):
            series = getattr(self, name)
            if series is not None and series.shape != (size,):
                raise ValueError(f"{name} has shape {series.shape}, expected ({size},)")
        if np.any(self.V_v < 0.0):
            raise ValueError("variance series must be non-negative")
        return self

    def __len__(self) -> int:
        return int(self.times.shape[0])


class ThresholdInputs(BaseModel):
    """Inputs of the sufficient coupling condition.

    Ranges are checked by the operations so violations surface as argument errors.
    ``T`` is the horizon over which every oscillator must stay on its attracting
    branch; it defaults to delta * t_min.
    """

    model_config = ConfigDict(frozen=True)

    M: float
    eps_tol: float
    delta: float
    t_min: float
    W0: float
    T: Optional[float] = None

    @property
    def proof_time(self) -> float:
        return self.delta * self.t_min

    @property
    def horizon(self) -> float:
        return self.T if self.T is not None else self.proof_time


class ThresholdBreakdown(BaseModel):
    model_config = ConfigDict(frozen=True)

    steady_state_term: float
    transient_term: float
    transient_floored: bool
    k_star: float


class VarianceIdentityCheck(ArraySchema):
    """Residuals of the variance identity at interior sample times."""

    times: np.ndarray
    residual: np.ndarray
    max_residual: float
    cs_slack: np.ndarray
    min_cs_slack: float
    mean_field_residual: np.ndarray
    max_mean_field_residual: float
    w_slack: np.ndarray
    min_w_slack: float
    M: float
    step: Optional[float] = None


class VerificationReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    k: float = Field(ge=0.0)
    k_star: float
    threshold: ThresholdBreakdown
    M: float
    m_source: BoundSource
    envelope_M: float
    W0: float
    W_initial: float
    eps_tol: float
    delta: float
    t_min: float
    horizon: float
    proof_time: float
    V_v_at_proof_time: float
    V_v_at_t_min: float
    envelope_max_violation: Optional[float] = None
    envelope_status: CheckStatus
    transient_vacuous: bool
    proof_point_passed: bool
    theorem_point_passed: bool
    pass_point: EvaluationPoint
    on_branch_until: float
    strict_horizon: bool
    valid: bool
    passed: Optional[bool] = None
    detail: Optional[str] = None

    @model_validator(mode="after")
    def _verdict(self) -> "VerificationReport":
        if not self.valid and self.passed is not None:
            raise ValueError("an invalid report carries no pass/fail verdict")
        return self

    @property
    def status(self) -> CheckStatus:
        if not self.valid:
            return CheckStatus.INVALID
        return CheckStatus.PASSED if self.passed else CheckStatus.FAILED
