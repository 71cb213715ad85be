from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional

from pydantic import BaseModel, Field

from src.dynamics.schemas import HeterogeneityBound
from src.experiments.constants import Stage, StageStatus, SweepParameter
from src.integrator.trajectory import Trajectory
from src.linger.schemas import LingerReport
from src.manifolds.schemas import OscillatorGeometry
from src.sync.schemas import SyncTrace, VerificationReport
from src.utils import ArraySchema


class StageRecord(BaseModel):
    stage: Stage
    status: StageStatus
    started_at: datetime
    finished_at: datetime
    files: List[str] = Field(default_factory=list)
    error: Optional[str] = None
    error_type: Optional[str] = None


class RunManifest(BaseModel):
    config_hash: str
    seed: int
    versions: Dict[str, str]
    started_at: datetime
    finished_at: Optional[datetime] = None
    stages: List[StageRecord] = Field(default_factory=list)

    @property
    def files(self) -> List[str]:
        return [name for record in self.stages for name in record.files]

    @property
    def failed_stage(self) -> Optional[Stage]:
        for record in self.stages:
            if record.status == StageStatus.FAILED:
                return record.stage
        return None


class SweepRow(BaseModel):
    value: float
    k: Optional[float] = None
    k_star: Optional[float] = None
    M: Optional[float] = None
    V_v_at_proof_time: Optional[float] = None
    V_v_at_t_min: Optional[float] = None
    valid: bool = False
    passed: Optional[bool] = None
    error: Optional[str] = None


class SweepTable(BaseModel):
    parameter: SweepParameter
    rows: List[SweepRow]
    k_star: Optional[float] = None
    k_empirical: Optional[float] = None

    @property
    def values(self) -> List[float]:
        return [row.value for row in self.rows]


class RunArtifact(ArraySchema):
    """Everything one pipeline invocation produced; later stages may be absent."""

    directory: Path
    manifest: RunManifest
    geometries: Optional[List[OscillatorGeometry]] = None
    linger: Optional[LingerReport] = None
    bound: Optional[HeterogeneityBound] = None
    trajectory: Optional[Trajectory] = None
    trace: Optional[SyncTrace] = None
    verification: Optional[VerificationReport] = None
    sweep: Optional[SweepTable] = None
