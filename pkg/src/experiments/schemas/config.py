import json
import logging
import tomllib
from pathlib import Path
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.dynamics.config import DYNAMICS_SETTINGS
from src.dynamics.constants import ModelId
from src.dynamics.schemas import NetworkConfig, TimeScales
from src.exceptions import ArgumentError
from src.experiments.constants import BoundMode, KMode, SweepParameter
from src.integrator.schemas import IntegratorSettings
from src.linger.constants import LingerMethod
from src.linger.schemas import SectionOffsets
from src.manifolds.schemas import ChartGrid, Region, SearchWindow
from src.utils import stable_hash

logger = logging.getLogger(__name__)


class ModelBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: ModelId = ModelId.REFERENCE_BURSTER
    coefficients: Dict[str, float] = Field(default_factory=dict)
    eps_ts: float = DYNAMICS_SETTINGS.EPS_TS
    delta: float = DYNAMICS_SETTINGS.DELTA
    spread: float = Field(default=0.1, ge=0.0)
    seed: int = Field(default=0, ge=0)

    @property
    def scales(self) -> TimeScales:
        return TimeScales(eps_ts=self.eps_ts, delta=self.delta)

    @model_validator(mode="after")
    def _scales(self) -> "ModelBlock":
        TimeScales(eps_ts=self.eps_ts, delta=self.delta)
        return self


class NetworkBlock(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    n_oscillators: int = Field(default=10, ge=1, alias="N")
    k: float = Field(default=1.0, ge=0.0)
    initial_states: Optional[List[List[float]]] = None

    @model_validator(mode="after")
    def _initial_rows(self) -> "NetworkBlock":
        if self.initial_states is None:
            return self
        if len(self.initial_states) != self.n_oscillators:
            raise ValueError(
                f"initial_states has {len(self.initial_states)} rows for N={self.n_oscillators}"
            )
        if any(len(row) != 5 for row in self.initial_states):
            raise ValueError("initial_states rows must be (v, u, x, y, z)")
        return self

    def network(self, k: Optional[float] = None) -> NetworkConfig:
        return NetworkConfig(n_oscillators=self.n_oscillators, k=self.k if k is None else k)


class ManifoldBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    region: Region = Region(x=(0.0, 2.0), y=(-0.6, 0.8), z=(-0.5, 0.5))
    grid: ChartGrid = ChartGrid()
    window: Optional[SearchWindow] = SearchWindow(y=(-0.6, -0.2), z=(0.0, 0.0))
    canard_index: int = Field(default=0, ge=0)


class SectionsBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    offsets: Optional[SectionOffsets] = None


class AnalysisBlock(BaseModel):
    """How k, M and W0 are obtained for verification."""

    model_config = ConfigDict(extra="forbid")

    eps_tol: float = Field(default=1e-3, gt=0.0)
    k_mode: KMode = KMode.FIXED
    k_factor: float = Field(default=1.1, gt=0.0)
    m_mode: BoundMode = BoundMode.MEASURED
    M: Optional[float] = Field(default=None, ge=0.0)
    w0_mode: BoundMode = BoundMode.MEASURED
    W0: Optional[float] = Field(default=None, ge=0.0)
    T: Optional[float] = Field(default=None, gt=0.0)
    jitter: float = Field(default=0.01, ge=0.0)
    linger_method: LingerMethod = LingerMethod.QUADRATURE

    @model_validator(mode="after")
    def _user_values(self) -> "AnalysisBlock":
        if self.m_mode == BoundMode.USER and self.M is None:
            raise ValueError("analysis.m_mode = 'user' needs analysis.M")
        if self.w0_mode == BoundMode.USER and self.W0 is None:
            raise ValueError("analysis.w0_mode = 'user' needs analysis.W0")
        return self


class SweepBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    parameter: SweepParameter = SweepParameter.K
    grid: List[float] = Field(default_factory=lambda: [0.0], min_length=1)

    @model_validator(mode="after")
    def _ascending(self) -> "SweepBlock":
        if any(later < earlier for earlier, later in zip(self.grid, self.grid[1:])):
            raise ValueError("sweep grid must be sorted ascending")
        return self


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    model: ModelBlock = ModelBlock()
    network: NetworkBlock = NetworkBlock()
    integrator: IntegratorSettings = IntegratorSettings()
    manifold: ManifoldBlock = ManifoldBlock()
    sections: SectionsBlock = SectionsBlock()
    analysis: AnalysisBlock = AnalysisBlock()
    sweep: SweepBlock = SweepBlock()
    output_dir: Optional[Path] = None

    @classmethod
    def from_file(cls, path: Path) -> "ExperimentConfig":
        """TOML or JSON, chosen by suffix."""
        if not path.exists():
            raise ArgumentError(f"config file {path} does not exist")
        suffix = path.suffix.lower()
        try:
            if suffix == ".toml":
                payload = tomllib.loads(path.read_text())
            elif suffix == ".json":
                payload = json.loads(path.read_text())
            else:
                raise ArgumentError(f"unsupported config format '{suffix}', use .toml or .json")
        except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
            raise ArgumentError(f"cannot parse {path}: {exc}") from exc
        try:
            config = cls.model_validate(payload)
        except ValidationError as exc:
            raise ArgumentError(f"invalid config {path}: {exc}") from exc
        logger.info(f"Loaded experiment config {path} ({config.config_hash[:12]})")
        return config

    @property
    def config_hash(self) -> str:
        return stable_hash(self.model_dump(mode="json", by_alias=True))

    def with_overrides(
        self,
        seed: Optional[int] = None,
        k: Optional[float] = None,
        grid: Optional[List[float]] = None,
        output_dir: Optional[Path] = None,
    ) -> "ExperimentConfig":
        """Copy with command-line overrides applied and re-validated."""
        payload = self.model_dump(mode="json", by_alias=True)
        if seed is not None:
            payload["model"]["seed"] = seed
        if k is not None:
            payload["network"]["k"] = k
            payload["analysis"]["k_mode"] = KMode.FIXED
        if grid is not None:
            payload["sweep"]["grid"] = grid
        if output_dir is not None:
            payload["output_dir"] = str(output_dir)
        try:
            return ExperimentConfig.model_validate(payload)
        except ValidationError as exc:
            raise ArgumentError(f"invalid override: {exc}") from exc
