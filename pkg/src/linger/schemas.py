from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.constants import StateColumn
from src.integrator.schemas import Section
from src.linger.constants import LingerMethod, SectionKind


class SectionOffsets(BaseModel):
    model_config = ConfigDict(frozen=True)

    delta_x: float = Field(gt=0.0)
    delta_y: float = Field(gt=0.0)
    delta_z: float = Field(gt=0.0)
    delta_x_prime: float = Field(gt=0.0)
    delta_y_prime: float = Field(gt=0.0)
    delta_z_prime: float = Field(gt=0.0)


class PoincareSection(Section):
    """Anchor plane restricted to a (y, z) window centred on S cap M."""

    kind: SectionKind
    y_center: float
    z_center: float
    y_half_width: float = Field(gt=0.0)
    z_half_width: float = Field(gt=0.0)
    phi_v: float
    phi_u: float

    @property
    def label(self) -> str:
        return str(self.kind)

    def windows(self) -> List[Tuple[StateColumn, float, float]]:
        return [
            (StateColumn.Y, self.y_center, self.y_half_width),
            (StateColumn.Z, self.z_center, self.z_half_width),
        ]

    def anchor_state(self) -> Tuple[float, float, float, float, float]:
        return (self.phi_v, self.phi_u, self.anchor, self.y_center, self.z_center)


class LingerEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    oscillator: int
    method: LingerMethod = LingerMethod.QUADRATURE
    t_linger: float = Field(gt=0.0)
    error_estimate: float = 0.0
    t_quadrature: Optional[float] = None
    y_range: Tuple[float, float]
    z: float

    @property
    def relative_gap(self) -> Optional[float]:
        """(t_linger - t_quadrature) / t_quadrature for measured passages."""
        if self.t_quadrature is None or self.method == LingerMethod.QUADRATURE:
            return None
        return (self.t_linger - self.t_quadrature) / self.t_quadrature


class LingerReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    method: LingerMethod
    entries: List[LingerEntry] = Field(min_length=1)
    sections: List[PoincareSection] = Field(default_factory=list)

    @model_validator(mode="after")
    def _ordered(self) -> "LingerReport":
        if [entry.oscillator for entry in self.entries] != sorted(
            entry.oscillator for entry in self.entries
        ):
            raise ValueError("linger entries must be ordered by oscillator")
        return self

    @property
    def times(self) -> List[float]:
        return [entry.t_linger for entry in self.entries]

    @property
    def t_min(self) -> float:
        return min(self.times)
