from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.manifolds.constants import Branch
from src.utils import ArraySchema, FloatArray

Interval = Tuple[float, float]


class Region(BaseModel):
    """Box over the non-fast coordinates (x, y, z)."""

    model_config = ConfigDict(frozen=True)

    x: Interval
    y: Interval
    z: Interval

    @model_validator(mode="after")
    def _ordered(self) -> "Region":
        for name, (low, high) in (("x", self.x), ("y", self.y), ("z", self.z)):
            if high < low:
                raise ValueError(f"region {name}-range is reversed: ({low}, {high})")
        return self


class ChartGrid(BaseModel):
    model_config = ConfigDict(frozen=True)

    nx: int = Field(default=41, ge=2)
    ny: int = Field(default=15, ge=2)
    nz: int = Field(default=3, ge=2)

    def axes(self, region: Region) -> Tuple[FloatArray, FloatArray, FloatArray]:
        return (
            np.linspace(region.x[0], region.x[1], self.nx),
            np.linspace(region.y[0], region.y[1], self.ny),
            np.linspace(region.z[0], region.z[1], self.nz),
        )

    def refined(self, factor: int = 2) -> "ChartGrid":
        """Keeps every existing node and adds factor - 1 nodes per cell."""
        return ChartGrid(
            nx=(self.nx - 1) * factor + 1,
            ny=(self.ny - 1) * factor + 1,
            nz=(self.nz - 1) * factor + 1,
        )


class SearchWindow(BaseModel):
    """Closed (y, z) box restricting canard candidates."""

    model_config = ConfigDict(frozen=True)

    y: Optional[Interval] = None
    z: Optional[Interval] = None

    def contains(self, y: float, z: float, slack: float = 1e-12) -> bool:
        for value, interval in ((y, self.y), (z, self.z)):
            if interval is not None and not (
                interval[0] - slack <= value <= interval[1] + slack
            ):
                return False
        return True


class FastManifoldChart(ArraySchema):
    """One sheet of S over the (x, y, z) grid; NaN where the sheet is absent."""

    oscillator: int
    sheet: int
    xs: np.ndarray
    ys: np.ndarray
    zs: np.ndarray
    phi_v: np.ndarray
    phi_u: np.ndarray
    attracting: np.ndarray
    residual: np.ndarray
    holes: List[Tuple[int, int, int]] = Field(default_factory=list)

    @property
    def present(self) -> FloatArray:
        return np.isfinite(self.phi_v)

    @property
    def node_count(self) -> int:
        return int(np.count_nonzero(self.present))

    @property
    def attracting_fraction(self) -> float:
        count = self.node_count
        return 0.0 if count == 0 else float(np.count_nonzero(self.attracting & self.present)) / count

    def label(self, i: int, j: int, k: int) -> Optional[Branch]:
        if not self.present[i, j, k]:
            return None
        return Branch.ATTRACTING if self.attracting[i, j, k] else Branch.REPELLING

    def nodes(self) -> Tuple[FloatArray, FloatArray]:
        """Present nodes as (K, 5) points (v, u, x, y, z) with attracting flags."""
        X, Y, Z = np.meshgrid(self.xs, self.ys, self.zs, indexing="ij")
        mask = self.present
        points = np.column_stack(
            [self.phi_v[mask], self.phi_u[mask], X[mask], Y[mask], Z[mask]]
        )
        return points, self.attracting[mask]


class SlowManifoldChart(ArraySchema):
    """Intersection of M with one fast sheet, tabulated over (y, z)."""

    oscillator: int
    sheet: int
    ys: np.ndarray
    zs: np.ndarray
    psi_v: np.ndarray
    psi_u: np.ndarray
    psi_x: np.ndarray
    attracting: np.ndarray
    residual: np.ndarray
    min_abs_dfdx: float

    @property
    def present(self) -> FloatArray:
        return np.isfinite(self.psi_x)

    @property
    def y_range(self) -> Interval:
        return float(self.ys[0]), float(self.ys[-1])

    @property
    def z_range(self) -> Interval:
        return float(self.zs[0]), float(self.zs[-1])


class FoldPoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    v: float
    u: float
    x: float
    y: float
    z: float
    oscillator: int = 0

    def as_array(self) -> FloatArray:
        return np.array([self.v, self.u, self.x, self.y, self.z])


class CanardPoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    v: float
    u: float
    x: float
    y: float
    z: float
    oscillator: int = 0
    fold_distance: float
    branch: Branch = Branch.ATTRACTING

    def as_array(self) -> FloatArray:
        return np.array([self.v, self.u, self.x, self.y, self.z])


class OscillatorGeometry(ArraySchema):
    """Everything the linger analysis needs for one oscillator."""

    oscillator: int
    charts: List[FastManifoldChart]
    chart_index: int
    folds: List[FoldPoint]
    slow_chart: SlowManifoldChart
    canard: CanardPoint
    jump: FoldPoint

    @property
    def chart(self) -> FastManifoldChart:
        return self.charts[self.chart_index]
