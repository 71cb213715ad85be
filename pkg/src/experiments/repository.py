import csv
import logging
from pathlib import Path
from typing import Iterable, List, Sequence

from src.experiments.constants import (
    CONFIG_FILE,
    LINGER_FILE,
    MANIFEST_FILE,
    MANIFOLD_DIR,
    PLOT_DIR,
    SWEEP_ROWS_DIR,
    SYNC_TRACE_FILE,
    TRAJECTORY_CACHE,
    TRAJECTORY_CSV,
    VERIFICATION_FILE,
    PlotKind,
)
from src.experiments.schemas.artifacts import RunManifest, SweepRow, SweepTable
from src.experiments.schemas.config import ExperimentConfig
from src.integrator.io import write_trajectory_cache, write_trajectory_csv
from src.integrator.trajectory import Trajectory
from src.linger.schemas import LingerReport
from src.manifolds.io import write_fast_chart_csv, write_points_json, write_slow_chart_csv
from src.manifolds.schemas import OscillatorGeometry
from src.sync.io import write_report_json, write_sync_trace_csv
from src.sync.schemas import SyncTrace, VerificationReport

logger = logging.getLogger(__name__)


def _cell(value: object) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


class ArtifactRepository:
    """Owns the on-disk layout of run directories under ``root``."""

    def __init__(self, root: Path):
        self.root = Path(root)

    def run_directory(self, config: ExperimentConfig, suffix: str = "") -> Path:
        name = f"run-{config.config_hash[:12]}-seed{config.model.seed}{suffix}"
        directory = self.root / name
        directory.mkdir(parents=True, exist_ok=True)
        return directory

    def _relative(self, directory: Path, path: Path) -> str:
        return path.relative_to(directory).as_posix()

    def write_config(self, directory: Path, config: ExperimentConfig) -> List[str]:
        path = directory / CONFIG_FILE
        path.write_text(config.model_dump_json(indent=2, by_alias=True))
        return [self._relative(directory, path)]

    def write_manifest(self, directory: Path, manifest: RunManifest) -> Path:
        path = directory / MANIFEST_FILE
        path.write_text(manifest.model_dump_json(indent=2))
        logger.debug(f"Manifest written to {path}")
        return path

    def read_manifest(self, directory: Path) -> RunManifest:
        return RunManifest.model_validate_json((directory / MANIFEST_FILE).read_text())

    def write_geometry(self, directory: Path, geometry: OscillatorGeometry) -> List[str]:
        base = directory / MANIFOLD_DIR
        index = geometry.oscillator
        paths = [
            write_fast_chart_csv(geometry.chart, base / f"fast_chart_{index}.csv"),
            write_slow_chart_csv(geometry.slow_chart, base / f"slow_chart_{index}.csv"),
            write_points_json(
                base / f"points_{index}.json", geometry.folds, geometry.canard, geometry.jump
            ),
        ]
        return [self._relative(directory, path) for path in paths]

    def write_linger(self, directory: Path, report: LingerReport) -> List[str]:
        path = directory / LINGER_FILE
        path.write_text(report.model_dump_json(indent=2))
        return [self._relative(directory, path)]

    def write_trajectory(self, directory: Path, trajectory: Trajectory) -> List[str]:
        paths = [
            write_trajectory_csv(trajectory, directory / TRAJECTORY_CSV),
            write_trajectory_cache(trajectory, directory / TRAJECTORY_CACHE),
        ]
        return [self._relative(directory, path) for path in paths]

    def write_trace(self, directory: Path, trace: SyncTrace) -> List[str]:
        path = write_sync_trace_csv(trace, directory / SYNC_TRACE_FILE)
        return [self._relative(directory, path)]

    def write_verification(self, directory: Path, report: VerificationReport) -> List[str]:
        path = write_report_json(report, directory / VERIFICATION_FILE)
        return [self._relative(directory, path)]

    def sweep_row_path(self, directory: Path, index: int) -> Path:
        return directory / SWEEP_ROWS_DIR / f"row_{index:03d}.json"

    def write_sweep_row(self, directory: Path, index: int, row: SweepRow) -> str:
        """Written by the worker that computed the row; returns the run-relative name."""
        path = self.sweep_row_path(directory, index)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(row.model_dump_json(indent=2))
        return self._relative(directory, path)

    def read_sweep_row(self, directory: Path, name: str) -> SweepRow:
        return SweepRow.model_validate_json((directory / name).read_text())

    def write_sweep(self, directory: Path, table: SweepTable) -> List[str]:
        path = directory / f"sweep_{table.parameter}.csv"
        fields = list(SweepRow.model_fields)
        self._write_csv(
            path,
            fields,
            ([getattr(row, name) for name in fields] for row in table.rows),
        )
        summary = directory / f"sweep_{table.parameter}.json"
        summary.write_text(table.model_dump_json(indent=2))
        return [self._relative(directory, path), self._relative(directory, summary)]

    def write_plot(
        self,
        directory: Path,
        kind: PlotKind,
        header: Sequence[str],
        rows: Iterable[Sequence[object]],
    ) -> Path:
        path = directory / PLOT_DIR / f"{kind}.csv"
        self._write_csv(path, header, rows)
        return path

    def _write_csv(
        self, path: Path, header: Sequence[str], rows: Iterable[Sequence[object]]
    ) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(header)
            for row in rows:
                writer.writerow([_cell(value) for value in row])
