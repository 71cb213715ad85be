import logging
from pathlib import Path
from typing import Annotated, Callable, List, Optional, TypeVar

import typer
from rich.console import Console
from rich.table import Table

from src.config import SETTINGS
from src.exceptions import AssumptionViolationError, CanardSyncError
from src.experiments.constants import PlotKind
from src.experiments.repository import ArtifactRepository
from src.experiments.schemas.artifacts import RunArtifact
from src.experiments.schemas.config import ExperimentConfig
from src.experiments.service import ExperimentService

logging.basicConfig(
    level=SETTINGS.LOG_LEVEL, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
)

logger = logging.getLogger(__name__)

app = typer.Typer(help="Canard-organized synchronization lab.", no_args_is_help=True)
console = Console()
error_console = Console(stderr=True)

T = TypeVar("T")

ConfigOption = Annotated[
    Path, typer.Option("--config", help="Experiment description (.toml or .json).")
]
SeedOption = Annotated[Optional[int], typer.Option("--seed", help="Overrides model.seed.")]
OutOption = Annotated[Optional[Path], typer.Option("--out", help="Base output directory.")]
KOption = Annotated[Optional[float], typer.Option("--k", help="Fixed coupling strength.")]
GridOption = Annotated[
    Optional[str], typer.Option("--grid", help="Comma-separated ascending sweep values.")
]

DEFAULT_CONFIG = Path("configs/reference.toml")


def _parse_grid(grid: Optional[str]) -> Optional[List[float]]:
    if grid is None:
        return None
    try:
        return [float(item) for item in grid.split(",") if item.strip()]
    except ValueError as exc:
        raise typer.BadParameter(f"--grid must be comma-separated numbers: {exc}") from exc


def _load(
    config_path: Path,
    seed: Optional[int],
    out: Optional[Path],
    k: Optional[float] = None,
    grid: Optional[str] = None,
) -> tuple[ExperimentConfig, ExperimentService]:
    config = ExperimentConfig.from_file(config_path).with_overrides(
        seed=seed, k=k, grid=_parse_grid(grid), output_dir=out
    )
    root = config.output_dir or SETTINGS.OUTPUT_DIR
    return config, ExperimentService(ArtifactRepository(root))


def _guard(action: Callable[[], T]) -> T:
    """Runs a command body; exit code 2 on assumption violations, 1 on other errors."""
    try:
        return action()
    except AssumptionViolationError as exc:
        error_console.print(f"[yellow]assumption violated:[/yellow] {exc.detail}")
        raise typer.Exit(code=exc.exit_code)
    except CanardSyncError as exc:
        error_console.print(f"[red]error:[/red] {exc.detail}")
        raise typer.Exit(code=exc.exit_code)


def _print_directory(artifact: RunArtifact) -> None:
    console.print(f"artifacts: {artifact.directory}")


@app.command()
def manifold(
    config: ConfigOption = DEFAULT_CONFIG,
    seed: SeedOption = None,
    out: OutOption = None,
):
    """Fast and slow charts, folds, canard and jump points per oscillator."""
    experiment, service = _guard(lambda: _load(config, seed, out))
    artifact = _guard(lambda: service.analyze_manifolds(experiment))
    table = Table(title="Canard and jump points")
    for column in ("oscillator", "sheets", "folds", "canard (x, y, z)", "jump (x, y)"):
        table.add_column(column)
    for geometry in artifact.geometries or []:
        canard, jump = geometry.canard, geometry.jump
        table.add_row(
            str(geometry.oscillator),
            str(len(geometry.charts)),
            str(len(geometry.folds)),
            f"({canard.x:.4f}, {canard.y:.4f}, {canard.z:.4f})",
            f"({jump.x:.4f}, {jump.y:.4f})",
        )
    console.print(table)
    _print_directory(artifact)


@app.command()
def linger(
    config: ConfigOption = DEFAULT_CONFIG,
    seed: SeedOption = None,
    out: OutOption = None,
):
    """Linger time per oscillator and the synchronization window."""
    experiment, service = _guard(lambda: _load(config, seed, out))
    artifact = _guard(lambda: service.compute_linger(experiment))
    report = artifact.linger
    table = Table(title="Linger times")
    for column in ("oscillator", "method", "t_linger", "t_linger_min", "error"):
        table.add_column(column)
    for entry in report.entries:
        table.add_row(
            str(entry.oscillator),
            str(entry.method),
            f"{entry.t_linger:.6g}",
            f"{report.t_min:.6g}",
            f"{entry.error_estimate:.1e}",
        )
    console.print(table)
    console.print(f"t_min = {report.t_min:.6g}")
    _print_directory(artifact)


@app.command()
def simulate(
    config: ConfigOption = DEFAULT_CONFIG,
    seed: SeedOption = None,
    out: OutOption = None,
    k: KOption = None,
):
    """Integrate the coupled network over the synchronization window."""
    experiment, service = _guard(lambda: _load(config, seed, out, k=k))
    artifact = _guard(lambda: service.simulate(experiment))
    trace = artifact.trace
    console.print(
        f"{len(trace)} samples, V_v(0)={trace.V_v[0]:.3e}, V_v(end)={trace.V_v[-1]:.3e}"
    )
    _print_directory(artifact)


@app.command()
def verify(
    config: ConfigOption = DEFAULT_CONFIG,
    seed: SeedOption = None,
    out: OutOption = None,
    k: KOption = None,
):
    """Full pipeline with the synchronization check."""
    experiment, service = _guard(lambda: _load(config, seed, out, k=k))
    artifact = _guard(lambda: service.run_experiment(experiment))
    report = artifact.verification
    table = Table(title=f"Verification: {report.status}")
    table.add_column("quantity")
    table.add_column("value")
    for name, value in (
        ("k", f"{report.k:.6g}"),
        ("k*", f"{report.k_star:.6g}"),
        (f"M ({report.m_source})", f"{report.M:.6g}"),
        ("W0", f"{report.W0:.3e}"),
        ("t_min", f"{report.t_min:.6g}"),
        ("V_v(delta*t_min)", f"{report.V_v_at_proof_time:.3e}"),
        ("V_v(t_min)", f"{report.V_v_at_t_min:.3e}"),
        ("envelope", str(report.envelope_status)),
        ("on branch until", f"{report.on_branch_until:.6g}"),
    ):
        table.add_row(name, value)
    console.print(table)
    _print_directory(artifact)
    if not report.valid:
        error_console.print(f"[yellow]invalid:[/yellow] {report.detail}")
        raise typer.Exit(code=AssumptionViolationError.exit_code)


@app.command()
def sweep(
    config: ConfigOption = DEFAULT_CONFIG,
    seed: SeedOption = None,
    out: OutOption = None,
    grid: GridOption = None,
):
    """Verified runs over the configured sweep parameter."""
    experiment, service = _guard(lambda: _load(config, seed, out, grid=grid))
    artifact = _guard(lambda: service.sweep(experiment))
    result = artifact.sweep
    table = Table(title=f"Sweep over {result.parameter}")
    for column in ("value", "k", "V_v(delta*t_min)", "V_v(t_min)", "pass", "error"):
        table.add_column(column)
    for row in result.rows:
        table.add_row(
            f"{row.value:.6g}",
            "" if row.k is None else f"{row.k:.6g}",
            "" if row.V_v_at_proof_time is None else f"{row.V_v_at_proof_time:.3e}",
            "" if row.V_v_at_t_min is None else f"{row.V_v_at_t_min:.3e}",
            "invalid" if not row.valid else str(row.passed),
            row.error or "",
        )
    console.print(table)
    if result.k_star is not None:
        console.print(f"k* = {result.k_star:.6g}, empirical onset = {result.k_empirical}")
    _print_directory(artifact)


@app.command("plot-data")
def plot_data(
    kind: Annotated[PlotKind, typer.Option("--kind", help="Plot data to emit.")],
    config: ConfigOption = DEFAULT_CONFIG,
    seed: SeedOption = None,
    out: OutOption = None,
    grid: GridOption = None,
):
    """Run the stages a plot needs and write its CSV."""
    experiment, service = _guard(lambda: _load(config, seed, out, grid=grid))

    def produce() -> Path:
        if kind == PlotKind.MANIFOLD_SLICE:
            artifact = service.analyze_manifolds(experiment)
        elif kind == PlotKind.PHASE_DIAGRAM:
            artifact = service.sweep_k(experiment)
        else:
            artifact = service.run_experiment(experiment)
        return service.emit_plot_data(artifact, kind)

    console.print(f"wrote {_guard(produce)}")


if __name__ == "__main__":
    app()
