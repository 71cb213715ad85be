import logging
import math
import platform
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pydantic
import scipy

from src.config import SETTINGS
from src.dynamics.constants import BoundSource
from src.dynamics.models import ModelDefinition, ModelHandler
from src.dynamics.schemas import HeterogeneityBound, NetworkState, OscillatorParams
from src.dynamics.service import NetworkDynamics, draw_parameters
from src.exceptions import ArgumentError, CanardSyncError, DependencyError, ManifoldError
from src.experiments.constants import (
    PLOT_COLUMNS,
    BoundMode,
    KMode,
    PlotKind,
    Stage,
    StageStatus,
    SweepParameter,
)
from src.experiments.repository import ArtifactRepository
from src.experiments.schemas.artifacts import (
    RunArtifact,
    RunManifest,
    StageRecord,
    SweepRow,
    SweepTable,
)
from src.experiments.schemas.config import ExperimentConfig
from src.integrator.service import integrate
from src.integrator.trajectory import Trajectory
from src.linger.constants import SectionKind
from src.linger.schemas import LingerReport
from src.linger.service import compute_linger_report
from src.manifolds.schemas import OscillatorGeometry
from src.manifolds.service import BranchClassifier, analyze_oscillator
from src.sync.config import SYNC_SETTINGS
from src.sync.constants import EvaluationPoint
from src.sync.schemas import SyncTrace, ThresholdInputs, VerificationReport
from src.sync.service import (
    attach_identity_check,
    check_variance_identity,
    measure_heterogeneity,
    sync_trace,
    threshold_breakdown,
    variance,
    verify_theorem,
)
from src.utils import ArraySchema, make_rng

logger = logging.getLogger(__name__)

JITTER_STREAM = 1


def _now() -> datetime:
    return datetime.now(timezone.utc)


def _versions() -> dict[str, str]:
    return {
        "canard-sync": SETTINGS.APP_VERSION,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pydantic": pydantic.VERSION,
    }


class RunContext(ArraySchema):
    """Prepared network shared by every verification run of one configuration."""

    config: ExperimentConfig
    model: ModelDefinition
    params: List[OscillatorParams]
    geometries: List[OscillatorGeometry]
    linger: LingerReport
    initial: NetworkState
    bound: Optional[HeterogeneityBound] = None

    @property
    def classifier(self) -> BranchClassifier:
        return BranchClassifier([geometry.charts for geometry in self.geometries])


def build_network(config: ExperimentConfig) -> Tuple[ModelDefinition, List[OscillatorParams]]:
    model = ModelHandler.build(config.model.id, config.model.coefficients)
    params = draw_parameters(config.network.n_oscillators, config.model.spread, config.model.seed)
    return model, params


def analyze_network(
    config: ExperimentConfig, model: ModelDefinition, params: Sequence[OscillatorParams]
) -> List[OscillatorGeometry]:
    block = config.manifold
    return [
        analyze_oscillator(
            model,
            params[oscillator],
            block.region,
            block.grid,
            oscillator=oscillator,
            window=block.window,
            index=block.canard_index,
        )
        for oscillator in range(len(params))
    ]


def initial_state(
    config: ExperimentConfig,
    params: Sequence[OscillatorParams],
    linger: LingerReport,
) -> NetworkState:
    """Explicit rows, or each oscillator at its entry anchor on S cap M with seeded v-jitter.

    The entry window is centred where the linger quadrature begins.
    """
    if config.network.initial_states is not None:
        return NetworkState(t=0.0, states=config.network.initial_states)
    entries = {
        section.oscillator: section
        for section in linger.sections
        if section.kind == SectionKind.ENTRY
    }
    jitter = make_rng(config.model.seed, JITTER_STREAM).uniform(
        -config.analysis.jitter, config.analysis.jitter, size=len(params)
    )
    rows = []
    for oscillator in range(len(params)):
        if oscillator not in entries:
            raise ManifoldError(f"oscillator {oscillator} has no entry section")
        v, u, x, y, z = entries[oscillator].anchor_state()
        rows.append([v + float(jitter[oscillator]), u, x, y, z])
    return NetworkState(t=0.0, states=rows)


def pilot_bound(
    config: ExperimentConfig,
    model: ModelDefinition,
    params: Sequence[OscillatorParams],
    initial: NetworkState,
    t_min: float,
) -> HeterogeneityBound:
    """M measured on an uncoupled run over the synchronization window."""
    scales = config.model.scales
    dynamics = NetworkDynamics(model, config.network.network(k=0.0), scales, params)
    trajectory, _ = integrate(dynamics, initial, (initial.t, initial.t + t_min), config.integrator)
    return measure_heterogeneity(model, params, trajectory, scales)


def threshold_inputs(
    config: ExperimentConfig,
    initial: NetworkState,
    t_min: float,
    bound: Optional[HeterogeneityBound],
) -> Tuple[ThresholdInputs, BoundSource]:
    analysis = config.analysis
    if analysis.m_mode == BoundMode.USER:
        M, source = float(analysis.M), BoundSource.USER
    elif bound is not None:
        M, source = bound.M, BoundSource.MEASURED
    else:
        raise DependencyError(Stage.PILOT, "a measured heterogeneity bound")
    if analysis.w0_mode == BoundMode.USER:
        W0 = float(analysis.W0)
    else:
        W0 = math.sqrt(variance(initial)[0])
    inputs = ThresholdInputs(
        M=M,
        eps_tol=analysis.eps_tol,
        delta=config.model.delta,
        t_min=t_min,
        W0=W0,
        T=analysis.T,
    )
    return inputs, source


def resolve_coupling(config: ExperimentConfig, inputs: Optional[ThresholdInputs]) -> float:
    if config.analysis.k_mode == KMode.FIXED:
        return config.network.k
    if inputs is None:
        raise DependencyError(Stage.PILOT, "k_mode 'threshold_multiple'")
    return config.analysis.k_factor * threshold_breakdown(inputs).k_star


def prepare_context(config: ExperimentConfig) -> RunContext:
    model, params = build_network(config)
    geometries = analyze_network(config, model, params)
    linger = compute_linger_report(
        model,
        params,
        config.model.scales,
        geometries,
        config.sections.offsets,
        method=config.analysis.linger_method,
        settings=config.integrator,
    )
    initial = initial_state(config, params, linger)
    bound = None
    if config.analysis.m_mode == BoundMode.MEASURED:
        bound = pilot_bound(config, model, params, initial, linger.t_min)
    return RunContext(
        config=config,
        model=model,
        params=params,
        geometries=geometries,
        linger=linger,
        initial=initial,
        bound=bound,
    )


def _window_value(row: SweepRow) -> Optional[float]:
    if SYNC_SETTINGS.PASS_POINT == EvaluationPoint.THEOREM:
        return row.V_v_at_t_min
    return row.V_v_at_proof_time


def _row_from_report(value: float, report: VerificationReport) -> SweepRow:
    return SweepRow(
        value=value,
        k=report.k,
        k_star=report.k_star,
        M=report.M,
        V_v_at_proof_time=report.V_v_at_proof_time,
        V_v_at_t_min=report.V_v_at_t_min,
        valid=report.valid,
        passed=report.passed,
    )


def verify_context(
    context: RunContext, k: Optional[float] = None
) -> Tuple[VerificationReport, Trajectory, SyncTrace]:
    config = context.config
    inputs, source = threshold_inputs(config, context.initial, context.linger.t_min, context.bound)
    coupling = resolve_coupling(config, inputs) if k is None else k
    return verify_theorem(
        context.model,
        config.network.network(k=coupling),
        config.model.scales,
        context.params,
        inputs,
        config.integrator,
        initial=context.initial,
        classifier=context.classifier,
        m_source=source,
    )


def _k_row(
    context: RunContext, k: float, repository: ArtifactRepository, directory: Path, index: int
) -> str:
    try:
        report, _, _ = verify_context(context, k)
        row = _row_from_report(k, report)
    except CanardSyncError as exc:
        logger.warning(f"Sweep row k={k:.6g} failed: {exc.detail}")
        row = SweepRow(value=k, k=k, error=exc.detail)
    return repository.write_sweep_row(directory, index, row)


def _spread_row(
    config: ExperimentConfig, spread: float, repository: ArtifactRepository, directory: Path, index: int
) -> str:
    payload = config.model_dump(mode="json", by_alias=True)
    payload["model"]["spread"] = spread
    try:
        context = prepare_context(ExperimentConfig.model_validate(payload))
        report, _, _ = verify_context(context)
        row = _row_from_report(spread, report)
    except CanardSyncError as exc:
        logger.warning(f"Sweep row spread={spread:.6g} failed: {exc.detail}")
        row = SweepRow(value=spread, error=exc.detail)
    return repository.write_sweep_row(directory, index, row)


def _map_rows(function: Callable[..., str], tasks: Sequence[tuple]) -> List[str]:
    """Row files in task order; a process pool is used when SWEEP_WORKERS > 1.

    Every worker writes its own row file, so the parent only merges.
    """
    workers = min(SETTINGS.SWEEP_WORKERS, len(tasks))
    if workers <= 1:
        return [function(*task) for task in tasks]
    logger.info(f"Running {len(tasks)} sweep rows on {workers} workers")
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(function, *zip(*tasks)))


def _check_grid(grid: Sequence[float]) -> List[float]:
    values = [float(value) for value in grid]
    if not values:
        raise ArgumentError("sweep grid is empty")
    if any(later < earlier for earlier, later in zip(values, values[1:])):
        raise ArgumentError("sweep grid must be sorted ascending")
    return values


class _RunState:
    """Mutable record of one pipeline invocation; becomes a RunArtifact at the end."""

    def __init__(self, directory: Path, config: ExperimentConfig):
        self.directory = directory
        self.manifest = RunManifest(
            config_hash=config.config_hash,
            seed=config.model.seed,
            versions=_versions(),
            started_at=_now(),
        )
        self.parts: dict[str, object] = {}

    @contextmanager
    def stage(self, stage: Stage) -> Iterator[List[str]]:
        started = _now()
        files: List[str] = []
        logger.info(f"Stage {stage} started")
        try:
            yield files
        except Exception as exc:
            detail = exc.detail if isinstance(exc, CanardSyncError) else str(exc)
            self.manifest.stages.append(
                StageRecord(
                    stage=stage,
                    status=StageStatus.FAILED,
                    started_at=started,
                    finished_at=_now(),
                    files=files,
                    error=detail,
                    error_type=type(exc).__name__,
                )
            )
            logger.error(f"Stage {stage} failed: {detail}")
            raise
        self.manifest.stages.append(
            StageRecord(
                stage=stage,
                status=StageStatus.COMPLETED,
                started_at=started,
                finished_at=_now(),
                files=files,
            )
        )
        logger.info(f"Stage {stage} finished")

    def artifact(self) -> RunArtifact:
        return RunArtifact(directory=self.directory, manifest=self.manifest, **self.parts)


class ExperimentService:
    def __init__(self, repository: ArtifactRepository):
        self.repository = repository

    @contextmanager
    def _run(self, config: ExperimentConfig, suffix: str = "") -> Iterator[_RunState]:
        state = _RunState(self.repository.run_directory(config, suffix), config)
        try:
            yield state
        finally:
            state.manifest.finished_at = _now()
            self.repository.write_manifest(state.directory, state.manifest)

    def _stage_geometry(
        self, config: ExperimentConfig, state: _RunState
    ) -> Tuple[ModelDefinition, List[OscillatorParams], List[OscillatorGeometry]]:
        with state.stage(Stage.CONFIG) as files:
            files += self.repository.write_config(state.directory, config)
            model, params = build_network(config)
        with state.stage(Stage.MANIFOLD) as files:
            geometries = analyze_network(config, model, params)
            for geometry in geometries:
                files += self.repository.write_geometry(state.directory, geometry)
        state.parts["geometries"] = geometries
        return model, params, geometries

    def _stage_linger(
        self,
        config: ExperimentConfig,
        state: _RunState,
        model: ModelDefinition,
        params: List[OscillatorParams],
        geometries: List[OscillatorGeometry],
    ) -> LingerReport:
        with state.stage(Stage.LINGER) as files:
            linger = compute_linger_report(
                model,
                params,
                config.model.scales,
                geometries,
                config.sections.offsets,
                method=config.analysis.linger_method,
                settings=config.integrator,
            )
            files += self.repository.write_linger(state.directory, linger)
        state.parts["linger"] = linger
        return linger

    def _stage_context(
        self, config: ExperimentConfig, state: _RunState, with_pilot: bool
    ) -> RunContext:
        """Geometry, linger, initial state and, when M is measured, the pilot run."""
        model, params, geometries = self._stage_geometry(config, state)
        linger = self._stage_linger(config, state, model, params, geometries)
        with state.stage(Stage.INITIAL):
            initial = initial_state(config, params, linger)
        bound = None
        if with_pilot and config.analysis.m_mode == BoundMode.MEASURED:
            with state.stage(Stage.PILOT):
                bound = pilot_bound(config, model, params, initial, linger.t_min)
            state.parts["bound"] = bound
        return RunContext(
            config=config,
            model=model,
            params=params,
            geometries=geometries,
            linger=linger,
            initial=initial,
            bound=bound,
        )

    def analyze_manifolds(self, config: ExperimentConfig) -> RunArtifact:
        with self._run(config) as state:
            self._stage_geometry(config, state)
        return state.artifact()

    def compute_linger(self, config: ExperimentConfig) -> RunArtifact:
        with self._run(config) as state:
            model, params, geometries = self._stage_geometry(config, state)
            self._stage_linger(config, state, model, params, geometries)
        return state.artifact()

    def simulate(self, config: ExperimentConfig) -> RunArtifact:
        """Coupled run from the configured initial state over the synchronization window."""
        threshold_mode = config.analysis.k_mode == KMode.THRESHOLD_MULTIPLE
        with self._run(config) as state:
            context = self._stage_context(config, state, with_pilot=threshold_mode)
            with state.stage(Stage.SIMULATE) as files:
                inputs = None
                if threshold_mode:
                    inputs, _ = threshold_inputs(
                        config, context.initial, context.linger.t_min, context.bound
                    )
                k = resolve_coupling(config, inputs)
                dynamics = NetworkDynamics(
                    context.model, config.network.network(k=k), config.model.scales, context.params
                )
                start = context.initial.t
                trajectory, _ = integrate(
                    dynamics,
                    context.initial,
                    (start, start + context.linger.t_min),
                    config.integrator,
                )
                trace = sync_trace(trajectory)
                files += self.repository.write_trajectory(state.directory, trajectory)
                files += self.repository.write_trace(state.directory, trace)
            state.parts.update(trajectory=trajectory, trace=trace)
        return state.artifact()

    def run_experiment(self, config: ExperimentConfig) -> RunArtifact:
        """manifold -> sections -> linger -> simulate -> verify, with every artifact on disk."""
        with self._run(config) as state:
            context = self._stage_context(config, state, with_pilot=True)
            with state.stage(Stage.SIMULATE) as files:
                report, trajectory, trace = verify_context(context)
                files += self.repository.write_trajectory(state.directory, trajectory)
            with state.stage(Stage.VERIFY) as files:
                check = check_variance_identity(
                    trajectory,
                    context.model,
                    config.network.network(k=report.k),
                    config.model.scales,
                    context.params,
                    M=report.envelope_M,
                )
                trace = attach_identity_check(trace, check)
                files += self.repository.write_trace(state.directory, trace)
                files += self.repository.write_verification(state.directory, report)
            state.parts.update(trajectory=trajectory, trace=trace, verification=report)
        return state.artifact()

    def sweep_k(self, config: ExperimentConfig, grid: Optional[Sequence[float]] = None) -> RunArtifact:
        """One verified run per k with shared parameters and initial state."""
        values = _check_grid(config.sweep.grid if grid is None else grid)
        with self._run(config, suffix="-sweep-k") as state:
            context = self._stage_context(config, state, with_pilot=True)
            with state.stage(Stage.SWEEP) as files:
                names = _map_rows(
                    _k_row,
                    [
                        (context, k, self.repository, state.directory, index)
                        for index, k in enumerate(values)
                    ],
                )
                files += names
                rows = [self.repository.read_sweep_row(state.directory, name) for name in names]
                inputs, _ = threshold_inputs(
                    config, context.initial, context.linger.t_min, context.bound
                )
                passing = [row.value for row in rows if row.passed]
                table = SweepTable(
                    parameter=SweepParameter.K,
                    rows=rows,
                    k_star=threshold_breakdown(inputs).k_star,
                    k_empirical=min(passing) if passing else None,
                )
                files += self.repository.write_sweep(state.directory, table)
            state.parts["sweep"] = table
        logger.info(f"k-sweep: k*={table.k_star:.6g}, empirical onset {table.k_empirical}")
        return state.artifact()

    def sweep_spread(
        self, config: ExperimentConfig, grid: Optional[Sequence[float]] = None
    ) -> RunArtifact:
        """Full preparation and verification per heterogeneity spread."""
        values = _check_grid(config.sweep.grid if grid is None else grid)
        if values[0] < 0.0:
            raise ArgumentError("spread values must be non-negative")
        with self._run(config, suffix="-sweep-spread") as state:
            with state.stage(Stage.CONFIG) as files:
                files += self.repository.write_config(state.directory, config)
            with state.stage(Stage.SWEEP) as files:
                names = _map_rows(
                    _spread_row,
                    [
                        (config, spread, self.repository, state.directory, index)
                        for index, spread in enumerate(values)
                    ],
                )
                files += names
                rows = [self.repository.read_sweep_row(state.directory, name) for name in names]
                table = SweepTable(parameter=SweepParameter.SPREAD, rows=rows)
                files += self.repository.write_sweep(state.directory, table)
            state.parts["sweep"] = table
        return state.artifact()

    def sweep(self, config: ExperimentConfig, grid: Optional[Sequence[float]] = None) -> RunArtifact:
        if config.sweep.parameter == SweepParameter.SPREAD:
            return self.sweep_spread(config, grid)
        return self.sweep_k(config, grid)

    def emit_plot_data(self, artifact: RunArtifact, kind: PlotKind) -> Path:
        """Plain CSV for one plot kind, recorded in the run's manifest."""
        started = _now()
        rows = self._plot_rows(artifact, kind)
        path = self.repository.write_plot(artifact.directory, kind, PLOT_COLUMNS[kind], rows)
        artifact.manifest.stages.append(
            StageRecord(
                stage=Stage.PLOT,
                status=StageStatus.COMPLETED,
                started_at=started,
                finished_at=_now(),
                files=[path.relative_to(artifact.directory).as_posix()],
            )
        )
        self.repository.write_manifest(artifact.directory, artifact.manifest)
        return path

    def _plot_rows(self, artifact: RunArtifact, kind: PlotKind) -> List[list]:
        if kind == PlotKind.SYNC_TRACE:
            trace = artifact.trace
            if trace is None:
                raise DependencyError(Stage.SIMULATE, f"plot '{kind}'")
            envelope = trace.envelope
            return [
                [
                    float(trace.times[index]),
                    float(trace.V_v[index]),
                    float(trace.W[index]),
                    None if envelope is None else float(envelope[index]),
                ]
                for index in range(len(trace))
            ]
        if kind == PlotKind.PHASE_DIAGRAM:
            if artifact.sweep is None:
                raise DependencyError(Stage.SWEEP, f"plot '{kind}'")
            return [[row.k, _window_value(row), row.passed] for row in artifact.sweep.rows]
        if not artifact.geometries:
            raise DependencyError(Stage.MANIFOLD, f"plot '{kind}'")
        return _manifold_slice(artifact.geometries[0])


def _manifold_slice(geometry: OscillatorGeometry) -> List[list]:
    """v on the attracting and the nearest repelling sheet along x at the canard's (y, z) node."""
    reference = geometry.chart
    j = int(np.argmin(np.abs(reference.ys - geometry.canard.y)))
    k = int(np.argmin(np.abs(reference.zs - geometry.canard.z)))
    rows = []
    for i, x in enumerate(reference.xs):
        attracting: Optional[float] = None
        repelling: Optional[float] = None
        for chart in geometry.charts:
            if not chart.present[i, j, k]:
                continue
            v = float(chart.phi_v[i, j, k])
            if chart.attracting[i, j, k]:
                attracting = v if attracting is None else min(attracting, v)
            else:
                repelling = v if repelling is None else min(repelling, v)
        rows.append([float(x), attracting, repelling])
    return rows
