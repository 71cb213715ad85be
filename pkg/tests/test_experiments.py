import numpy as np
import pytest

from src.constants import StateColumn
from src.exceptions import ArgumentError, CanardNotFoundError, DependencyError
from src.experiments.constants import (
    LINGER_FILE,
    MANIFEST_FILE,
    SWEEP_ROWS_DIR,
    TRAJECTORY_CSV,
    KMode,
    PlotKind,
    Stage,
    StageStatus,
)
from src.experiments.repository import ArtifactRepository
from src.experiments.schemas.artifacts import SweepRow
from src.experiments.schemas.config import ExperimentConfig
from src.experiments.service import ExperimentService, prepare_context
from src.linger.constants import LingerMethod, SectionKind
from tests.conftest import REFERENCE_CONFIG


def test_reference_config_loads():
    config = ExperimentConfig.from_file(REFERENCE_CONFIG)

    assert config.network.n_oscillators == 10
    assert config.model.seed == 7
    assert config.model.coefficients["e1"] == 2.5
    assert config.analysis.k_mode == KMode.THRESHOLD_MULTIPLE
    assert config.manifold.grid.nx == 41


def test_json_config_matches_toml(tmp_path):
    config = ExperimentConfig.from_file(REFERENCE_CONFIG)
    path = tmp_path / "reference.json"
    path.write_text(config.model_dump_json(by_alias=True))

    again = ExperimentConfig.from_file(path)

    assert again == config
    assert again.config_hash == config.config_hash


@pytest.mark.parametrize(
    "name, content",
    [
        ("config.yaml", "model: {}"),
        ("extra.toml", "[model]\nbogus = 1\n"),
        ("user_bound.toml", "[analysis]\nm_mode = \"user\"\n"),
        ("broken.toml", "[model\n"),
    ],
)
def test_bad_config_files_are_argument_errors(tmp_path, name, content):
    path = tmp_path / name
    path.write_text(content)

    with pytest.raises(ArgumentError):
        ExperimentConfig.from_file(path)


def test_missing_config_file(tmp_path):
    with pytest.raises(ArgumentError):
        ExperimentConfig.from_file(tmp_path / "absent.toml")


def test_overrides(small_config):
    reseeded = small_config.with_overrides(seed=4)
    coupled = ExperimentConfig.from_file(REFERENCE_CONFIG).with_overrides(k=5.0)

    assert reseeded.model.seed == 4
    assert reseeded.config_hash != small_config.config_hash
    assert coupled.network.k == 5.0
    assert coupled.analysis.k_mode == KMode.FIXED
    with pytest.raises(ArgumentError):
        small_config.with_overrides(grid=[2.0, 1.0])


def test_manifold_stage_writes_geometry(experiment_service, small_config):
    artifact = experiment_service.analyze_manifolds(small_config)

    assert [geometry.oscillator for geometry in artifact.geometries] == [0, 1]
    assert [record.stage for record in artifact.manifest.stages] == [Stage.CONFIG, Stage.MANIFOLD]
    assert all(record.status == StageStatus.COMPLETED for record in artifact.manifest.stages)
    for name in artifact.manifest.files:
        assert (artifact.directory / name).is_file()
    assert (artifact.directory / MANIFEST_FILE).is_file()


def test_manifold_slice_plot(experiment_service, small_config):
    artifact = experiment_service.analyze_manifolds(small_config)

    path = experiment_service.emit_plot_data(artifact, PlotKind.MANIFOLD_SLICE)

    lines = path.read_text().splitlines()
    assert lines[0] == "x,v_attracting,v_repelling"
    assert len(lines) == 1 + small_config.manifold.grid.nx
    manifest = experiment_service.repository.read_manifest(artifact.directory)
    assert manifest.stages[-1].stage == Stage.PLOT


@pytest.mark.parametrize("kind", [PlotKind.SYNC_TRACE, PlotKind.PHASE_DIAGRAM])
def test_plots_need_their_stage(experiment_service, small_config, kind):
    artifact = experiment_service.analyze_manifolds(small_config)

    with pytest.raises(DependencyError):
        experiment_service.emit_plot_data(artifact, kind)


def test_failed_stage_is_recorded(experiment_service, small_config):
    payload = small_config.model_dump(mode="json", by_alias=True)
    payload["manifold"]["window"] = {"y": [0.7, 0.8], "z": [0.0, 0.0]}
    config = ExperimentConfig.model_validate(payload)

    with pytest.raises(CanardNotFoundError):
        experiment_service.analyze_manifolds(config)

    manifest = experiment_service.repository.read_manifest(
        experiment_service.repository.run_directory(config)
    )
    assert manifest.failed_stage == Stage.MANIFOLD
    assert manifest.stages[-1].error_type == "CanardNotFoundError"
    assert manifest.finished_at is not None


def test_linger_stage(experiment_service, small_config):
    artifact = experiment_service.compute_linger(small_config)

    assert len(artifact.linger.entries) == 2
    assert artifact.linger.t_min > 0.0
    assert len(artifact.linger.sections) == 4
    assert (artifact.directory / LINGER_FILE).is_file()


@pytest.mark.parametrize("grid", [[], [1.0, 0.0]])
def test_sweep_grid_is_checked_before_running(experiment_service, small_config, grid):
    with pytest.raises(ArgumentError):
        experiment_service.sweep_k(small_config, grid)
    assert not experiment_service.repository.root.exists()


def test_negative_spread_is_rejected(experiment_service, small_config):
    with pytest.raises(ArgumentError):
        experiment_service.sweep_spread(small_config, [-0.1, 0.0])


@pytest.mark.slow
def test_simulation_is_reproducible(tmp_path, small_config):
    first = ExperimentService(ArtifactRepository(tmp_path / "a")).simulate(small_config)
    second = ExperimentService(ArtifactRepository(tmp_path / "b")).simulate(small_config)

    assert (first.directory / TRAJECTORY_CSV).read_bytes() == (second.directory / TRAJECTORY_CSV).read_bytes()
    assert first.trajectory.t_end == pytest.approx(first.linger.t_min)


@pytest.mark.slow
def test_single_oscillator_never_desynchronizes(experiment_service, small_config):
    payload = small_config.model_dump(mode="json", by_alias=True)
    payload["network"]["N"] = 1
    config = ExperimentConfig.model_validate(payload)

    artifact = experiment_service.run_experiment(config)

    assert artifact.verification.V_v_at_t_min == 0.0
    assert artifact.verification.W_initial == 0.0
    assert float(artifact.trace.V_v.max()) == 0.0
    stages = [record.stage for record in artifact.manifest.stages]
    assert stages == [
        Stage.CONFIG,
        Stage.MANIFOLD,
        Stage.LINGER,
        Stage.INITIAL,
        Stage.SIMULATE,
        Stage.VERIFY,
    ]


def test_initial_state_sits_on_the_entry_anchors(small_config):
    context = prepare_context(small_config)

    entries = [section for section in context.linger.sections if section.kind == SectionKind.ENTRY]
    for row, section, linger in zip(context.initial.states, entries, context.linger.entries):
        anchor = np.array(section.anchor_state())
        assert abs(row[StateColumn.V] - anchor[StateColumn.V]) <= small_config.analysis.jitter
        np.testing.assert_array_equal(row[1:], anchor[1:])
        # the window centre is where the quadrature starts
        assert section.y_center == pytest.approx(linger.y_range[0], abs=1e-8)


def test_empirical_linger_method_from_config(experiment_service, small_config):
    payload = small_config.model_dump(mode="json", by_alias=True)
    payload["analysis"]["linger_method"] = "empirical"
    config = ExperimentConfig.model_validate(payload)

    artifact = experiment_service.compute_linger(config)

    assert artifact.linger.method == LingerMethod.EMPIRICAL
    for entry in artifact.linger.entries:
        assert entry.method == LingerMethod.EMPIRICAL
        assert entry.t_quadrature is not None
        assert abs(entry.relative_gap) < 0.25


def test_sweep_row_files_round_trip(tmp_path):
    repository = ArtifactRepository(tmp_path)
    row = SweepRow(value=2.0, k=2.0, k_star=1.5, M=0.1, V_v_at_t_min=1e-5, valid=True, passed=True)

    name = repository.write_sweep_row(tmp_path, 3, row)

    assert name == f"{SWEEP_ROWS_DIR}/row_003.json"
    assert repository.read_sweep_row(tmp_path, name) == row


@pytest.mark.slow
def test_k_sweep_merges_per_row_files(experiment_service, small_config):
    artifact = experiment_service.sweep_k(small_config, [0.0, 1.0])

    files = artifact.manifest.files
    assert f"{SWEEP_ROWS_DIR}/row_000.json" in files
    assert f"{SWEEP_ROWS_DIR}/row_001.json" in files
    assert [row.value for row in artifact.sweep.rows] == [0.0, 1.0]
    stored = experiment_service.repository.read_sweep_row(
        artifact.directory, f"{SWEEP_ROWS_DIR}/row_001.json"
    )
    assert stored == artifact.sweep.rows[1]


def reference_config(tmp_path, seed):
    payload = ExperimentConfig.from_file(REFERENCE_CONFIG).model_dump(mode="json", by_alias=True)
    payload["manifold"]["grid"] = {"nx": 21, "ny": 8, "nz": 3}
    payload["model"]["seed"] = seed
    payload["output_dir"] = str(tmp_path)
    return ExperimentConfig.model_validate(payload)


@pytest.mark.slow
@pytest.mark.parametrize("seed", [1, 2, 3, 4, 5])
def test_reference_network_synchronizes_just_above_threshold(experiment_service, tmp_path, seed):
    artifact = experiment_service.run_experiment(reference_config(tmp_path, seed))

    report = artifact.verification
    assert report.M > 0.0
    assert report.k == pytest.approx(1.1 * report.k_star)
    assert report.V_v_at_proof_time < 1e-3
    assert report.V_v_at_t_min < 1e-3


@pytest.mark.slow
def test_shipped_config_synchronizes_below_threshold(experiment_service):
    config = ExperimentConfig.from_file(REFERENCE_CONFIG)

    table = experiment_service.sweep_k(config).sweep

    assert len(table.rows) == 8
    assert table.k_empirical is not None
    assert table.k_empirical <= table.k_star
