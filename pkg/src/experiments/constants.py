from enum import StrEnum


class Stage(StrEnum):
    CONFIG = "config"
    MANIFOLD = "manifold"
    LINGER = "linger"
    INITIAL = "initial"
    PILOT = "pilot"
    SIMULATE = "simulate"
    VERIFY = "verify"
    SWEEP = "sweep"
    PLOT = "plot"


class StageStatus(StrEnum):
    COMPLETED = "completed"
    FAILED = "failed"


class PlotKind(StrEnum):
    SYNC_TRACE = "sync_trace"
    PHASE_DIAGRAM = "phase_diagram"
    MANIFOLD_SLICE = "manifold_slice"


class KMode(StrEnum):
    FIXED = "fixed"
    THRESHOLD_MULTIPLE = "threshold_multiple"


class BoundMode(StrEnum):
    MEASURED = "measured"
    USER = "user"


class SweepParameter(StrEnum):
    K = "k"
    SPREAD = "spread"


CONFIG_FILE = "config.json"
MANIFEST_FILE = "manifest.json"
LINGER_FILE = "linger.json"
VERIFICATION_FILE = "verification.json"
TRAJECTORY_CSV = "trajectory.csv"
TRAJECTORY_CACHE = "trajectory.cstj"
SYNC_TRACE_FILE = "sync_trace.csv"
MANIFOLD_DIR = "manifold"
PLOT_DIR = "plots"
SWEEP_ROWS_DIR = "sweep_rows"

PLOT_COLUMNS: dict[PlotKind, tuple[str, ...]] = {
    PlotKind.SYNC_TRACE: ("t", "V_v", "W", "envelope"),
    PlotKind.PHASE_DIAGRAM: ("k", "V_v_at_window", "pass"),
    PlotKind.MANIFOLD_SLICE: ("x", "v_attracting", "v_repelling"),
}
