import logging
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import quad

from src.constants import StateColumn
from src.dynamics.models import ModelDefinition
from src.dynamics.schemas import NetworkConfig, NetworkState, OscillatorParams, TimeScales
from src.dynamics.service import NetworkDynamics
from src.exceptions import (
    ArgumentError,
    CrossingNotFoundError,
    ManifoldError,
    RangeError,
    SingularPassageError,
)
from src.integrator.constants import CrossingDirection
from src.integrator.schemas import EventRecord, EventSpec, IntegratorSettings
from src.integrator.service import detect_section_crossing, integrate
from src.integrator.trajectory import Trajectory
from src.linger.config import LINGER_SETTINGS
from src.linger.constants import LingerMethod, SectionKind
from src.linger.schemas import LingerEntry, LingerReport, PoincareSection, SectionOffsets
from src.manifolds.newton import damped_newton
from src.manifolds.schemas import (
    CanardPoint,
    FastManifoldChart,
    FoldPoint,
    OscillatorGeometry,
    SlowManifoldChart,
)
from src.manifolds.service import slow_point, solve_fast_point
from src.utils import FloatArray

logger = logging.getLogger(__name__)


def _orientation(canard: CanardPoint, jump: FoldPoint) -> float:
    return 1.0 if jump.x > canard.x else -1.0


def _derived_delta_x(
    model: ModelDefinition,
    params: OscillatorParams,
    slow_chart: SlowManifoldChart,
    canard: CanardPoint,
    jump: FoldPoint,
    delta_y: float,
) -> Optional[float]:
    try:
        _, _, x = slow_point(model, params, slow_chart, canard.y - delta_y, canard.z)
    except (ManifoldError, RangeError) as exc:
        logger.debug(f"Oscillator {canard.oscillator}: fixed delta_x ({exc})")
        return None
    value = _orientation(canard, jump) * (canard.x - x)
    if not 0.0 < value < abs(canard.x - jump.x):
        return None
    return value


def default_offsets(
    canard: CanardPoint,
    jump: FoldPoint,
    slow_chart: SlowManifoldChart,
    model: Optional[ModelDefinition] = None,
    params: Optional[OscillatorParams] = None,
) -> SectionOffsets:
    """Section offsets from the chart extent and the canard-to-jump gap.

    Given ``model`` and ``params``, delta_x is the x distance from the canard
    to S cap M at y_c - delta_y, so the entry plane meets the slow manifold
    where the quadrature starts. Without them, or when that point is not
    strictly between the canard and the jump, delta_x = ANCHOR_FRACTION * gap.
    """
    y_extent = slow_chart.y_range[1] - slow_chart.y_range[0]
    z_extent = slow_chart.z_range[1] - slow_chart.z_range[0]
    window = LINGER_SETTINGS.WINDOW_FRACTION
    delta_y = window * y_extent if y_extent > 0.0 else window
    delta_z = window * z_extent if z_extent > 0.0 else window
    fixed = LINGER_SETTINGS.ANCHOR_FRACTION * abs(canard.x - jump.x)
    if fixed <= 0.0:
        raise ArgumentError("canard and jump points share x; sections are undefined")
    delta_x = fixed
    if model is not None and params is not None:
        delta_x = _derived_delta_x(model, params, slow_chart, canard, jump, delta_y) or fixed
    return SectionOffsets(
        delta_x=delta_x,
        delta_y=delta_y,
        delta_z=delta_z,
        delta_x_prime=fixed,
        delta_y_prime=delta_y,
        delta_z_prime=delta_z,
    )


def _entry_phi(
    model: ModelDefinition,
    params: OscillatorParams,
    chart: FastManifoldChart,
    x: float,
    y: float,
    z: float,
) -> Tuple[float, float]:
    j = int(np.argmin(np.abs(chart.ys - y)))
    k = int(np.argmin(np.abs(chart.zs - z)))
    line = np.flatnonzero(chart.present[:, j, k])
    if line.size == 0:
        raise ManifoldError(f"attracting sheet has no nodes near y={y:.6g}, z={z:.6g}")
    i = int(line[np.argmin(np.abs(chart.xs[line] - x))])
    result = solve_fast_point(
        model, params.as_array(), x, y, z, (float(chart.phi_v[i, j, k]), float(chart.phi_u[i, j, k]))
    )
    if not result.converged:
        raise ManifoldError(f"no fast-manifold point at x={x:.6g}, y={y:.6g}, z={z:.6g}")
    return float(result.x[0]), float(result.x[1])


def _plane_point(
    model: ModelDefinition,
    params: OscillatorParams,
    x: float,
    z: float,
    seed: Tuple[float, float, float],
) -> Tuple[float, float, float]:
    """(v, u, y) of S cap M on the plane at ``x``."""
    mu = params.as_array()

    def residual(point: FloatArray) -> FloatArray:
        v, u, y = point
        return np.array(
            [model.evaluate(name, v, u, x, y, z, 0.0, 0.0, mu) for name in ("h1", "h2", "f")],
            dtype=np.float64,
        )

    result = damped_newton(residual, np.asarray(seed, dtype=np.float64))
    if not result.converged:
        raise ManifoldError(f"slow manifold does not cross the plane x={x:.6g} at z={z:.6g}")
    v, u, y = (float(item) for item in result.x)
    return v, u, y


def build_sections(
    canard: CanardPoint,
    jump: FoldPoint,
    offsets: SectionOffsets,
    fast_chart: FastManifoldChart,
    model: ModelDefinition,
    params: OscillatorParams,
) -> Tuple[PoincareSection, PoincareSection]:
    """Entry plane delta_x before the canard and pre-jump plane delta_x' before the fold.

    Both windows are centred on the point where S cap M meets the plane and
    both sections count crossings in the direction of travel from canard to jump.
    """
    if not canard.oscillator == jump.oscillator == fast_chart.oscillator:
        raise ArgumentError("canard, jump point and chart belong to different oscillators")
    gap = abs(canard.x - jump.x)
    for name, value in (("delta_x", offsets.delta_x), ("delta_x_prime", offsets.delta_x_prime)):
        if value >= gap:
            raise ArgumentError(f"{name}={value:.6g} is not smaller than |x_c - x_f|={gap:.6g}")
    sign = _orientation(canard, jump)
    low, high = float(fast_chart.xs[0]), float(fast_chart.xs[-1])
    entry_x = canard.x - sign * offsets.delta_x
    pre_jump_x = jump.x - sign * offsets.delta_x_prime
    for anchor in (entry_x, pre_jump_x):
        if not low <= anchor <= high:
            raise RangeError("section anchor x", anchor, low, high)

    seed_v, seed_u = _entry_phi(model, params, fast_chart, entry_x, canard.y, canard.z)
    entry_v, entry_u, entry_y = _plane_point(
        model, params, entry_x, canard.z, (seed_v, seed_u, canard.y)
    )
    pre_v, pre_u, pre_y = _plane_point(model, params, pre_jump_x, jump.z, (jump.v, jump.u, jump.y))
    direction = CrossingDirection.RISING if sign > 0.0 else CrossingDirection.FALLING
    entry = PoincareSection(
        kind=SectionKind.ENTRY,
        oscillator=canard.oscillator,
        anchor=entry_x,
        direction=direction,
        y_center=entry_y,
        z_center=canard.z,
        y_half_width=offsets.delta_y,
        z_half_width=offsets.delta_z,
        phi_v=entry_v,
        phi_u=entry_u,
    )
    pre_jump = PoincareSection(
        kind=SectionKind.PRE_JUMP,
        oscillator=jump.oscillator,
        anchor=pre_jump_x,
        direction=direction,
        y_center=pre_y,
        z_center=jump.z,
        y_half_width=offsets.delta_y_prime,
        z_half_width=offsets.delta_z_prime,
        phi_v=pre_v,
        phi_u=pre_u,
    )
    return entry, pre_jump


def reduced_speed(
    model: ModelDefinition,
    params: OscillatorParams,
    slow_chart: SlowManifoldChart,
    z: float,
) -> Callable[[float], float]:
    """y -> g1 restricted to the slow manifold in the singular limit."""
    mu = params.as_array()

    def speed(y: float) -> float:
        v, u, x = slow_point(model, params, slow_chart, y, z)
        return float(model.evaluate("g1", v, u, x, y, z, 0.0, 0.0, mu))

    return speed


def quadrature_with_error(
    model: ModelDefinition,
    params: OscillatorParams,
    scales: TimeScales,
    slow_chart: SlowManifoldChart,
    y_range: Tuple[float, float],
    z: float,
) -> Tuple[float, float]:
    y_start, y_end = float(y_range[0]), float(y_range[1])
    if y_start == y_end:
        raise ArgumentError("linger integral over an empty y-range")
    speed = reduced_speed(model, params, slow_chart, z)
    samples = np.array(
        [speed(y) for y in np.linspace(y_start, y_end, LINGER_SETTINGS.SIGN_SAMPLES)]
    )
    if np.any(samples == 0.0) or np.any(np.sign(samples) != np.sign(samples[0])):
        crossing = float(np.linspace(y_start, y_end, samples.size)[np.argmin(np.abs(samples))])
        raise SingularPassageError(f"g1 vanishes on the slow manifold near y={crossing:.6g}")
    if np.sign(samples[0]) != np.sign(y_end - y_start):
        raise SingularPassageError(
            f"slow flow runs from y={y_end:.6g} towards y={y_start:.6g}, away from the fold"
        )
    rate = scales.eps_ts * scales.delta
    value, error = quad(
        lambda y: 1.0 / (rate * speed(y)),
        y_start,
        y_end,
        epsabs=0.0,
        epsrel=LINGER_SETTINGS.QUAD_RTOL,
        limit=LINGER_SETTINGS.QUAD_LIMIT,
    )
    return float(value), float(error)


def linger_time_quadrature(
    model: ModelDefinition,
    params: OscillatorParams,
    scales: TimeScales,
    slow_chart: SlowManifoldChart,
    y_range: Tuple[float, float],
    z: float,
) -> float:
    """Passage time as the integral of dy / (eps_ts * delta * g1) along the slow manifold."""
    value, _ = quadrature_with_error(model, params, scales, slow_chart, y_range, z)
    return value


def section_crossings(
    trajectory: Trajectory,
    section: PoincareSection,
    tolerance: Optional[float] = None,
) -> List[EventRecord]:
    return detect_section_crossing(trajectory, section, tolerance)


def empirical_passages(
    trajectory: Trajectory,
    entry: PoincareSection,
    pre_jump: PoincareSection,
) -> List[Tuple[float, float]]:
    """(t_entry, t_pre_jump) for each entry followed by a pre-jump crossing."""
    if entry.oscillator != pre_jump.oscillator:
        raise ArgumentError("entry and pre-jump sections belong to different oscillators")
    entries = [record.t for record in section_crossings(trajectory, entry)]
    exits = [record.t for record in section_crossings(trajectory, pre_jump)]
    passages: List[Tuple[float, float]] = []
    last_exit = -np.inf
    for t_in in entries:
        if t_in <= last_exit:
            continue
        following = [t_out for t_out in exits if t_out > t_in]
        if not following:
            break
        passages.append((t_in, following[0]))
        last_exit = following[0]
    if not passages:
        raise CrossingNotFoundError(entry.oscillator, len(entries), len(exits))
    return passages


def linger_time_empirical(
    trajectory: Trajectory,
    entry: PoincareSection,
    pre_jump: PoincareSection,
) -> float:
    """Time from the first entry crossing to the next pre-jump crossing."""
    t_in, t_out = empirical_passages(trajectory, entry, pre_jump)[0]
    return t_out - t_in


def passage_trajectory(
    model: ModelDefinition,
    params: OscillatorParams,
    scales: TimeScales,
    geometry: OscillatorGeometry,
    entry: PoincareSection,
    pre_jump: PoincareSection,
    delta_y: float,
    settings: Optional[IntegratorSettings] = None,
) -> Trajectory:
    """Single uncoupled oscillator released on S cap M upstream of the entry plane.

    The release point sits LEAD_WINDOWS * delta_y before the entry window
    centre in y, clipped to the slow chart. The run stops halfway between the
    pre-jump plane and the fold. With FREEZE_Z the z column is held at the
    entry window centre.
    """
    slow_chart = geometry.slow_chart
    low, high = slow_chart.y_range
    upstream = 1.0 if pre_jump.y_center > entry.y_center else -1.0
    y_start = float(
        np.clip(entry.y_center - upstream * LINGER_SETTINGS.LEAD_WINDOWS * delta_y, low, high)
    )
    z = entry.z_center
    v, u, x = slow_point(model, params, slow_chart, y_start, z)
    t_slow, _ = quadrature_with_error(
        model, params, scales, slow_chart, (y_start, geometry.jump.y), z
    )
    horizon = LINGER_SETTINGS.HORIZON_FACTOR * t_slow
    stop_x = 0.5 * (pre_jump.anchor + geometry.jump.x)
    stop = EventSpec(
        event_id="stop",
        function=lambda t, states: float(states[0, StateColumn.X] - stop_x),
        direction=pre_jump.direction,
        terminal=True,
    )
    frozen = (StateColumn.Z,) if LINGER_SETTINGS.FREEZE_Z else ()
    dynamics = NetworkDynamics(model, NetworkConfig(N=1, k=0.0), scales, [params], frozen=frozen)
    start = NetworkState(t=0.0, states=np.array([[v, u, x, y_start, z]]))
    logger.debug(
        f"Oscillator {geometry.oscillator}: passage from y={y_start:.6g} over t<={horizon:.6g}"
    )
    trajectory, _ = integrate(dynamics, start, (0.0, horizon), settings, [stop])
    return trajectory


def measure_linger_time(
    model: ModelDefinition,
    params: OscillatorParams,
    scales: TimeScales,
    geometry: OscillatorGeometry,
    entry: PoincareSection,
    pre_jump: PoincareSection,
    delta_y: float,
    settings: Optional[IntegratorSettings] = None,
) -> float:
    """Empirical linger time of one oscillator from its own passage run."""
    trajectory = passage_trajectory(
        model, params, scales, geometry, entry, pre_jump, delta_y, settings
    )
    local = {"oscillator": 0}
    try:
        return linger_time_empirical(
            trajectory, entry.model_copy(update=local), pre_jump.model_copy(update=local)
        )
    except CrossingNotFoundError as exc:
        raise CrossingNotFoundError(geometry.oscillator, exc.entry_count, exc.pre_jump_count) from exc


def sync_window(times: Sequence[float]) -> float:
    if len(times) == 0:
        raise ArgumentError("no linger times to take the minimum of")
    return float(min(times))


def compute_linger_report(
    model: ModelDefinition,
    params: Sequence[OscillatorParams],
    scales: TimeScales,
    geometries: Sequence[OscillatorGeometry],
    offsets: Optional[SectionOffsets] = None,
    method: LingerMethod = LingerMethod.QUADRATURE,
    settings: Optional[IntegratorSettings] = None,
) -> LingerReport:
    """Linger time per oscillator over [y_c - delta_y, y_f] at z = z_c.

    The quadrature value is always computed; with the empirical method it is
    kept next to the measured passage time.
    """
    entries: List[LingerEntry] = []
    sections: List[PoincareSection] = []
    for geometry in sorted(geometries, key=lambda item: item.oscillator):
        canard, jump = geometry.canard, geometry.jump
        own = params[geometry.oscillator]
        chosen = offsets or default_offsets(canard, jump, geometry.slow_chart, model, own)
        entry, pre_jump = build_sections(canard, jump, chosen, geometry.chart, model, own)
        y_range = (canard.y - chosen.delta_y, jump.y)
        quadrature, error = quadrature_with_error(
            model, own, scales, geometry.slow_chart, y_range, canard.z
        )
        value = quadrature
        if method == LingerMethod.EMPIRICAL:
            value = measure_linger_time(
                model, own, scales, geometry, entry, pre_jump, chosen.delta_y, settings
            )
            error = abs(value - quadrature)
        logger.info(
            f"Oscillator {geometry.oscillator}: {method} linger time {value:.6g} "
            f"(quadrature {quadrature:.6g}, +/- {error:.2e})"
        )
        entries.append(
            LingerEntry(
                oscillator=geometry.oscillator,
                method=method,
                t_linger=value,
                error_estimate=error,
                t_quadrature=quadrature,
                y_range=y_range,
                z=canard.z,
            )
        )
        sections.extend([entry, pre_jump])
    return LingerReport(method=method, entries=entries, sections=sections)
