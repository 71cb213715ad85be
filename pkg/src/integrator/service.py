import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from src.constants import StateColumn
from src.dynamics.schemas import NetworkState
from src.exceptions import (
    ArgumentError,
    EvaluationError,
    IntegrationError,
    NonFiniteStateError,
    StepSizeUnderflowError,
)
from src.integrator.config import INTEGRATOR_SETTINGS
from src.integrator.constants import CrossingDirection, IntegratorMethod
from src.integrator.schemas import (
    EventFunction,
    EventRecord,
    EventSpec,
    IntegrationStats,
    IntegratorSettings,
    Section,
)
from src.integrator.steppers import (
    DormandPrinceStepper,
    RightHandSide,
    RosenbrockStepper,
    Stepper,
)
from src.integrator.trajectory import Trajectory, hermite
from src.utils import FloatArray

logger = logging.getLogger(__name__)


def _build_stepper(settings: IntegratorSettings, rhs: RightHandSide) -> Stepper:
    if settings.method == IntegratorMethod.SEMI_IMPLICIT:
        return RosenbrockStepper(rhs, settings.rtol, settings.atol)
    return DormandPrinceStepper(rhs, settings.rtol, settings.atol)


def _initial_step(
    stepper: Stepper,
    t0: float,
    y0: FloatArray,
    f0: FloatArray,
    settings: IntegratorSettings,
) -> float:
    """Starting step from the scaled sizes of y0, f0 and a trial second derivative."""
    scale = settings.atol + settings.rtol * np.abs(y0)
    d0 = float(np.sqrt(np.mean((y0 / scale) ** 2)))
    d1 = float(np.sqrt(np.mean((f0 / scale) ** 2)))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, settings.max_step)
    f1 = stepper.evaluate(t0 + h0, y0 + h0 * f0)
    d2 = float(np.sqrt(np.mean(((f1 - f0) / scale) ** 2))) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / stepper.error_order)
    return min(100.0 * h0, h1, settings.max_step)


def _crossing_direction(before: float, after: float) -> Optional[CrossingDirection]:
    if before < 0.0 <= after and after != before:
        return CrossingDirection.RISING
    if before > 0.0 >= after and after != before:
        return CrossingDirection.FALLING
    return None


def _accepts(direction: CrossingDirection, wanted: CrossingDirection) -> bool:
    return wanted == CrossingDirection.EITHER or direction == wanted


def _localize(
    function: EventFunction,
    t0: float,
    y0: FloatArray,
    f0: FloatArray,
    t1: float,
    y1: FloatArray,
    f1: FloatArray,
    tolerance: float,
) -> Tuple[float, FloatArray]:
    """Root of the event function along the dense-output interpolant of one step."""
    def along_step(t: float) -> float:
        return float(function(t, hermite(t0, y0, f0, t1, y1, f1, np.asarray(t))))

    t_event = float(brentq(along_step, t0, t1, xtol=tolerance))
    return t_event, hermite(t0, y0, f0, t1, y1, f1, np.asarray(t_event))


def integrate(
    rhs: RightHandSide,
    initial: NetworkState,
    t_span: Tuple[float, float],
    settings: Optional[IntegratorSettings] = None,
    events: Sequence[EventSpec] = (),
) -> Tuple[Trajectory, List[EventRecord]]:
    """Adaptive integration of dy/dt = rhs(t, y) with dense output and events."""
    settings = settings or IntegratorSettings()
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not t1 > t0:
        raise ArgumentError(f"integration span must be increasing, got ({t0}, {t1})")
    y = initial.states.copy()
    f = rhs(t0, y)
    if not np.all(np.isfinite(f)):
        raise ArgumentError("right-hand side is not finite at the initial state")

    stepper = _build_stepper(settings, rhs)
    stepper.rhs_evaluations = 1
    stats = IntegrationStats(method=settings.method)
    h = settings.initial_step or _initial_step(stepper, t0, y, f, settings)
    beta = INTEGRATOR_SETTINGS.PI_BETA
    alpha = 1.0 / stepper.error_order - 0.75 * beta
    previous_error = 1e-4
    rejected_in_row = 0
    last_failure: Optional[Exception] = None

    times: List[float] = [t0]
    states: List[FloatArray] = [y.copy()]
    derivatives: List[FloatArray] = [f.copy()]
    records: List[EventRecord] = []
    event_values = [float(event.function(t0, y)) for event in events]
    t = t0

    logger.debug(f"Integrating {settings.method} on [{t0}, {t1}] from h={h:.3e}")
    while t < t1:
        if stats.accepted_steps + stats.rejected_steps >= settings.max_steps:
            raise IntegrationError(
                f"step budget of {settings.max_steps} exhausted", t, y[0].tolist()
            )
        h = min(h, settings.max_step, t1 - t)
        if h < max(INTEGRATOR_SETTINGS.MIN_STEP, 16.0 * np.finfo(np.float64).eps * abs(t)):
            if isinstance(last_failure, EvaluationError):
                raise last_failure
            if isinstance(last_failure, NonFiniteStateError):
                raise last_failure
            raise StepSizeUnderflowError(t, h, y[0].tolist())

        try:
            result = stepper.step(t, y, f, h)
            error = result.error_norm
            if not np.isfinite(error):
                last_failure = NonFiniteStateError(t + h, y[0].tolist())
        except EvaluationError as exc:
            last_failure = exc
            error = float("inf")
            result = None

        if result is None or not error <= 1.0:
            stats.rejected_steps += 1
            rejected_in_row += 1
            if np.isfinite(error):
                factor = max(
                    INTEGRATOR_SETTINGS.FACTOR_MIN,
                    INTEGRATOR_SETTINGS.SAFETY * error ** (-1.0 / stepper.error_order),
                )
            else:
                factor = INTEGRATOR_SETTINGS.FACTOR_MIN
            if rejected_in_row >= 2:
                factor = min(factor, 0.1)
            h *= factor
            continue

        last_failure = None
        t_new = t + h
        y_new, f_new = result.y_new, result.f_new
        terminal_hit: Optional[Tuple[float, FloatArray]] = None
        new_values: List[float] = []
        step_records: List[EventRecord] = []
        for index, event in enumerate(events):
            value = float(event.function(t_new, y_new))
            new_values.append(value)
            direction = _crossing_direction(event_values[index], value)
            if direction is None or not _accepts(direction, event.direction):
                continue
            t_event, y_event = _localize(
                event.function,
                t, y, f, t_new, y_new, f_new,
                settings.event_tolerance,
            )
            step_records.append(
                EventRecord(event_id=event.event_id, t=t_event, state=y_event, direction=direction)
            )
            if event.terminal and (terminal_hit is None or t_event < terminal_hit[0]):
                terminal_hit = (t_event, y_event)
                stats.terminated_by = event.event_id
        event_values = new_values

        if terminal_hit is not None:
            t_stop, y_stop = terminal_hit
            step_records = [record for record in step_records if record.t <= t_stop]
            if t_stop > t:
                f_stop = stepper.evaluate(t_stop, y_stop)
                times.append(t_stop)
                states.append(y_stop)
                derivatives.append(f_stop)
            records.extend(sorted(step_records, key=lambda record: record.t))
            stats.accepted_steps += 1
            t = t_stop
            break

        records.extend(sorted(step_records, key=lambda record: record.t))
        times.append(t_new)
        states.append(y_new.copy())
        derivatives.append(f_new.copy())
        stats.accepted_steps += 1
        t, y, f = t_new, y_new, f_new

        factor = (
            INTEGRATOR_SETTINGS.SAFETY
            * max(error, 1e-10) ** (-alpha)
            * previous_error**beta
        )
        factor = min(INTEGRATOR_SETTINGS.FACTOR_MAX, max(INTEGRATOR_SETTINGS.FACTOR_MIN, factor))
        if rejected_in_row:
            factor = min(factor, 1.0)
        rejected_in_row = 0
        previous_error = max(error, 1e-4)
        h *= factor

    stats.rhs_evaluations = stepper.rhs_evaluations
    logger.info(
        f"Integration finished at t={t:.6g}: {stats.accepted_steps} accepted, "
        f"{stats.rejected_steps} rejected, {stats.rhs_evaluations} rhs evaluations"
    )
    trajectory = Trajectory(
        np.asarray(times), np.asarray(states), np.asarray(derivatives), stats
    )
    return trajectory, records


def detect_section_crossing(
    trajectory: Trajectory,
    section: Section,
    tolerance: Optional[float] = None,
) -> List[EventRecord]:
    """Crossings of ``section`` along the trajectory, time ordered."""
    oscillator, axis, anchor = section.oscillator, section.axis, section.anchor
    if not 0 <= oscillator < trajectory.n_oscillators:
        raise ArgumentError(f"oscillator {oscillator} not in trajectory")
    tolerance = tolerance or INTEGRATOR_SETTINGS.EVENT_TOLERANCE
    windows = section.windows()
    times = trajectory.times
    values = trajectory.column(StateColumn(axis), oscillator) - anchor
    states = trajectory.states
    derivatives = trajectory.derivatives

    def offset(_: float, state: FloatArray) -> float:
        return float(state[oscillator, axis] - anchor)

    records: List[EventRecord] = []
    for index in np.flatnonzero(values[:-1] * values[1:] <= 0.0):
        crossing = _crossing_direction(float(values[index]), float(values[index + 1]))
        if crossing is None or not _accepts(crossing, section.direction):
            continue
        t_event, y_event = _localize(
            offset,
            float(times[index]), states[index], derivatives[index],
            float(times[index + 1]), states[index + 1], derivatives[index + 1],
            tolerance,
        )
        row = y_event[oscillator]
        if all(abs(row[int(column)] - center) < width for column, center, width in windows):
            records.append(
                EventRecord(event_id=section.label, t=t_event, state=y_event, direction=crossing)
            )
    return records
