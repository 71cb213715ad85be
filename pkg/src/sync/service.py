import logging
import math
from typing import Optional, Sequence, Tuple

import numpy as np

from src.constants import StateColumn
from src.dynamics.config import DYNAMICS_SETTINGS
from src.dynamics.constants import BoundSource
from src.dynamics.models import ModelDefinition
from src.dynamics.schemas import (
    GridSpec,
    HeterogeneityBound,
    NetworkConfig,
    NetworkState,
    OscillatorParams,
    TimeScales,
    parameter_matrix,
)
from src.dynamics.service import NetworkDynamics, heterogeneity_bound
from src.exceptions import ArgumentError
from src.integrator.schemas import IntegratorSettings
from src.integrator.service import integrate
from src.integrator.trajectory import Trajectory
from src.manifolds.service import BranchClassifier
from src.sync.config import SYNC_SETTINGS
from src.sync.constants import CheckStatus, EvaluationPoint
from src.sync.schemas import (
    SyncTrace,
    ThresholdBreakdown,
    ThresholdInputs,
    VarianceIdentityCheck,
    VerificationReport,
)
from src.utils import FloatArray

logger = logging.getLogger(__name__)


def variance(states: NetworkState) -> Tuple[float, float]:
    """Population variance of the v-column and its mean."""
    v = states.column(StateColumn.V)
    v_bar = float(v.mean())
    return float(np.mean((v - v_bar) ** 2)), v_bar


def variance_series(states: FloatArray) -> Tuple[FloatArray, FloatArray]:
    """(V_v, v_bar) for stacked network states of shape (n, N, 5)."""
    v = np.asarray(states, dtype=np.float64)[..., StateColumn.V]
    v_bar = v.mean(axis=-1)
    return np.mean((v - v_bar[..., None]) ** 2, axis=-1), v_bar


def sync_trace(trajectory: Trajectory) -> SyncTrace:
    V_v, v_bar = variance_series(trajectory.states)
    return SyncTrace(times=trajectory.times, V_v=V_v, W=np.sqrt(V_v), v_bar=v_bar)


def _check_threshold_inputs(inputs: ThresholdInputs) -> None:
    values = (inputs.M, inputs.eps_tol, inputs.delta, inputs.t_min, inputs.W0)
    if not all(math.isfinite(value) for value in values):
        raise ArgumentError("threshold inputs must be finite")
    if inputs.eps_tol <= 0.0:
        raise ArgumentError(f"eps_tol must be positive, got {inputs.eps_tol}")
    if inputs.t_min <= 0.0:
        raise ArgumentError(f"t_min must be positive, got {inputs.t_min}")
    if not 0.0 < inputs.delta <= 1.0:
        raise ArgumentError(f"delta must lie in (0, 1], got {inputs.delta}")
    if inputs.M < 0.0:
        raise ArgumentError(f"M must be non-negative, got {inputs.M}")
    if inputs.W0 < 0.0:
        raise ArgumentError(f"W0 must be non-negative, got {inputs.W0}")
    if inputs.T is not None and inputs.T <= 0.0:
        raise ArgumentError(f"horizon T must be positive, got {inputs.T}")


def threshold_breakdown(inputs: ThresholdInputs) -> ThresholdBreakdown:
    """Steady-state and transient terms of the coupling threshold.

    The transient term is floored at zero when 2 W0 <= sqrt(eps_tol).
    """
    _check_threshold_inputs(inputs)
    root = math.sqrt(inputs.eps_tol)
    steady = 2.0 * inputs.M / root
    if inputs.W0 > 0.0:
        raw = math.log(2.0 * inputs.W0 / root) / (inputs.delta * inputs.t_min)
    else:
        raw = -math.inf
    transient = max(0.0, raw)
    return ThresholdBreakdown(
        steady_state_term=steady,
        transient_term=transient,
        transient_floored=raw <= 0.0,
        k_star=max(steady, transient),
    )


def coupling_threshold(inputs: ThresholdInputs) -> float:
    return threshold_breakdown(inputs).k_star


def gronwall_envelope(W0: float, M: float, k: float, times: Sequence[float]) -> FloatArray:
    """(W0 - 2M/k) exp(-k t) + 2M/k."""
    if not k > 0.0:
        raise ArgumentError(f"envelope needs k > 0, got {k}")
    steady = 2.0 * M / k
    return (W0 - steady) * np.exp(-k * np.asarray(times, dtype=np.float64)) + steady


def envelope_crossing_time(W0: float, M: float, k: float, eps_tol: float) -> float:
    """Earliest t with envelope(t) < sqrt(eps_tol); inf if the steady state is too high."""
    if not k > 0.0:
        raise ArgumentError(f"envelope needs k > 0, got {k}")
    if eps_tol <= 0.0:
        raise ArgumentError(f"eps_tol must be positive, got {eps_tol}")
    target = math.sqrt(eps_tol)
    steady = 2.0 * M / k
    if steady >= target:
        return math.inf
    if W0 < target:
        return 0.0
    return math.log((W0 - steady) / (target - steady)) / k


def centered_derivative(times: FloatArray, values: FloatArray) -> FloatArray:
    """Second-order centered difference on a possibly nonuniform grid (interior points)."""
    h1 = (times[1:-1] - times[:-2]).reshape((-1,) + (1,) * (values.ndim - 1))
    h2 = (times[2:] - times[1:-1]).reshape((-1,) + (1,) * (values.ndim - 1))
    return (
        -h2 / (h1 * (h1 + h2)) * values[:-2]
        + (h2 - h1) / (h1 * h2) * values[1:-1]
        + h1 / (h2 * (h1 + h2)) * values[2:]
    )


def measure_heterogeneity(
    model: ModelDefinition,
    params: Sequence[OscillatorParams],
    trajectory: Trajectory,
    scales: Optional[TimeScales] = None,
    sampling: Optional[GridSpec] = None,
    t_end: Optional[float] = None,
) -> HeterogeneityBound:
    """M over the inflated trajectory box, folded with the sample maximum."""
    box = trajectory.bounding_box(t_end).inflated(DYNAMICS_SETTINGS.BOX_INFLATION)
    samples = trajectory.states
    if t_end is not None:
        samples = samples[trajectory.times <= t_end]
    return heterogeneity_bound(model, box, params, sampling, scales, samples)


def check_variance_identity(
    trajectory: Trajectory,
    model: ModelDefinition,
    config: NetworkConfig,
    scales: TimeScales,
    params: Sequence[OscillatorParams],
    M: Optional[float] = None,
    step: Optional[float] = None,
) -> VarianceIdentityCheck:
    """Compare dV_v/dt by finite differences with -2k V_v + (2/N) sum (v_i - v_bar)(h1_i - h1_bar).

    With ``step`` the trajectory is resampled on a uniform grid, otherwise
    its own samples are used. ``M`` defaults to the measured bound of the run.
    """
    if step is not None:
        if step <= 0.0:
            raise ArgumentError(f"finite-difference step must be positive, got {step}")
        count = int(math.floor((trajectory.t_end - trajectory.t_start) / step + 1e-9)) + 1
        times = trajectory.t_start + step * np.arange(count)
        states = trajectory.sample(times)
    else:
        times = trajectory.times
        states = trajectory.states
    if times.shape[0] < 3:
        raise ArgumentError(f"need at least 3 samples for centered differences, got {times.shape[0]}")
    if M is None:
        M = measure_heterogeneity(model, params, trajectory, scales).M

    dynamics = NetworkDynamics(model, config, scales, params)
    h1 = dynamics.h1_values(states)
    V_v, v_bar = variance_series(states)
    v = states[..., StateColumn.V]
    spread = v - v_bar[:, None]
    h1_spread = h1 - h1.mean(axis=-1, keepdims=True)
    heterogeneity = 2.0 * np.mean(spread * h1_spread, axis=-1)
    rhs = -2.0 * config.k * V_v + heterogeneity

    residual = np.abs(centered_derivative(times, V_v) - rhs[1:-1])
    mean_field = np.abs(centered_derivative(times, v_bar) - h1.mean(axis=-1)[1:-1])
    W = np.sqrt(V_v)
    cs_slack = 4.0 * M * W - np.abs(heterogeneity)

    # dW/dt = (dV_v/dt) / (2W) where W > 0
    positive = W > SYNC_SETTINGS.MIN_W
    w_slack = np.full(W.shape, np.nan)
    w_slack[positive] = (
        -config.k * W[positive] + 2.0 * M - rhs[positive] / (2.0 * W[positive])
    )
    interior = slice(1, -1)
    w_interior = w_slack[interior]
    finite_w = w_interior[np.isfinite(w_interior)]

    check = VarianceIdentityCheck(
        times=times[interior],
        residual=residual,
        max_residual=float(residual.max()),
        cs_slack=cs_slack[interior],
        min_cs_slack=float(cs_slack[interior].min()),
        mean_field_residual=mean_field,
        max_mean_field_residual=float(mean_field.max()),
        w_slack=w_interior,
        min_w_slack=float(finite_w.min()) if finite_w.size else math.inf,
        M=float(M),
        step=step,
    )
    logger.debug(
        f"Variance identity: max residual {check.max_residual:.3e}, "
        f"min CS slack {check.min_cs_slack:.3e}"
    )
    return check


def attach_identity_check(trace: SyncTrace, check: VarianceIdentityCheck) -> SyncTrace:
    """Trace with residual and CS slack aligned to its times; end points are NaN."""
    if trace.times.shape[0] != check.times.shape[0] + 2 or not np.array_equal(
        trace.times[1:-1], check.times
    ):
        raise ArgumentError("identity check was not computed on the trace's samples")
    pad = np.array([np.nan])
    return trace.model_copy(
        update={
            "residual": np.concatenate([pad, check.residual, pad]),
            "cs_slack": np.concatenate([pad, check.cs_slack, pad]),
        }
    )


def branch_flags(
    trajectory: Trajectory,
    model: ModelDefinition,
    scales: TimeScales,
    params: Sequence[OscillatorParams],
    classifier: Optional[BranchClassifier] = None,
) -> FloatArray:
    """(n, N) attracting-branch membership of every sample and oscillator."""
    states = trajectory.states
    if classifier is not None:
        return classifier.attracting(states)
    mu = parameter_matrix(params)
    v, u, x, y, z = (states[..., column] for column in range(states.shape[-1]))
    jac = model.fast_jacobian(v, u, x, y, z, scales.eps_ts, scales.delta, mu)
    trace = jac[..., 0, 0] + jac[..., 1, 1]
    det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
    return (trace < 0.0) & (det > 0.0)


def on_branch_until(times: FloatArray, flags: FloatArray) -> float:
    """Last sample time before any oscillator leaves the attracting branch, relative to times[0]."""
    all_on = np.all(flags, axis=-1)
    off = np.flatnonzero(~all_on)
    if off.size == 0:
        return float(times[-1] - times[0])
    if off[0] == 0:
        return 0.0
    return float(times[off[0] - 1] - times[0])


def verify_theorem(
    model: ModelDefinition,
    config: NetworkConfig,
    scales: TimeScales,
    params: Sequence[OscillatorParams],
    inputs: ThresholdInputs,
    settings: Optional[IntegratorSettings] = None,
    *,
    initial: NetworkState,
    classifier: Optional[BranchClassifier] = None,
    m_source: BoundSource = BoundSource.USER,
) -> Tuple[VerificationReport, Trajectory, SyncTrace]:
    """Simulate the coupled network and check the sufficient synchronization condition.

    V_v is evaluated at delta * t_min and at t_min. The envelope is checked on
    the interval where every oscillator stays on its attracting branch, using
    the larger of ``inputs.M`` and the run's own sample bound.
    """
    breakdown = threshold_breakdown(inputs)
    if initial.n_oscillators != config.n_oscillators:
        raise ArgumentError(
            f"initial state has {initial.n_oscillators} rows, config expects {config.n_oscillators}"
        )
    W_initial = math.sqrt(variance(initial)[0])
    if W_initial > inputs.W0 * (1.0 + 1e-12) + 1e-15:
        raise ArgumentError(f"W0={inputs.W0:.6g} is below the initial error W(0)={W_initial:.6g}")

    t0 = initial.t
    horizon = inputs.horizon
    span = max(inputs.t_min, horizon)
    logger.info(
        f"Verifying k={config.k:.6g} against k*={breakdown.k_star:.6g} over [0, {span:.6g}]"
    )
    dynamics = NetworkDynamics(model, config, scales, params)
    trajectory, _ = integrate(dynamics, initial, (t0, t0 + span), settings)
    trace = sync_trace(trajectory)
    elapsed = trace.times - t0

    flags = branch_flags(trajectory, model, scales, params, classifier)
    branch_time = on_branch_until(trace.times, flags)
    valid = branch_time >= horizon and inputs.proof_time <= horizon
    strict = inputs.proof_time < branch_time

    proof_states, theorem_states = trajectory.sample(
        np.array([t0 + inputs.proof_time, t0 + inputs.t_min])
    )
    V_proof = float(variance_series(proof_states[None])[0][0])
    V_theorem = float(variance_series(theorem_states[None])[0][0])

    on_branch = elapsed <= branch_time
    h1 = dynamics.h1_values(trajectory.states[on_branch])
    envelope_M = max(inputs.M, float(np.max(np.abs(h1))))
    violation: Optional[float] = None
    transient_vacuous = False
    if config.k > 0.0:
        envelope = gronwall_envelope(inputs.W0, envelope_M, config.k, elapsed)
        trace = trace.model_copy(update={"envelope": envelope})
        violation = float(np.max(trace.W[on_branch] - envelope[on_branch]))
        transient_vacuous = inputs.W0 <= 2.0 * envelope_M / config.k
        if violation <= SYNC_SETTINGS.ENVELOPE_SLACK * (1.0 + inputs.W0):
            envelope_status = CheckStatus.VACUOUS if transient_vacuous else CheckStatus.PASSED
        else:
            envelope_status = CheckStatus.FAILED
    else:
        envelope_status = CheckStatus.VACUOUS

    proof_passed = V_proof < inputs.eps_tol
    theorem_passed = V_theorem < inputs.eps_tol
    decisive = theorem_passed if SYNC_SETTINGS.PASS_POINT == EvaluationPoint.THEOREM else proof_passed
    detail: Optional[str] = None
    if valid:
        passed: Optional[bool] = decisive and envelope_status != CheckStatus.FAILED
    else:
        passed = None
        detail = (
            f"an oscillator left its attracting branch at t={branch_time:.6g}, "
            f"before the horizon {horizon:.6g}"
        )
        logger.warning(f"Verification invalid: {detail}")

    report = VerificationReport(
        k=config.k,
        k_star=breakdown.k_star,
        threshold=breakdown,
        M=inputs.M,
        m_source=m_source,
        envelope_M=envelope_M,
        W0=inputs.W0,
        W_initial=W_initial,
        eps_tol=inputs.eps_tol,
        delta=inputs.delta,
        t_min=inputs.t_min,
        horizon=horizon,
        proof_time=inputs.proof_time,
        V_v_at_proof_time=V_proof,
        V_v_at_t_min=V_theorem,
        envelope_max_violation=violation,
        envelope_status=envelope_status,
        transient_vacuous=transient_vacuous,
        proof_point_passed=proof_passed,
        theorem_point_passed=theorem_passed,
        pass_point=SYNC_SETTINGS.PASS_POINT,
        on_branch_until=branch_time,
        strict_horizon=strict,
        valid=valid,
        passed=passed,
        detail=detail,
    )
    logger.info(
        f"Verification {report.status}: V_v(delta*t_min)={V_proof:.3e}, V_v(t_min)={V_theorem:.3e}"
    )
    return report, trajectory, trace
