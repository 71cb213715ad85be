import math

import numpy as np
import pytest

from src.constants import StateColumn
from src.dynamics.models import FunctionalModel
from src.dynamics.schemas import NetworkConfig, NetworkState, OscillatorParams, TimeScales
from src.dynamics.service import NetworkDynamics, make_reference_network
from src.exceptions import ArgumentError
from src.integrator.schemas import IntegratorSettings
from src.integrator.service import integrate
from src.sync.config import SYNC_SETTINGS
from src.sync.constants import SYNC_TRACE_COLUMNS, CheckStatus
from src.sync.io import write_sync_trace_csv
from src.sync.schemas import ThresholdInputs
from src.sync.service import (
    attach_identity_check,
    centered_derivative,
    check_variance_identity,
    coupling_threshold,
    envelope_crossing_time,
    gronwall_envelope,
    on_branch_until,
    sync_trace,
    threshold_breakdown,
    variance,
    verify_theorem,
)
from tests.conftest import linear_model

TIGHT = IntegratorSettings(rtol=1e-10, atol=1e-12)
SCALES = TimeScales(eps_ts=0.05, delta=0.1)


def voltages(*values, t=0.0):
    states = np.zeros((len(values), 5))
    states[:, StateColumn.V] = values
    return NetworkState(t=t, states=states)


def run_linear(mu, k, v0, span=1.0):
    model = linear_model()
    params = [OscillatorParams(mu=(value,)) for value in mu]
    config = NetworkConfig(N=len(mu), k=k)
    dynamics = NetworkDynamics(model, config, SCALES, params)
    trajectory, _ = integrate(dynamics, voltages(*v0), (0.0, span), TIGHT)
    return model, params, config, trajectory


def test_threshold_is_driven_by_the_transient_term():
    inputs = ThresholdInputs(M=0.0, eps_tol=1e-2, delta=0.5, t_min=2.0, W0=0.5)

    breakdown = threshold_breakdown(inputs)

    assert breakdown.k_star == pytest.approx(math.log(10.0))
    assert breakdown.steady_state_term == 0.0
    assert not breakdown.transient_floored


def test_threshold_floors_a_negative_transient_term():
    inputs = ThresholdInputs(M=0.05, eps_tol=1e-4, delta=0.5, t_min=2.0, W0=0.001)

    breakdown = threshold_breakdown(inputs)

    assert breakdown.k_star == pytest.approx(10.0)
    assert breakdown.transient_term == 0.0
    assert breakdown.transient_floored


@pytest.mark.parametrize(
    "M, eps_tol, delta, t_min, W0",
    [
        (0.1, 1e-3, 0.2, 50.0, 0.3),
        (0.0, 1e-6, 1.0, 10.0, 1.0),
        (2.0, 1e-2, 0.5, 1.0, 5.0),
    ],
)
def test_threshold_is_the_larger_of_both_terms(M, eps_tol, delta, t_min, W0):
    inputs = ThresholdInputs(M=M, eps_tol=eps_tol, delta=delta, t_min=t_min, W0=W0)
    root = math.sqrt(eps_tol)

    expected = max(2.0 * M / root, math.log(2.0 * W0 / root) / (delta * t_min), 0.0)

    assert coupling_threshold(inputs) == pytest.approx(expected)


def test_threshold_grows_with_heterogeneity_and_shrinks_with_linger_time():
    base = ThresholdInputs(M=0.01, eps_tol=1e-4, delta=0.5, t_min=5.0, W0=1.0)

    assert coupling_threshold(base.model_copy(update={"M": 0.1})) > coupling_threshold(base)
    assert coupling_threshold(base.model_copy(update={"t_min": 50.0})) <= coupling_threshold(base)


@pytest.mark.parametrize(
    "update",
    [{"eps_tol": 0.0}, {"eps_tol": -1e-3}, {"delta": 0.0}, {"delta": 1.5}, {"M": math.nan}, {"t_min": 0.0}],
)
def test_threshold_rejects_out_of_range_inputs(update):
    inputs = ThresholdInputs(M=0.01, eps_tol=1e-4, delta=0.5, t_min=5.0, W0=1.0).model_copy(update=update)

    with pytest.raises(ArgumentError):
        threshold_breakdown(inputs)


def test_envelope_without_heterogeneity_is_pure_decay():
    times = np.linspace(0.0, 3.0, 7)

    np.testing.assert_allclose(gronwall_envelope(1.0, 0.0, 1.0, times), np.exp(-times))


def test_envelope_crossing_time():
    assert envelope_crossing_time(np.e, 0.0, 1.0, 1.0) == pytest.approx(1.0)
    assert envelope_crossing_time(1.0, 1.0, 1.0, 1e-2) == math.inf
    assert envelope_crossing_time(0.01, 0.0, 1.0, 1.0) == 0.0
    with pytest.raises(ArgumentError):
        envelope_crossing_time(1.0, 0.0, 0.0, 1.0)


def test_variance_of_the_voltage_column():
    assert variance(voltages(0.0, 2.0)) == (pytest.approx(1.0), pytest.approx(1.0))
    assert variance(voltages(0.0, 1.0, 2.0))[0] == pytest.approx(2.0 / 3.0)


def test_centered_derivative_is_exact_for_quadratics():
    times = np.array([0.0, 0.1, 0.35, 0.4, 0.9, 1.0])

    derivative = centered_derivative(times, times**2)

    np.testing.assert_allclose(derivative, 2.0 * times[1:-1], atol=1e-12)


def test_variance_identity_holds_along_a_linear_run():
    model, params, config, trajectory = run_linear((0.1, -0.2, 0.05), 1.0, (0.0, 0.2, -0.2))

    check = check_variance_identity(trajectory, model, config, SCALES, params, step=0.005)

    assert check.max_residual < 1e-4
    assert check.max_mean_field_residual < 1e-5
    assert check.min_cs_slack >= -1e-9
    assert check.times[0] == pytest.approx(0.005)


def test_identity_check_rejects_non_positive_step():
    model, params, config, trajectory = run_linear((0.0, 0.0), 1.0, (0.1, -0.1))

    with pytest.raises(ArgumentError):
        check_variance_identity(trajectory, model, config, SCALES, params, M=1.0, step=0.0)


def test_identity_check_aligns_with_its_trace():
    model, params, config, trajectory = run_linear((0.1, -0.1), 2.0, (0.3, -0.3))
    trace = sync_trace(trajectory)

    merged = attach_identity_check(
        trace, check_variance_identity(trajectory, model, config, SCALES, params, M=1.0)
    )
    resampled = check_variance_identity(trajectory, model, config, SCALES, params, M=1.0, step=0.01)

    assert np.isnan(merged.residual[0]) and np.isnan(merged.residual[-1])
    assert np.all(np.isfinite(merged.cs_slack[1:-1]))
    with pytest.raises(ArgumentError):
        attach_identity_check(trace, resampled)


def test_on_branch_until():
    times = np.array([1.0, 2.0, 3.0, 4.0])
    flags = np.ones((4, 2), dtype=bool)

    assert on_branch_until(times, flags) == 3.0
    flags[2, 1] = False
    assert on_branch_until(times, flags) == 1.0
    flags[0, 0] = False
    assert on_branch_until(times, flags) == 0.0


def homogeneous_inputs(**update):
    initial = voltages(0.1, -0.1, 0.0)
    W_initial = math.sqrt(variance(initial)[0])
    values = {"M": 0.0, "eps_tol": 1e-4, "delta": 0.5, "t_min": 4.0, "W0": W_initial}
    values.update(update)
    return initial, ThresholdInputs(**values)


def test_homogeneous_network_synchronizes_above_threshold():
    initial, inputs = homogeneous_inputs()
    params = [OscillatorParams(mu=(0.0,))] * 3

    report, trajectory, trace = verify_theorem(
        linear_model(), NetworkConfig(N=3, k=2.0), SCALES, params, inputs, TIGHT, initial=initial
    )

    assert report.k > report.k_star
    assert report.valid and report.passed is True
    assert report.status == CheckStatus.PASSED
    assert report.V_v_at_t_min < inputs.eps_tol
    assert report.envelope_status == CheckStatus.VACUOUS
    assert report.strict_horizon
    assert trace.envelope is not None and len(trace) == len(trajectory)


def test_declared_initial_error_must_cover_the_initial_state():
    initial, inputs = homogeneous_inputs(W0=0.01)

    with pytest.raises(ArgumentError):
        verify_theorem(
            linear_model(), NetworkConfig(N=3, k=2.0), SCALES, [OscillatorParams()] * 3, inputs,
            initial=initial,
        )


def test_uncoupled_network_has_no_envelope():
    initial, inputs = homogeneous_inputs()

    report, _, trace = verify_theorem(
        linear_model(), NetworkConfig(N=3, k=0.0), SCALES, [OscillatorParams()] * 3, inputs, TIGHT,
        initial=initial,
    )

    assert trace.envelope is None
    assert report.envelope_max_violation is None
    assert report.envelope_status == CheckStatus.VACUOUS


def test_leaving_the_attracting_branch_invalidates_the_run():
    base = linear_model()
    model = FunctionalModel(
        h1=base.h1,
        h2=base.h2,
        f=base.f,
        g1=base.g1,
        g2=base.g2,
        fast_jacobian=lambda v, u, x, y, z, eps_ts, delta, mu: np.broadcast_to(
            np.diag([1.0, -1.0]), np.shape(v) + (2, 2)
        ),
    )
    initial, inputs = homogeneous_inputs()

    report, _, _ = verify_theorem(
        model, NetworkConfig(N=3, k=2.0), SCALES, [OscillatorParams()] * 3, inputs, initial=initial
    )

    assert not report.valid
    assert report.passed is None
    assert report.status == CheckStatus.INVALID
    assert report.on_branch_until == 0.0
    assert report.detail


def test_sync_trace_csv_leaves_missing_series_empty(tmp_path):
    _, _, _, trajectory = run_linear((0.0, 0.0), 1.0, (0.2, -0.2))

    lines = write_sync_trace_csv(sync_trace(trajectory), tmp_path / "sync.csv").read_text().splitlines()

    assert lines[0] == ",".join(SYNC_TRACE_COLUMNS)
    assert len(lines) == 1 + len(trajectory)
    assert lines[1].endswith(",,,")


@pytest.mark.parametrize("eps_tol", [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6])
@pytest.mark.parametrize("t_min", [0.1, 1.0, 10.0, 100.0])
def test_threshold_reduces_to_log_over_twice_the_window(eps_tol, t_min):
    inputs = ThresholdInputs(M=0.0, eps_tol=eps_tol, delta=1.0, t_min=t_min, W0=0.5)

    assert coupling_threshold(inputs) == pytest.approx(-math.log(eps_tol) / (2.0 * t_min), rel=1e-12)


def test_threshold_is_monotone_over_random_inputs():
    rng = np.random.default_rng(2024)
    for _ in range(10_000):
        base = ThresholdInputs(
            M=rng.uniform(0.0, 1.0),
            eps_tol=10.0 ** rng.uniform(-6.0, -1.0),
            delta=rng.uniform(0.01, 1.0),
            t_min=rng.uniform(0.1, 100.0),
            W0=rng.uniform(0.0, 2.0),
        )
        k_star = coupling_threshold(base)
        step = rng.uniform(0.01, 1.0)

        assert coupling_threshold(base.model_copy(update={"M": base.M + step})) >= k_star
        assert coupling_threshold(base.model_copy(update={"W0": base.W0 + step})) >= k_star
        assert coupling_threshold(base.model_copy(update={"eps_tol": base.eps_tol * (1.0 + step)})) <= k_star
        assert coupling_threshold(base.model_copy(update={"t_min": base.t_min + step})) <= k_star


def reference_start(n=10, offset=0.0):
    """Every oscillator at the canard point, v spread evenly over +/- offset."""
    v = -1.4947
    row = np.array([v, 1.0 - 5.0 * v**2, 0.4211, -0.2, 0.0])
    states = np.tile(row, (n, 1))
    states[:, StateColumn.V] += np.linspace(-offset, offset, n)
    return NetworkState(t=0.0, states=states)


@pytest.fixture(scope="module")
def reference_run():
    model, params = make_reference_network(10, 0.1, seed=7)
    config = NetworkConfig(N=10, k=1.0)
    dynamics = NetworkDynamics(model, config, SCALES, params)
    settings = IntegratorSettings(rtol=1e-10, atol=1e-12, max_step=0.0025)
    trajectory, _ = integrate(dynamics, reference_start(), (0.0, 4.0), settings)
    return model, params, config, trajectory


def test_variance_identity_converges_at_second_order(reference_run):
    model, params, config, trajectory = reference_run

    coarse = check_variance_identity(trajectory, model, config, SCALES, params, step=0.005)
    fine = check_variance_identity(trajectory, model, config, SCALES, params, step=0.0025)

    # the coarse interior times are every other fine interior time, starting at 0.005
    common = fine.residual[1::2][: coarse.residual.size]
    np.testing.assert_allclose(fine.times[1::2][: coarse.times.size], coarse.times)
    assert coarse.max_residual <= 1e-5
    assert math.log2(coarse.max_residual / common.max()) >= 1.9


def test_cauchy_schwarz_slack_on_the_reference_run(reference_run):
    model, params, config, trajectory = reference_run

    check = check_variance_identity(trajectory, model, config, SCALES, params, step=0.005)

    assert check.M > 0.0
    assert check.min_cs_slack >= -1e-9


@pytest.mark.parametrize("k", [0.5, 1.0, 2.0, 5.0])
def test_gronwall_envelope_bounds_the_reference_run(k):
    model, params = make_reference_network(10, 0.1, seed=7)
    initial = reference_start(offset=0.02)
    W_initial = math.sqrt(variance(initial)[0])
    inputs = ThresholdInputs(M=0.0, eps_tol=1e-3, delta=0.1, t_min=20.0, W0=W_initial)

    report, _, trace = verify_theorem(
        model, NetworkConfig(N=10, k=k), SCALES, params, inputs, initial=initial
    )

    assert report.envelope_M > 0.0
    assert report.envelope_status != CheckStatus.FAILED
    assert report.envelope_max_violation <= SYNC_SETTINGS.ENVELOPE_SLACK * (1.0 + W_initial)
    assert trace.envelope is not None
