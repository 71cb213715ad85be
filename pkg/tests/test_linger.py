import numpy as np
import pytest
from scipy.integrate import simpson

from src.constants import StateColumn
from src.dynamics.models import ReferenceBursterModel
from src.dynamics.schemas import ReferenceCoefficients, TimeScales
from src.exceptions import (
    ArgumentError,
    CrossingNotFoundError,
    RangeError,
    SingularPassageError,
)
from src.integrator.constants import CrossingDirection, IntegratorMethod
from src.integrator.schemas import IntegrationStats
from src.integrator.trajectory import Trajectory
from src.linger.constants import LingerMethod, SectionKind
from src.linger.schemas import PoincareSection, SectionOffsets
from src.linger.service import (
    build_sections,
    compute_linger_report,
    default_offsets,
    empirical_passages,
    linger_time_empirical,
    linger_time_quadrature,
    passage_trajectory,
    sync_window,
)


def slow_voltage(y):
    """Lower-branch voltage on S cap M for mu = 0: v^3 + 2v^2 + 4v + 4.65 - y = 0."""
    v = np.full_like(y, -1.5)
    for _ in range(60):
        v -= (v**3 + 2.0 * v**2 + 4.0 * v + 4.65 - y) / (3.0 * v**2 + 4.0 * v + 4.0)
    return v


def simpson_linger(y_start, y_end, rate, nodes=200_001):
    y = np.linspace(y_start, y_end, nodes)
    return simpson(1.0 / (rate * (slow_voltage(y) - y + 2.5)), x=y)


def section(kind, anchor, oscillator=0, half_width=10.0):
    return PoincareSection(
        kind=kind,
        oscillator=oscillator,
        anchor=anchor,
        y_center=0.0,
        z_center=0.0,
        y_half_width=half_width,
        z_half_width=half_width,
        phi_v=0.0,
        phi_u=0.0,
    )


def ramp(times, x):
    states = np.zeros((times.size, 1, 5))
    states[:, 0, StateColumn.X] = x
    derivatives = np.zeros_like(states)
    derivatives[:, 0, StateColumn.X] = np.gradient(x, times)
    return Trajectory(times, states, derivatives, IntegrationStats(method=IntegratorMethod.EXPLICIT))


def test_quadrature_matches_fixed_grid_oracle(reference_geometry, reference_model, zero_params, scales):
    value = linger_time_quadrature(
        reference_model, zero_params, scales, reference_geometry.slow_chart, (-0.3, 0.45), 0.0
    )

    assert value == pytest.approx(simpson_linger(-0.3, 0.45, 0.005), rel=1e-6)


def test_quadrature_scales_inversely_with_delta(reference_geometry, reference_model, zero_params):
    args = (reference_geometry.slow_chart, (-0.3, 0.4), 0.0)
    slow = linger_time_quadrature(reference_model, zero_params, TimeScales(eps_ts=0.05, delta=0.1), *args)
    fast = linger_time_quadrature(reference_model, zero_params, TimeScales(eps_ts=0.05, delta=0.2), *args)

    assert fast == pytest.approx(slow / 2.0, rel=1e-8)


def test_vanishing_slow_speed_is_a_singular_passage(reference_geometry, zero_params, scales):
    # e1 = 1.4 makes g1 change sign between y = -0.3 and y = 0.45
    model = ReferenceBursterModel(ReferenceCoefficients(e1=1.4))

    with pytest.raises(SingularPassageError):
        linger_time_quadrature(model, zero_params, scales, reference_geometry.slow_chart, (-0.3, 0.45), 0.0)


def test_range_against_the_slow_flow_is_rejected(reference_geometry, reference_model, zero_params, scales):
    with pytest.raises(SingularPassageError):
        linger_time_quadrature(
            reference_model, zero_params, scales, reference_geometry.slow_chart, (0.4, -0.3), 0.0
        )


def test_empty_range_is_rejected(reference_geometry, reference_model, zero_params, scales):
    with pytest.raises(ArgumentError):
        linger_time_quadrature(
            reference_model, zero_params, scales, reference_geometry.slow_chart, (0.1, 0.1), 0.0
        )


def test_default_offsets_fit_between_canard_and_jump(reference_geometry):
    geometry = reference_geometry
    offsets = default_offsets(geometry.canard, geometry.jump, geometry.slow_chart)

    assert 0.0 < offsets.delta_x < abs(geometry.canard.x - geometry.jump.x)
    assert offsets.delta_y == pytest.approx(0.05 * 1.4)
    assert offsets.delta_z == pytest.approx(0.05 * 1.0)


def test_sections_are_anchored_before_canard_and_jump(reference_geometry, reference_model, zero_params):
    geometry = reference_geometry
    offsets = default_offsets(geometry.canard, geometry.jump, geometry.slow_chart)

    entry, pre_jump = build_sections(
        geometry.canard, geometry.jump, offsets, geometry.chart, reference_model, zero_params
    )

    assert entry.kind == SectionKind.ENTRY and pre_jump.kind == SectionKind.PRE_JUMP
    assert entry.anchor == pytest.approx(geometry.canard.x - offsets.delta_x)
    assert pre_jump.anchor == pytest.approx(geometry.jump.x - offsets.delta_x_prime)
    assert entry.phi_v < -4.0 / 3.0
    mu = zero_params.as_array()
    for item in (entry, pre_jump):
        state = item.anchor_state()
        assert abs(float(reference_model.evaluate("h2", *state, 0.0, 0.0, mu))) <= 1e-10
    assert abs(float(reference_model.evaluate("h1", *entry.anchor_state(), 0.0, 0.0, mu))) <= 1e-10


def test_entry_plane_meets_the_slow_manifold_where_the_quadrature_starts(
    reference_geometry, reference_model, zero_params
):
    geometry = reference_geometry
    offsets = default_offsets(
        geometry.canard, geometry.jump, geometry.slow_chart, reference_model, zero_params
    )
    start = geometry.canard.y - offsets.delta_y
    # on S cap M, x = 4 (v + 1.6)
    expected_anchor = 4.0 * (float(slow_voltage(np.array([start]))[0]) + 1.6)

    entry, pre_jump = build_sections(
        geometry.canard, geometry.jump, offsets, geometry.chart, reference_model, zero_params
    )

    assert entry.anchor == pytest.approx(expected_anchor, abs=1e-8)
    assert entry.y_center == pytest.approx(start, abs=1e-8)
    assert offsets.delta_x_prime == pytest.approx(0.02 * abs(geometry.canard.x - geometry.jump.x))
    assert entry.direction == pre_jump.direction == CrossingDirection.RISING
    mu = zero_params.as_array()
    for item in (entry, pre_jump):
        assert abs(float(reference_model.evaluate("f", *item.anchor_state(), 0.0, 0.0, mu))) <= 1e-10


def test_fixed_anchor_share_without_a_model(reference_geometry):
    geometry = reference_geometry

    offsets = default_offsets(geometry.canard, geometry.jump, geometry.slow_chart)

    assert offsets.delta_x == pytest.approx(0.02 * abs(geometry.canard.x - geometry.jump.x))


def test_sections_reject_offsets_beyond_the_gap(reference_geometry, reference_model, zero_params):
    geometry = reference_geometry
    gap = abs(geometry.canard.x - geometry.jump.x)
    offsets = SectionOffsets(
        delta_x=gap, delta_y=0.05, delta_z=0.05, delta_x_prime=0.01, delta_y_prime=0.05, delta_z_prime=0.05
    )

    with pytest.raises(ArgumentError):
        build_sections(geometry.canard, geometry.jump, offsets, geometry.chart, reference_model, zero_params)


def test_sections_reject_anchors_outside_the_chart(reference_geometry, reference_model, zero_params):
    geometry = reference_geometry
    offsets = SectionOffsets(
        delta_x=0.5, delta_y=0.05, delta_z=0.05, delta_x_prime=0.1, delta_y_prime=0.05, delta_z_prime=0.05
    )

    with pytest.raises(RangeError):
        build_sections(geometry.canard, geometry.jump, offsets, geometry.chart, reference_model, zero_params)


def test_sections_reject_mixed_oscillators(reference_geometry, reference_model, zero_params):
    geometry = reference_geometry
    offsets = default_offsets(geometry.canard, geometry.jump, geometry.slow_chart)
    other = geometry.canard.model_copy(update={"oscillator": 1})

    with pytest.raises(ArgumentError):
        build_sections(other, geometry.jump, offsets, geometry.chart, reference_model, zero_params)


def test_linger_report_for_one_oscillator(reference_geometry, reference_model, zero_params, scales):
    report = compute_linger_report(reference_model, [zero_params], scales, [reference_geometry])

    entry = report.entries[0]
    assert report.method == LingerMethod.QUADRATURE
    assert len(report.sections) == 2
    assert entry.y_range[1] == pytest.approx(reference_geometry.jump.y)
    assert entry.y_range[0] < reference_geometry.canard.y
    assert report.t_min == entry.t_linger
    assert entry.t_linger == pytest.approx(simpson_linger(*entry.y_range, 0.005), rel=1e-6)


def test_homogeneous_network_has_equal_linger_times(reference_geometry, reference_model, zero_params, scales):
    twin = reference_geometry.model_copy(
        update={
            "oscillator": 1,
            "canard": reference_geometry.canard.model_copy(update={"oscillator": 1}),
            "jump": reference_geometry.jump.model_copy(update={"oscillator": 1}),
            "charts": [chart.model_copy(update={"oscillator": 1}) for chart in reference_geometry.charts],
        }
    )

    report = compute_linger_report(
        reference_model, [zero_params, zero_params], scales, [reference_geometry, twin]
    )

    first, second = report.times
    assert second == pytest.approx(first, rel=1e-10)
    assert report.t_min == pytest.approx(first, rel=1e-10)


def test_empirical_linger_on_linear_motion():
    times = np.linspace(0.0, 1.0, 11)
    trajectory = ramp(times, times)

    value = linger_time_empirical(
        trajectory, section(SectionKind.ENTRY, 0.2), section(SectionKind.PRE_JUMP, 0.8)
    )

    assert value == pytest.approx(0.6, abs=2e-9)


def test_each_passage_is_reported_separately():
    times = np.linspace(0.0, 4.0, 401)
    # two up-and-down sweeps between x = 0 and x = 1
    trajectory = ramp(times, 0.5 - 0.5 * np.cos(np.pi * times))

    passages = empirical_passages(
        trajectory, section(SectionKind.ENTRY, 0.25), section(SectionKind.PRE_JUMP, 0.75)
    )

    assert len(passages) == 2
    for t_in, t_out in passages:
        assert t_out > t_in


def test_missing_pre_jump_crossing_is_reported():
    times = np.linspace(0.0, 1.0, 11)

    with pytest.raises(CrossingNotFoundError) as info:
        linger_time_empirical(
            ramp(times, times), section(SectionKind.ENTRY, 0.2), section(SectionKind.PRE_JUMP, 2.0)
        )
    assert info.value.entry_count == 1
    assert info.value.pre_jump_count == 0


def test_sections_of_different_oscillators_are_rejected():
    times = np.linspace(0.0, 1.0, 11)

    with pytest.raises(ArgumentError):
        empirical_passages(
            ramp(times, times),
            section(SectionKind.ENTRY, 0.2),
            section(SectionKind.PRE_JUMP, 0.8, oscillator=1),
        )


def test_sync_window_is_the_minimum():
    assert sync_window([3.0, 1.5, 2.0]) == 1.5
    with pytest.raises(ArgumentError):
        sync_window([])


def test_passage_starts_upstream_with_z_held(reference_geometry, reference_model, zero_params, scales):
    geometry = reference_geometry
    offsets = default_offsets(geometry.canard, geometry.jump, geometry.slow_chart, reference_model, zero_params)
    entry, pre_jump = build_sections(
        geometry.canard, geometry.jump, offsets, geometry.chart, reference_model, zero_params
    )

    trajectory = passage_trajectory(
        reference_model, zero_params, scales, geometry, entry, pre_jump, offsets.delta_y
    )

    y = trajectory.column(StateColumn.Y, 0)
    assert y[0] == pytest.approx(entry.y_center - 2.0 * offsets.delta_y)
    assert trajectory.column(StateColumn.X, 0)[0] < entry.anchor
    assert trajectory.column(StateColumn.X, 0)[-1] > pre_jump.anchor
    np.testing.assert_array_equal(trajectory.column(StateColumn.Z, 0), entry.z_center)
    assert trajectory.stats.terminated_by == "stop"


def test_empirical_report_keeps_the_quadrature_value(reference_geometry, reference_model, zero_params, scales):
    report = compute_linger_report(
        reference_model, [zero_params], scales, [reference_geometry], method=LingerMethod.EMPIRICAL
    )

    entry = report.entries[0]
    assert report.method == LingerMethod.EMPIRICAL
    assert entry.t_quadrature == pytest.approx(simpson_linger(*entry.y_range, 0.005), rel=1e-6)
    assert entry.error_estimate == pytest.approx(abs(entry.t_linger - entry.t_quadrature))
    assert abs(entry.relative_gap) < 0.25


@pytest.mark.slow
def test_measured_passage_approaches_quadrature_as_scales_shrink(
    reference_geometry, reference_model, zero_params
):
    ladder = [TimeScales(eps_ts=0.05, delta=0.1), TimeScales(eps_ts=0.02, delta=0.08), TimeScales(eps_ts=0.01, delta=0.05)]

    entries = [
        compute_linger_report(
            reference_model, [zero_params], scales, [reference_geometry], method=LingerMethod.EMPIRICAL
        ).entries[0]
        for scales in ladder
    ]

    gaps = [abs(entry.relative_gap) for entry in entries]
    assert [entry.t_quadrature for entry in entries] == pytest.approx([166.3, 519.6, 1662.6], rel=2e-3)
    assert gaps == sorted(gaps, reverse=True)
    assert gaps[-1] < 0.05
