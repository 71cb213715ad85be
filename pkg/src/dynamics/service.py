import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.constants import STATE_DIM, StateColumn
from src.dynamics.constants import MODEL_FUNCTIONS, BoundSource
from src.dynamics.models import ModelDefinition, ReferenceBursterModel
from src.dynamics.schemas import (
    GridSpec,
    HeterogeneityBound,
    NetworkConfig,
    NetworkState,
    OscillatorParams,
    ReferenceCoefficients,
    StateBox,
    TimeScales,
    parameter_matrix,
)
from src.exceptions import ArgumentError, EvaluationError
from src.utils import FloatArray, make_rng

logger = logging.getLogger(__name__)


def _columns(states: FloatArray) -> Tuple[FloatArray, ...]:
    return tuple(states[..., column] for column in range(STATE_DIM))


def intrinsic_matrix(
    model: ModelDefinition,
    states: FloatArray,
    scales: TimeScales,
    mu: FloatArray,
) -> FloatArray:
    """Stack the raw (h1, h2, f, g1, g2) for every row of ``states``."""
    v, u, x, y, z = _columns(states)
    out = np.empty(states.shape, dtype=np.float64)
    for column, name in enumerate(MODEL_FUNCTIONS):
        values = model.evaluate(name, v, u, x, y, z, scales.eps_ts, scales.delta, mu)
        if not np.all(np.isfinite(values)):
            bad = np.flatnonzero(~np.isfinite(np.atleast_1d(values)))[0]
            row = np.atleast_2d(states)[bad]
            oscillator = int(bad) if states.ndim == 2 else None
            raise EvaluationError(name, [float(item) for item in row], oscillator)
        out[..., column] = values
    return out


def time_scale_rates(scales: TimeScales, frozen: Sequence[StateColumn] = ()) -> FloatArray:
    """Column factors (1, 1, eps_ts, eps_ts delta, eps_ts delta); ``frozen`` columns get 0."""
    slow = scales.eps_ts * scales.delta
    rates = np.array([1.0, 1.0, scales.eps_ts, slow, slow])
    for column in frozen:
        rates[int(column)] = 0.0
    return rates


def eval_intrinsic(
    model: ModelDefinition,
    state: Sequence[float],
    scales: TimeScales,
    params: OscillatorParams,
) -> FloatArray:
    """(h1, h2, eps_ts f, eps_ts delta g1, eps_ts delta g2) at a single oscillator state."""
    row = np.asarray(state, dtype=np.float64)
    if row.shape != (STATE_DIM,):
        raise ArgumentError(f"state must have {STATE_DIM} components, got {row.shape}")
    return intrinsic_matrix(model, row, scales, params.as_array()) * time_scale_rates(scales)


def coupling_term(state: NetworkState, config: NetworkConfig) -> FloatArray:
    """Mean-field diffusive coupling k (v_bar - v_i); zero for a single oscillator."""
    if state.n_oscillators != config.n_oscillators:
        raise ArgumentError(
            f"state has {state.n_oscillators} oscillators, config expects {config.n_oscillators}"
        )
    v = state.column(StateColumn.V)
    return config.k * (v.mean() - v)


class NetworkDynamics:
    """Right-hand side of the coupled network, callable as rhs(t, states).

    Columns listed in ``frozen`` do not move; the passage runs use this to
    hold z at its section value.
    """

    def __init__(
        self,
        model: ModelDefinition,
        config: NetworkConfig,
        scales: TimeScales,
        params: Sequence[OscillatorParams],
        frozen: Sequence[StateColumn] = (),
    ) -> None:
        if len(params) != config.n_oscillators:
            raise ArgumentError(
                f"{len(params)} parameter sets for {config.n_oscillators} oscillators"
            )
        self.model = model
        self.config = config
        self.scales = scales
        self.params = list(params)
        self.mu = parameter_matrix(params)
        self._rates = time_scale_rates(scales, frozen)

    def __call__(self, t: float, states: FloatArray) -> FloatArray:
        if states.shape != (self.config.n_oscillators, STATE_DIM):
            raise ArgumentError(
                f"states must have shape ({self.config.n_oscillators}, {STATE_DIM})"
            )
        rhs = intrinsic_matrix(self.model, states, self.scales, self.mu) * self._rates
        v = states[:, StateColumn.V]
        rhs[:, StateColumn.V] += self.config.k * (v.mean() - v)
        return rhs

    def h1_values(self, states: FloatArray) -> FloatArray:
        """h1 per oscillator; accepts (..., N, 5)."""
        v, u, x, y, z = _columns(states)
        return self.model.evaluate(
            "h1", v, u, x, y, z, self.scales.eps_ts, self.scales.delta, self.mu
        )


def network_rhs(
    model: ModelDefinition,
    state: NetworkState,
    config: NetworkConfig,
    scales: TimeScales,
    params: Sequence[OscillatorParams],
) -> FloatArray:
    return NetworkDynamics(model, config, scales, params)(state.t, state.states)


def _box_grid(box: StateBox, points: int) -> Tuple[FloatArray, ...]:
    axes = [np.linspace(low, high, points) for low, high in zip(box.lower, box.upper)]
    return tuple(np.meshgrid(*axes, indexing="ij"))


def heterogeneity_bound(
    model: ModelDefinition,
    box: StateBox,
    params: Sequence[OscillatorParams],
    sampling: Optional[GridSpec] = None,
    scales: Optional[TimeScales] = None,
    samples: Optional[FloatArray] = None,
) -> HeterogeneityBound:
    """Grid supremum of |h1| over the box and all oscillators.

    Level k of ``sampling`` puts 2^k + 1 points on each axis, so every finer
    level contains the nodes of the coarser ones. ``samples`` (shape
    (..., N, 5)) adds the exact maximum along a trajectory.
    """
    if box.is_empty:
        raise ArgumentError("heterogeneity box is empty")
    if not params:
        raise ArgumentError("at least one oscillator is required")
    sampling = sampling or GridSpec()
    scales = scales or TimeScales()
    mu = parameter_matrix(params)
    v, u, x, y, z = _box_grid(box, sampling.points_per_axis)
    bound = 0.0
    for row in mu:
        values = model.evaluate("h1", v, u, x, y, z, scales.eps_ts, scales.delta, row)
        if not np.all(np.isfinite(values)):
            raise EvaluationError("h1", list(box.lower), None)
        bound = max(bound, float(np.max(np.abs(values))))
    if samples is not None:
        sv, su, sx, sy, sz = _columns(samples)
        values = model.evaluate("h1", sv, su, sx, sy, sz, scales.eps_ts, scales.delta, mu)
        bound = max(bound, float(np.max(np.abs(values))))
    logger.debug(f"Heterogeneity bound M={bound:.6g} on {sampling.points_per_axis}^5 grid")
    return HeterogeneityBound(
        M=bound,
        points_per_axis=sampling.points_per_axis,
        refinement=sampling.refinement,
        source=BoundSource.MEASURED,
    )


def draw_parameters(n_oscillators: int, spread: float, seed: int) -> List[OscillatorParams]:
    """mu_i uniform on [-spread, spread] from the seed's parameter stream."""
    if n_oscillators < 1:
        raise ArgumentError("network needs at least one oscillator")
    if spread < 0.0:
        raise ArgumentError(f"spread must be non-negative, got {spread}")
    draws = make_rng(seed).uniform(-1.0, 1.0, size=n_oscillators) * spread
    return [OscillatorParams(mu=(float(value),)) for value in draws]


def make_reference_network(
    n_oscillators: int,
    spread: float,
    seed: int,
    coefficients: Optional[ReferenceCoefficients] = None,
) -> Tuple[ReferenceBursterModel, List[OscillatorParams]]:
    """Reference burster with mu0 + mu_i, mu_i drawn uniformly from [-spread, spread]."""
    params = draw_parameters(n_oscillators, spread, seed)
    model = ReferenceBursterModel(coefficients)
    model.validate()
    return model, params
