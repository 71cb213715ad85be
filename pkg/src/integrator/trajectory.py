from typing import Optional

import numpy as np

from src.constants import StateColumn
from src.dynamics.schemas import NetworkState, StateBox
from src.exceptions import ArgumentError, RangeError
from src.integrator.schemas import IntegrationStats
from src.utils import FloatArray


def hermite(
    t0: float,
    y0: FloatArray,
    f0: FloatArray,
    t1: float,
    y1: FloatArray,
    f1: FloatArray,
    t: FloatArray,
) -> FloatArray:
    """Cubic Hermite interpolant on [t0, t1]; ``t`` may be a vector."""
    h = t1 - t0
    theta = ((np.asarray(t, dtype=np.float64) - t0) / h)[..., None, None]
    theta2 = theta * theta
    theta3 = theta2 * theta
    h00 = 2.0 * theta3 - 3.0 * theta2 + 1.0
    h10 = theta3 - 2.0 * theta2 + theta
    h01 = -2.0 * theta3 + 3.0 * theta2
    h11 = theta3 - theta2
    return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1


class Trajectory:
    """Accepted samples of a network run with C1 dense output between them."""

    def __init__(
        self,
        times: FloatArray,
        states: FloatArray,
        derivatives: FloatArray,
        stats: IntegrationStats,
    ) -> None:
        times = np.asarray(times, dtype=np.float64)
        states = np.asarray(states, dtype=np.float64)
        derivatives = np.asarray(derivatives, dtype=np.float64)
        if times.ndim != 1 or times.size < 1:
            raise ArgumentError("trajectory needs at least one sample")
        if states.shape[0] != times.size or derivatives.shape != states.shape:
            raise ArgumentError("times, states and derivatives disagree in length")
        if times.size > 1 and not np.all(np.diff(times) > 0.0):
            raise ArgumentError("trajectory times must be strictly increasing")
        self._times = times
        self._states = states
        self._derivatives = derivatives
        self.stats = stats
        for array in (self._times, self._states, self._derivatives):
            array.setflags(write=False)

    def __len__(self) -> int:
        return int(self._times.size)

    @property
    def times(self) -> FloatArray:
        return self._times

    @property
    def states(self) -> FloatArray:
        return self._states

    @property
    def derivatives(self) -> FloatArray:
        return self._derivatives

    @property
    def n_oscillators(self) -> int:
        return int(self._states.shape[1])

    @property
    def t_start(self) -> float:
        return float(self._times[0])

    @property
    def t_end(self) -> float:
        return float(self._times[-1])

    def column(self, column: StateColumn, oscillator: Optional[int] = None) -> FloatArray:
        values = self._states[:, :, int(column)]
        return values if oscillator is None else values[:, oscillator]

    def sample(self, times: FloatArray) -> FloatArray:
        """Dense-output states at ``times``, shape (len(times), N, 5)."""
        query = np.atleast_1d(np.asarray(times, dtype=np.float64))
        slack = 1e-12 * max(1.0, abs(self.t_end))
        if query.min() < self.t_start - slack or query.max() > self.t_end + slack:
            raise RangeError("t", float(query.min()), self.t_start, self.t_end)
        if len(self) == 1:
            return np.repeat(self._states[:1], query.size, axis=0)
        query = np.clip(query, self.t_start, self.t_end)
        index = np.clip(np.searchsorted(self._times, query, side="right") - 1, 0, len(self) - 2)
        t0 = self._times[index]
        t1 = self._times[index + 1]
        h = (t1 - t0)[:, None, None]
        theta = ((query - t0) / (t1 - t0))[:, None, None]
        theta2 = theta * theta
        theta3 = theta2 * theta
        return (
            (2.0 * theta3 - 3.0 * theta2 + 1.0) * self._states[index]
            + (theta3 - 2.0 * theta2 + theta) * h * self._derivatives[index]
            + (-2.0 * theta3 + 3.0 * theta2) * self._states[index + 1]
            + (theta3 - theta2) * h * self._derivatives[index + 1]
        )

    def interpolate(self, t: float) -> FloatArray:
        return self.sample(np.array([t]))[0]

    def initial_state(self) -> NetworkState:
        return NetworkState(t=self.t_start, states=self._states[0])

    def final_state(self) -> NetworkState:
        return NetworkState(t=self.t_end, states=self._states[-1])

    def bounding_box(self, t_end: Optional[float] = None) -> StateBox:
        states = self._states
        if t_end is not None:
            states = states[self._times <= t_end]
        return StateBox.from_points(states)

    def window(self, t_start: float, t_end: float) -> "Trajectory":
        """Restriction to [t_start, t_end]; the end points are interpolated."""
        if not t_end > t_start:
            raise ArgumentError("window end must exceed its start")
        inner = (self._times > t_start) & (self._times < t_end)
        edges = np.array([t_start, t_end])
        edge_states = self.sample(edges)
        edge_derivatives = self._edge_derivatives(edges)
        times = np.concatenate([[t_start], self._times[inner], [t_end]])
        states = np.concatenate([edge_states[:1], self._states[inner], edge_states[1:]])
        derivatives = np.concatenate(
            [edge_derivatives[:1], self._derivatives[inner], edge_derivatives[1:]]
        )
        return Trajectory(times, states, derivatives, self.stats)

    def _edge_derivatives(self, times: FloatArray) -> FloatArray:
        index = np.clip(np.searchsorted(self._times, times, side="right") - 1, 0, len(self) - 2)
        t0 = self._times[index]
        t1 = self._times[index + 1]
        h = (t1 - t0)[:, None, None]
        theta = ((times - t0) / (t1 - t0))[:, None, None]
        theta2 = theta * theta
        return (
            (6.0 * theta2 - 6.0 * theta) / h * self._states[index]
            + (3.0 * theta2 - 4.0 * theta + 1.0) * self._derivatives[index]
            + (-6.0 * theta2 + 6.0 * theta) / h * self._states[index + 1]
            + (3.0 * theta2 - 2.0 * theta) * self._derivatives[index + 1]
        )
