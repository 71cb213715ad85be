from abc import ABC, abstractmethod
from typing import Callable, NamedTuple

import numpy as np
from scipy.linalg import LinAlgError, lu_factor, lu_solve

from src.integrator.constants import (
    DOPRI_A,
    DOPRI_B,
    DOPRI_B_HAT,
    DOPRI_C,
    DOPRI_ERROR_ORDER,
    ROS3_A,
    ROS3_ALPHA,
    ROS3_C,
    ROS3_E,
    ROS3_ERROR_ORDER,
    ROS3_GAMMA,
    ROS3_M,
    ROS3_NEW_F,
)
from src.utils import FloatArray

RightHandSide = Callable[[float, FloatArray], FloatArray]


class StepResult(NamedTuple):
    y_new: FloatArray
    f_new: FloatArray
    error_norm: float


def error_norm(
    error: FloatArray, y: FloatArray, y_new: FloatArray, rtol: float, atol: float
) -> float:
    """Root-mean-square of the error scaled by atol + rtol * max(|y|, |y_new|)."""
    scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
    return float(np.sqrt(np.mean((error / scale) ** 2)))


class Stepper(ABC):
    error_order: int

    def __init__(self, rhs: RightHandSide, rtol: float, atol: float) -> None:
        self.rhs = rhs
        self.rtol = rtol
        self.atol = atol
        self.rhs_evaluations = 0

    def evaluate(self, t: float, y: FloatArray) -> FloatArray:
        self.rhs_evaluations += 1
        return self.rhs(t, y)

    @abstractmethod
    def step(self, t: float, y: FloatArray, f0: FloatArray, h: float) -> StepResult:
        raise NotImplementedError()


class DormandPrinceStepper(Stepper):
    """Explicit Dormand-Prince 5(4) with first-same-as-last reuse."""

    error_order = DOPRI_ERROR_ORDER

    def step(self, t: float, y: FloatArray, f0: FloatArray, h: float) -> StepResult:
        stages = [f0]
        for index in range(1, 7):
            increment = sum(
                (coefficient * stage for coefficient, stage in zip(DOPRI_A[index], stages)),
                np.zeros_like(y),
            )
            stages.append(self.evaluate(t + DOPRI_C[index] * h, y + h * increment))
        # stage 7 is evaluated at the 5th-order solution, so it doubles as f_new
        y_new = y + h * sum(
            (coefficient * stage for coefficient, stage in zip(DOPRI_B, stages)),
            np.zeros_like(y),
        )
        error = h * sum(
            (
                (high - low) * stage
                for high, low, stage in zip(DOPRI_B, DOPRI_B_HAT, stages)
            ),
            np.zeros_like(y),
        )
        return StepResult(
            y_new, stages[6], error_norm(error, y, y_new, self.rtol, self.atol)
        )


class RosenbrockStepper(Stepper):
    """L-stable ROS3 with a finite-difference Jacobian, factored once per step."""

    error_order = ROS3_ERROR_ORDER

    def __init__(self, rhs: RightHandSide, rtol: float, atol: float) -> None:
        super().__init__(rhs, rtol, atol)
        self._delta = np.sqrt(np.finfo(np.float64).eps)

    def _jacobian(self, t: float, y: FloatArray, f0: FloatArray) -> FloatArray:
        shape = y.shape
        flat = y.reshape(-1)
        base = f0.reshape(-1)
        jac = np.empty((flat.size, flat.size))
        for column in range(flat.size):
            h = self._delta * max(1e-5, abs(flat[column]))
            shifted = flat.copy()
            shifted[column] += h
            jac[:, column] = (self.evaluate(t, shifted.reshape(shape)).reshape(-1) - base) / h
        return jac

    def _time_derivative(self, t: float, y: FloatArray, f0: FloatArray) -> FloatArray:
        dt = self._delta * max(1e-5, abs(t))
        return (self.evaluate(t + dt, y) - f0) / dt

    def step(self, t: float, y: FloatArray, f0: FloatArray, h: float) -> StepResult:
        shape = y.shape
        jac = self._jacobian(t, y, f0)
        dfdt = self._time_derivative(t, y, f0).reshape(-1)
        matrix = np.eye(jac.shape[0]) / (h * ROS3_GAMMA[0]) - jac
        try:
            factor = lu_factor(matrix, check_finite=True)
        except (LinAlgError, ValueError):
            return StepResult(y, f0, float("inf"))
        flat = y.reshape(-1)
        stages: list[FloatArray] = []
        current_f = f0.reshape(-1)
        for index in range(3):
            if index > 0 and ROS3_NEW_F[index]:
                stage_y = flat + sum(
                    ROS3_A[(index, j)] * stages[j] for j in range(index)
                )
                current_f = self.evaluate(
                    t + ROS3_ALPHA[index] * h, stage_y.reshape(shape)
                ).reshape(-1)
            rhs = current_f + sum(
                (ROS3_C[(index, j)] / h) * stages[j] for j in range(index)
            )
            rhs = rhs + h * ROS3_GAMMA[index] * dfdt
            stages.append(lu_solve(factor, rhs))
        y_new = flat + sum(weight * stage for weight, stage in zip(ROS3_M, stages))
        error = sum(weight * stage for weight, stage in zip(ROS3_E, stages))
        if not np.all(np.isfinite(y_new)):
            return StepResult(y, f0, float("inf"))
        y_new = y_new.reshape(shape)
        f_new = self.evaluate(t + h, y_new)
        return StepResult(
            y_new, f_new, error_norm(np.asarray(error).reshape(shape), y, y_new, self.rtol, self.atol)
        )
