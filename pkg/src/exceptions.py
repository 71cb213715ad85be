from typing import Optional, Sequence

from fastapi import status


def _format_state(state: Sequence[float]) -> str:
    return "(" + ", ".join(f"{value:.6g}" for value in state) + ")"


class CanardSyncError(Exception):
    status_code: int = status.HTTP_500_INTERNAL_SERVER_ERROR
    exit_code: int = 1

    def __init__(self, detail: str) -> None:
        super().__init__(detail)
        self.detail = detail


class ArgumentError(CanardSyncError, ValueError):
    status_code = status.HTTP_400_BAD_REQUEST


class RangeError(ArgumentError):
    def __init__(self, quantity: str, value: float, low: float, high: float) -> None:
        super().__init__(f"{quantity}={value:.6g} outside [{low:.6g}, {high:.6g}]")
        self.quantity = quantity


class EvaluationError(CanardSyncError):
    status_code = status.HTTP_422_UNPROCESSABLE_ENTITY

    def __init__(
        self,
        function_name: str,
        state: Sequence[float],
        oscillator: Optional[int] = None,
    ) -> None:
        where = "" if oscillator is None else f" for oscillator {oscillator}"
        super().__init__(
            f"{function_name} returned a non-finite value{where} at state {_format_state(state)}"
        )
        self.function_name = function_name
        self.oscillator = oscillator


class IntegrationError(CanardSyncError):
    status_code = status.HTTP_422_UNPROCESSABLE_ENTITY

    def __init__(self, reason: str, t: float, state: Sequence[float]) -> None:
        super().__init__(f"{reason} at t={t:.9g}, state {_format_state(state)}")
        self.t = t


class StepSizeUnderflowError(IntegrationError):
    def __init__(self, t: float, step: float, state: Sequence[float]) -> None:
        super().__init__(f"step size underflow (h={step:.3e})", t, state)
        self.step = step


class NonFiniteStateError(IntegrationError):
    def __init__(self, t: float, state: Sequence[float]) -> None:
        super().__init__("non-finite state", t, state)


class ManifoldError(CanardSyncError):
    status_code = status.HTTP_422_UNPROCESSABLE_ENTITY


class AssumptionViolationError(CanardSyncError):
    status_code = status.HTTP_422_UNPROCESSABLE_ENTITY
    exit_code = 2

    def __init__(self, assumption: str, detail: str) -> None:
        super().__init__(f"assumption {assumption} violated: {detail}")
        self.assumption = assumption


class SingularPassageError(AssumptionViolationError):
    def __init__(self, detail: str) -> None:
        super().__init__("slow-passage", detail)


class NotFoundError(CanardSyncError):
    status_code = status.HTTP_404_NOT_FOUND


class CanardNotFoundError(NotFoundError, AssumptionViolationError):
    def __init__(self, oscillator: int, detail: str) -> None:
        AssumptionViolationError.__init__(
            self, "canard-point", f"oscillator {oscillator}: {detail}"
        )
        self.oscillator = oscillator


class CrossingNotFoundError(NotFoundError):
    def __init__(self, oscillator: int, entry_count: int, pre_jump_count: int) -> None:
        super().__init__(
            f"no entry/pre-jump crossing pair for oscillator {oscillator} "
            f"(entry crossings: {entry_count}, pre-jump crossings: {pre_jump_count})"
        )
        self.oscillator = oscillator
        self.entry_count = entry_count
        self.pre_jump_count = pre_jump_count


class DependencyError(CanardSyncError):
    status_code = status.HTTP_409_CONFLICT

    def __init__(self, stage: str, requested: str) -> None:
        super().__init__(f"{requested} requires the '{stage}' stage, which has not run")
        self.stage = stage
