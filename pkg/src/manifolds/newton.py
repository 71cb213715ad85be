import logging
from typing import Callable, NamedTuple, Optional

import numpy as np

from src.dynamics.config import DYNAMICS_SETTINGS
from src.manifolds.config import MANIFOLD_SETTINGS
from src.utils import FloatArray, fd_step

logger = logging.getLogger(__name__)

Residual = Callable[[FloatArray], FloatArray]


class NewtonResult(NamedTuple):
    x: FloatArray
    residual: float
    iterations: int
    converged: bool


def fd_jacobian(fun: Residual, x: FloatArray) -> FloatArray:
    steps = fd_step(x, DYNAMICS_SETTINGS.FD_STEP_FACTOR)
    columns = []
    for index, step in enumerate(steps):
        shift = np.zeros_like(x)
        shift[index] = step
        columns.append((fun(x + shift) - fun(x - shift)) / (2.0 * step))
    return np.column_stack(columns)


def damped_newton(
    fun: Residual,
    x0: FloatArray,
    jac: Optional[Callable[[FloatArray], FloatArray]] = None,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
    residual_tol: Optional[FloatArray] = None,
) -> NewtonResult:
    """Newton iteration with step halving whenever the residual grows.

    Convergence is the max-norm of the residual below ``tol``; ``residual_tol``
    optionally scales the tolerance per equation.
    """
    tol = MANIFOLD_SETTINGS.ROOT_TOLERANCE if tol is None else tol
    max_iter = MANIFOLD_SETTINGS.NEWTON_MAX_ITER if max_iter is None else max_iter
    jacobian = jac or (lambda point: fd_jacobian(fun, point))

    def norm(values: FloatArray) -> float:
        if residual_tol is None:
            return float(np.max(np.abs(values)))
        return float(np.max(np.abs(values) / residual_tol)) * tol

    x = np.array(x0, dtype=np.float64)
    fx = fun(x)
    if not np.all(np.isfinite(fx)):
        return NewtonResult(x, float("inf"), 0, False)
    current = norm(fx)
    for iteration in range(max_iter):
        if current <= tol:
            return NewtonResult(x, current, iteration, True)
        try:
            step = np.linalg.solve(jacobian(x), -fx)
        except np.linalg.LinAlgError:
            logger.debug(f"Singular Jacobian at {x}")
            return NewtonResult(x, current, iteration, False)
        damping = 1.0
        for _ in range(MANIFOLD_SETTINGS.NEWTON_MAX_HALVINGS):
            trial = x + damping * step
            f_trial = fun(trial)
            if np.all(np.isfinite(f_trial)) and norm(f_trial) < current:
                break
            damping *= 0.5
        else:
            return NewtonResult(x, current, iteration, False)
        x, fx, current = trial, f_trial, norm(f_trial)
    return NewtonResult(x, current, max_iter, current <= tol)
