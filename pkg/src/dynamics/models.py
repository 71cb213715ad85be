import logging
from abc import ABC, abstractmethod
from typing import Any, Callable, Dict, Mapping, Optional

import numpy as np

from src.dynamics.config import DYNAMICS_SETTINGS
from src.dynamics.constants import MODEL_FUNCTIONS, ModelId
from src.dynamics.schemas import ReferenceCoefficients
from src.exceptions import ArgumentError, AssumptionViolationError
from src.utils import FloatArray, fd_step

logger = logging.getLogger(__name__)

Evaluator = Callable[..., Any]


class ModelDefinition(ABC):
    """Intrinsic dynamics (h1, h2, f, g1, g2) of one oscillator.

    Every evaluator takes broadcastable arrays (v, u, x, y, z), the scalars
    eps_ts and delta, and a parameter array ``mu`` whose last axis indexes the
    control parameters. Manifold computations pass eps_ts = 0 (and delta = 0
    for the slow reduction).
    """

    model_id: str = ModelId.FUNCTIONAL
    has_analytic_fast_jacobian: bool = False

    @abstractmethod
    def h1(self, v: Any, u: Any, x: Any, y: Any, z: Any, eps_ts: float, delta: float, mu: Any) -> Any:
        raise NotImplementedError()

    @abstractmethod
    def h2(self, v: Any, u: Any, x: Any, y: Any, z: Any, eps_ts: float, delta: float, mu: Any) -> Any:
        raise NotImplementedError()

    @abstractmethod
    def f(self, v: Any, u: Any, x: Any, y: Any, z: Any, eps_ts: float, delta: float, mu: Any) -> Any:
        raise NotImplementedError()

    @abstractmethod
    def g1(self, v: Any, u: Any, x: Any, y: Any, z: Any, eps_ts: float, delta: float, mu: Any) -> Any:
        raise NotImplementedError()

    @abstractmethod
    def g2(self, v: Any, u: Any, x: Any, y: Any, z: Any, eps_ts: float, delta: float, mu: Any) -> Any:
        raise NotImplementedError()

    def evaluate(
        self,
        name: str,
        v: Any,
        u: Any,
        x: Any,
        y: Any,
        z: Any,
        eps_ts: float,
        delta: float,
        mu: Any,
    ) -> FloatArray:
        """Evaluate one function, broadcast to the common shape of the state arrays."""
        if name not in MODEL_FUNCTIONS:
            raise ArgumentError(f"unknown model function '{name}'")
        shape = np.broadcast_shapes(*(np.shape(item) for item in (v, u, x, y, z)))
        value = getattr(self, name)(v, u, x, y, z, eps_ts, delta, mu)
        return np.broadcast_to(np.asarray(value, dtype=np.float64), shape)

    def fast_jacobian(
        self,
        v: Any,
        u: Any,
        x: Any,
        y: Any,
        z: Any,
        eps_ts: float,
        delta: float,
        mu: Any,
    ) -> FloatArray:
        """D_(v,u)(h1, h2) with trailing shape (2, 2); central differences."""
        v = np.asarray(v, dtype=np.float64)
        u = np.asarray(u, dtype=np.float64)
        shape = np.broadcast_shapes(*(np.shape(item) for item in (v, u, x, y, z)))
        v, u = np.broadcast_to(v, shape), np.broadcast_to(u, shape)
        hv = fd_step(v, DYNAMICS_SETTINGS.FD_STEP_FACTOR)
        hu = fd_step(u, DYNAMICS_SETTINGS.FD_STEP_FACTOR)
        jac = np.empty(shape + (2, 2))
        for row, name in enumerate(("h1", "h2")):
            forward = self.evaluate(name, v + hv, u, x, y, z, eps_ts, delta, mu)
            backward = self.evaluate(name, v - hv, u, x, y, z, eps_ts, delta, mu)
            jac[..., row, 0] = (forward - backward) / (2.0 * hv)
            forward = self.evaluate(name, v, u + hu, x, y, z, eps_ts, delta, mu)
            backward = self.evaluate(name, v, u - hu, x, y, z, eps_ts, delta, mu)
            jac[..., row, 1] = (forward - backward) / (2.0 * hu)
        return jac

    def df_dx(
        self,
        v: Any,
        u: Any,
        x: Any,
        y: Any,
        z: Any,
        eps_ts: float,
        delta: float,
        mu: Any,
    ) -> FloatArray:
        x = np.asarray(x, dtype=np.float64)
        hx = fd_step(x, DYNAMICS_SETTINGS.FD_STEP_FACTOR)
        forward = self.evaluate("f", v, u, x + hx, y, z, eps_ts, delta, mu)
        backward = self.evaluate("f", v, u, x - hx, y, z, eps_ts, delta, mu)
        return (forward - backward) / (2.0 * hx)

    def coefficient_table(self) -> Dict[str, float]:
        return {}

    def validate(self) -> None:
        """Startup assumption check; models without structural knowledge accept."""
        return None


class ReferenceBursterModel(ModelDefinition):
    """Hindmarsh–Rose type burster with a slow feedback r*y into the fast voltage.

    h1 = u - a v^3 + b v^2 - x + r y + I + mu0 + mu[0]
    h2 = c - d v^2 - u
    f  = s (v - v0) - x
    g1 = v - y + e1
    g2 = y - z
    """

    model_id = ModelId.REFERENCE_BURSTER
    has_analytic_fast_jacobian = True

    def __init__(self, coefficients: Optional[ReferenceCoefficients] = None) -> None:
        self.coefficients = coefficients or ReferenceCoefficients()

    @classmethod
    def from_overrides(cls, overrides: Mapping[str, float]) -> "ReferenceBursterModel":
        unknown = set(overrides) - set(ReferenceCoefficients.model_fields)
        if unknown:
            raise ArgumentError(f"unknown reference coefficients: {sorted(unknown)}")
        return cls(ReferenceCoefficients(**overrides))

    def h1(self, v: Any, u: Any, x: Any, y: Any, z: Any, eps_ts: float, delta: float, mu: Any) -> Any:
        c = self.coefficients
        mu = np.asarray(mu, dtype=np.float64)
        return u - c.a * v**3 + c.b * v**2 - x + c.r * y + c.I + c.mu0 + mu[..., 0]

    def h2(self, v: Any, u: Any, x: Any, y: Any, z: Any, eps_ts: float, delta: float, mu: Any) -> Any:
        c = self.coefficients
        return c.c - c.d * v**2 - u

    def f(self, v: Any, u: Any, x: Any, y: Any, z: Any, eps_ts: float, delta: float, mu: Any) -> Any:
        c = self.coefficients
        return c.s * (v - c.v0) - x

    def g1(self, v: Any, u: Any, x: Any, y: Any, z: Any, eps_ts: float, delta: float, mu: Any) -> Any:
        return v - y + self.coefficients.e1

    def g2(self, v: Any, u: Any, x: Any, y: Any, z: Any, eps_ts: float, delta: float, mu: Any) -> Any:
        return y - z

    def fast_jacobian(
        self,
        v: Any,
        u: Any,
        x: Any,
        y: Any,
        z: Any,
        eps_ts: float,
        delta: float,
        mu: Any,
    ) -> FloatArray:
        c = self.coefficients
        v = np.asarray(v, dtype=np.float64)
        shape = np.broadcast_shapes(*(np.shape(item) for item in (v, u, x, y, z)))
        v = np.broadcast_to(v, shape)
        jac = np.empty(shape + (2, 2))
        jac[..., 0, 0] = -3.0 * c.a * v**2 + 2.0 * c.b * v
        jac[..., 0, 1] = 1.0
        jac[..., 1, 0] = -2.0 * c.d * v
        jac[..., 1, 1] = -1.0
        return jac

    def df_dx(
        self,
        v: Any,
        u: Any,
        x: Any,
        y: Any,
        z: Any,
        eps_ts: float,
        delta: float,
        mu: Any,
    ) -> FloatArray:
        shape = np.broadcast_shapes(*(np.shape(item) for item in (v, u, x, y, z)))
        return np.full(shape, -1.0)

    def fold_voltages(self) -> tuple[float, float]:
        """Voltages where det D_(v,u)h = 3a v^2 + 2(d - b) v vanishes."""
        c = self.coefficients
        return (-2.0 * (c.d - c.b) / (3.0 * c.a), 0.0)

    def coefficient_table(self) -> Dict[str, float]:
        return self.coefficients.model_dump()

    def validate(self) -> None:
        c = self.coefficients
        if c.a <= 0.0:
            raise AssumptionViolationError(
                "critical-manifold", f"cubic coefficient a={c.a} must be positive"
            )
        if c.d == c.b:
            raise AssumptionViolationError(
                "critical-manifold", "b == d collapses the two folds into one"
            )
        if c.s <= 0.0:
            raise AssumptionViolationError(
                "slow-manifold", f"s={c.s} must be positive for a transversal intersection"
            )
        lower_fold = min(self.fold_voltages())
        v_test = lower_fold - 0.25
        trace = -3.0 * c.a * v_test**2 + 2.0 * c.b * v_test - 1.0
        det = 3.0 * c.a * v_test**2 + 2.0 * (c.d - c.b) * v_test
        if not (trace < 0.0 and det > 0.0):
            raise AssumptionViolationError(
                "critical-manifold", "lower branch is not normally attracting"
            )
        if c.r == 0.0:
            logger.warning(
                "Reference burster has r=0; slow variables do not move the critical manifold"
            )


class FunctionalModel(ModelDefinition):
    """Model assembled from user callables with the evaluator signature."""

    def __init__(
        self,
        h1: Evaluator,
        h2: Evaluator,
        f: Evaluator,
        g1: Evaluator,
        g2: Evaluator,
        fast_jacobian: Optional[Evaluator] = None,
        name: str = ModelId.FUNCTIONAL,
    ) -> None:
        self._functions: Dict[str, Evaluator] = {
            "h1": h1,
            "h2": h2,
            "f": f,
            "g1": g1,
            "g2": g2,
        }
        self._fast_jacobian = fast_jacobian
        self.has_analytic_fast_jacobian = fast_jacobian is not None
        self.model_id = name

    def h1(self, v: Any, u: Any, x: Any, y: Any, z: Any, eps_ts: float, delta: float, mu: Any) -> Any:
        return self._functions["h1"](v, u, x, y, z, eps_ts, delta, mu)

    def h2(self, v: Any, u: Any, x: Any, y: Any, z: Any, eps_ts: float, delta: float, mu: Any) -> Any:
        return self._functions["h2"](v, u, x, y, z, eps_ts, delta, mu)

    def f(self, v: Any, u: Any, x: Any, y: Any, z: Any, eps_ts: float, delta: float, mu: Any) -> Any:
        return self._functions["f"](v, u, x, y, z, eps_ts, delta, mu)

    def g1(self, v: Any, u: Any, x: Any, y: Any, z: Any, eps_ts: float, delta: float, mu: Any) -> Any:
        return self._functions["g1"](v, u, x, y, z, eps_ts, delta, mu)

    def g2(self, v: Any, u: Any, x: Any, y: Any, z: Any, eps_ts: float, delta: float, mu: Any) -> Any:
        return self._functions["g2"](v, u, x, y, z, eps_ts, delta, mu)

    def fast_jacobian(
        self,
        v: Any,
        u: Any,
        x: Any,
        y: Any,
        z: Any,
        eps_ts: float,
        delta: float,
        mu: Any,
    ) -> FloatArray:
        if self._fast_jacobian is None:
            return super().fast_jacobian(v, u, x, y, z, eps_ts, delta, mu)
        return np.asarray(
            self._fast_jacobian(v, u, x, y, z, eps_ts, delta, mu), dtype=np.float64
        )


class ModelHandler:
    handlers: Dict[ModelId, Callable[[Mapping[str, float]], ModelDefinition]] = {
        ModelId.REFERENCE_BURSTER: ReferenceBursterModel.from_overrides,
    }

    @classmethod
    def get_handler(cls, model_id: ModelId) -> Callable[[Mapping[str, float]], ModelDefinition]:
        handler = cls.handlers.get(model_id)
        if handler is None:
            raise ArgumentError(f"model '{model_id}' cannot be built from a config file")
        return handler

    @classmethod
    def build(cls, model_id: ModelId, overrides: Mapping[str, float]) -> ModelDefinition:
        model = cls.get_handler(model_id)(overrides)
        model.validate()
        logger.info(f"Built model {model_id} with coefficients {model.coefficient_table()}")
        return model
