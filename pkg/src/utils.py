import hashlib
import json
from typing import Any

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict

FloatArray = NDArray[np.float64]


class ArraySchema(BaseModel):
    """Base for frozen schemas that carry numpy arrays."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


def as_float_array(values: Any) -> FloatArray:
    return np.asarray(values, dtype=np.float64)


def canonical_json(payload: Any) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)


def stable_hash(payload: Any) -> str:
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator; independent ``stream``s share one seed."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(stream,))))


def fd_step(values: Any, factor: float) -> FloatArray:
    return factor * (1.0 + np.abs(as_float_array(values)))
