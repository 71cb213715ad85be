import csv
import logging
import struct
from pathlib import Path

import numpy as np

from src.constants import STATE_COLUMNS
from src.integrator.constants import CACHE_HEADER_FORMAT, CACHE_MAGIC, CACHE_VERSION
from src.integrator.trajectory import Trajectory

logger = logging.getLogger(__name__)


def trajectory_header(n_oscillators: int) -> list[str]:
    return ["t"] + [f"{name}_{index}" for index in range(n_oscillators) for name in STATE_COLUMNS]


def write_trajectory_csv(trajectory: Trajectory, path: Path) -> Path:
    """Wide format: one row per sample, columns t, v_0, u_0, x_0, y_0, z_0, v_1, ..."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(trajectory_header(trajectory.n_oscillators))
        for t, block in zip(trajectory.times, trajectory.states):
            writer.writerow([format(float(value), ".17g") for value in (t, *block.ravel())])
    return path


def write_trajectory_cache(trajectory: Trajectory, path: Path) -> Path:
    """Little-endian binary dump: header, then times, states and derivatives."""
    path.parent.mkdir(parents=True, exist_ok=True)
    header = struct.pack(
        CACHE_HEADER_FORMAT, CACHE_MAGIC, CACHE_VERSION, len(trajectory), trajectory.n_oscillators
    )
    with path.open("wb") as handle:
        handle.write(header)
        for array in (trajectory.times, trajectory.states, trajectory.derivatives):
            handle.write(np.ascontiguousarray(array, dtype="<f8").tobytes())
    logger.debug(f"Cached {len(trajectory)} samples to {path}")
    return path
