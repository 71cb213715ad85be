from pathlib import Path

import numpy as np
import pytest

from src.dynamics.models import FunctionalModel, ReferenceBursterModel
from src.dynamics.schemas import OscillatorParams, TimeScales
from src.experiments.repository import ArtifactRepository
from src.experiments.schemas.config import ExperimentConfig
from src.experiments.service import ExperimentService
from src.manifolds.schemas import ChartGrid, Region, SearchWindow
from src.manifolds.service import analyze_oscillator

REPO_ROOT = Path(__file__).resolve().parents[1]
REFERENCE_CONFIG = REPO_ROOT / "configs" / "reference.toml"


def _zero(v, u, x, y, z, eps_ts, delta, mu):
    return 0.0


def _stable_jacobian(v, u, x, y, z, eps_ts, delta, mu):
    shape = np.broadcast_shapes(*(np.shape(item) for item in (v, u, x, y, z)))
    return np.broadcast_to(-np.eye(2), shape + (2, 2)).copy()


def linear_model() -> FunctionalModel:
    """h1 = mu - v with an always-attracting fast block; the slow variables are frozen."""
    return FunctionalModel(
        h1=lambda v, u, x, y, z, eps_ts, delta, mu: np.asarray(mu)[..., 0] - v,
        h2=lambda v, u, x, y, z, eps_ts, delta, mu: -u,
        f=_zero,
        g1=_zero,
        g2=_zero,
        fast_jacobian=_stable_jacobian,
        name="linear",
    )


@pytest.fixture
def reference_model() -> ReferenceBursterModel:
    return ReferenceBursterModel()


@pytest.fixture
def scales() -> TimeScales:
    return TimeScales(eps_ts=0.05, delta=0.1)


@pytest.fixture
def zero_params() -> OscillatorParams:
    return OscillatorParams(mu=(0.0,))


@pytest.fixture(scope="session")
def reference_geometry():
    """Geometry of the homogeneous reference burster on the default chart grid."""
    return analyze_oscillator(
        ReferenceBursterModel(),
        OscillatorParams(mu=(0.0,)),
        Region(x=(0.0, 2.0), y=(-0.6, 0.8), z=(-0.5, 0.5)),
        ChartGrid(nx=41, ny=15, nz=3),
        window=SearchWindow(y=(-0.6, -0.2), z=(0.0, 0.0)),
    )


@pytest.fixture
def small_config(tmp_path: Path) -> ExperimentConfig:
    """Two oscillators on a coarse grid with fixed k and a user bound, so no pilot run."""
    return ExperimentConfig.model_validate(
        {
            "model": {"seed": 3, "spread": 0.02, "eps_ts": 0.05, "delta": 0.1},
            "network": {"N": 2, "k": 1.0},
            "integrator": {"rtol": 1e-6, "atol": 1e-8, "max_step": 0.5},
            "manifold": {
                "region": {"x": [0.0, 2.0], "y": [-0.6, 0.8], "z": [-0.5, 0.5]},
                "grid": {"nx": 21, "ny": 8, "nz": 3},
                "window": {"y": [-0.6, -0.2], "z": [0.0, 0.0]},
            },
            "analysis": {"k_mode": "fixed", "m_mode": "user", "M": 0.1},
            "sweep": {"parameter": "k", "grid": [0.0, 1.0]},
            "output_dir": str(tmp_path),
        }
    )


@pytest.fixture
def experiment_service(tmp_path: Path) -> ExperimentService:
    return ExperimentService(ArtifactRepository(tmp_path / "runs"))
