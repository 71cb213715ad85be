from fastapi import APIRouter

from src.experiments.dependencies import ExperimentServiceDep
from src.experiments.schemas.artifacts import SweepTable
from src.experiments.schemas.config import ExperimentConfig
from src.experiments.schemas.requests import SweepRequest
from src.experiments.schemas.responses import RunSummary

router = APIRouter(prefix="/experiments", tags=["experiments"])


# CPU-bound; plain def routes run in the threadpool
@router.post("/run", response_model=RunSummary)
def run_experiment(
    config: ExperimentConfig,
    experiment_service: ExperimentServiceDep,
):
    return RunSummary.from_artifact(experiment_service.run_experiment(config))


@router.post("/sweep", response_model=SweepTable)
def run_sweep(
    request: SweepRequest,
    experiment_service: ExperimentServiceDep,
):
    return experiment_service.sweep(request.config, request.grid).sweep
