from typing import Annotated

from fastapi import Depends

from src.dependencies import ArtifactRepositoryDep
from src.experiments.service import ExperimentService


def _get_experiment_service(repository: ArtifactRepositoryDep) -> ExperimentService:
    return ExperimentService(repository)


ExperimentServiceDep = Annotated[ExperimentService, Depends(_get_experiment_service)]
