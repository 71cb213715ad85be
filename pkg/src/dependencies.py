from typing import Annotated

from fastapi import Depends

from src.config import SETTINGS
from src.experiments.repository import ArtifactRepository


def _get_artifact_repository() -> ArtifactRepository:
    """Dependency for the run-artifact store under OUTPUT_DIR"""
    return ArtifactRepository(SETTINGS.OUTPUT_DIR)


ArtifactRepositoryDep = Annotated[ArtifactRepository, Depends(_get_artifact_repository)]
