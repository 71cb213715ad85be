from typing import List, Optional

from pydantic import BaseModel

from src.experiments.schemas.artifacts import RunArtifact, RunManifest
from src.sync.schemas import VerificationReport


class RunSummary(BaseModel):
    directory: str
    manifest: RunManifest
    linger_times: List[float]
    t_min: Optional[float] = None
    verification: Optional[VerificationReport] = None

    @classmethod
    def from_artifact(cls, artifact: RunArtifact) -> "RunSummary":
        linger = artifact.linger
        return cls(
            directory=str(artifact.directory),
            manifest=artifact.manifest,
            linger_times=linger.times if linger else [],
            t_min=linger.t_min if linger else None,
            verification=artifact.verification,
        )
