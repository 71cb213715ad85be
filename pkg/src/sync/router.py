from fastapi import APIRouter

from src.sync.schemas import ThresholdBreakdown, ThresholdInputs
from src.sync.service import threshold_breakdown

router = APIRouter(prefix="/sync", tags=["sync"])


@router.post("/threshold", response_model=ThresholdBreakdown)
async def compute_threshold(inputs: ThresholdInputs):
    return threshold_breakdown(inputs)
