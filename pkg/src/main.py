import logging

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from src.config import SETTINGS
from src.constants import Environment
from src.exceptions import AssumptionViolationError, CanardSyncError
from src.experiments.router import router as experiments_router
from src.sync.router import router as sync_router

logging.basicConfig(
    level=SETTINGS.LOG_LEVEL, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
)

logger = logging.getLogger(__name__)

app = FastAPI(title="Canard Sync", version=SETTINGS.APP_VERSION)

app.add_middleware(
    CORSMiddleware,
    allow_origins=SETTINGS.CORS_ORIGINS,
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=SETTINGS.CORS_HEADERS,
)


@app.exception_handler(CanardSyncError)
async def canard_sync_error_handler(request: Request, exc: CanardSyncError):
    logger.warning(f"{request.method} {request.url.path} failed: {exc.detail}")
    content = {"detail": exc.detail, "error": type(exc).__name__}
    if isinstance(exc, AssumptionViolationError):
        content["assumption"] = exc.assumption
    return JSONResponse(status_code=exc.status_code, content=content)


@app.get("/health")
async def health_check():
    return {"status": "healthy", "version": SETTINGS.APP_VERSION}


app.include_router(experiments_router)
app.include_router(sync_router)


if __name__ == "__main__":
    import uvicorn

    uvicorn.run(
        "src.main:app",
        host="0.0.0.0",
        port=8000,
        reload=SETTINGS.ENVIRONMENT != Environment.PRODUCTION,
    )
