"""
HTTP surface of the layered component retrieval engine

Run with ``python -m src.cli serve`` or ``uvicorn app:app``; the index is
loaded lazily from ``LCG_INDEX`` (or the configured index path).
"""

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from loguru import logger

from src import __version__
from src.routes import embed_router, engine_manager, query_router, utility_router
from src.utils.errors import RetrievalEngineError, UnknownNodeError

app = FastAPI(
    title="Layered Component Retrieval",
    description="Late-interaction beam retrieval over a layered component graph",
    version=__version__,
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

app.include_router(query_router, tags=["Retrieval"])
app.include_router(embed_router, tags=["Embedding"])
app.include_router(utility_router, tags=["Utilities"])


@app.exception_handler(UnknownNodeError)
async def unknown_node_handler(request: Request, exc: UnknownNodeError):
    return JSONResponse(status_code=404, content={"error": type(exc).__name__, "detail": str(exc)})


@app.exception_handler(RetrievalEngineError)
async def engine_error_handler(request: Request, exc: RetrievalEngineError):
    logger.warning(f"⚠️ {request.url.path}: {exc}")
    return JSONResponse(status_code=400, content={"error": type(exc).__name__, "detail": str(exc)})


@app.exception_handler(ValueError)
async def value_error_handler(request: Request, exc: ValueError):
    return JSONResponse(status_code=400, content={"error": "ValueError", "detail": str(exc)})


@app.on_event("startup")
async def startup_event():
    logger.info("🚀 Starting layered component retrieval API")


@app.on_event("shutdown")
async def shutdown_event():
    logger.info("Shutting down retrieval API...")
    engine_manager.cleanup()


if __name__ == "__main__":
    import uvicorn

    uvicorn.run(app, host="0.0.0.0", port=8000)
