"""
Utility Routes
Health check with the loaded index summary
"""

import time

from fastapi import APIRouter

from .engine_core import engine_manager

router = APIRouter()


@router.get("/health")
async def health_check():
    """Index manifest summary; loads the engine on first call"""
    service = engine_manager.initialize()
    manifest = service.graph.manifest
    return {
        "status": "healthy",
        "service": "layered_component_retrieval",
        "index": {
            "path": str(engine_manager.index_path),
            "embedder": manifest.embedder,
            "dimension": manifest.dimension,
            "corpus_digest": manifest.corpus_digest,
            "counts": manifest.counts,
        },
        "timestamp": time.time(),
    }
