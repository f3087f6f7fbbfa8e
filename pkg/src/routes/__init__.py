"""
API Routes Module

- Query: ranked retrieval over the loaded index
- Embed: embedding wire protocol backed by the hash encoder
- Utilities: health check
"""

from .embed_api import router as embed_router
from .engine_core import engine_manager
from .query_api import router as query_router
from .utility_api import router as utility_router

__all__ = ["query_router", "embed_router", "utility_router", "engine_manager"]
