"""
Query Routes
Ranked retrieval over the loaded index
"""

from typing import Literal, Optional

from fastapi import APIRouter
from fastapi.concurrency import run_in_threadpool
from pydantic import BaseModel, Field

from src.models.query import TraversalParams

from .engine_core import engine_manager

router = APIRouter()


class QueryRequest(BaseModel):
    query: str = Field(..., min_length=1)
    mode: Optional[Literal["full", "no_qd", "knn"]] = None
    b: Optional[int] = Field(None, ge=1)
    n_i: Optional[int] = Field(None, ge=0)
    n_ret: Optional[int] = Field(None, ge=1)
    decomposer: Optional[Literal["rule", "llm", "none"]] = None


@router.post("/query")
async def query(request: QueryRequest):
    """
    Retrieve ranked components

    Unset fields fall back to the retrieval configuration. The response carries
    results with evidence subcomponents, the parameter echo, subqueries,
    timings in ms and decomposition flags.
    """
    service = engine_manager.initialize()
    defaults = engine_manager.config.retrieval
    params = TraversalParams(
        b=request.b if request.b is not None else defaults.b,
        n_i=request.n_i if request.n_i is not None else defaults.n_i,
        n_ret=request.n_ret if request.n_ret is not None else defaults.n_ret,
        mode=request.mode or defaults.mode,
    )
    result = await run_in_threadpool(service.retrieve, request.query, params, request.decomposer)
    body = result.to_dict()
    titles = service.graph.manifest.titles
    for item in body["results"]:
        item["title"] = titles.get(item["comp_id"].rpartition("/")[0], "")
    return body
