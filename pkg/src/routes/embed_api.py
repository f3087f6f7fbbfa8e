"""
Embed Routes
Embedding wire protocol served by the hash encoder
"""

from typing import List, Literal

from fastapi import APIRouter
from pydantic import BaseModel

from src.services.embedding_service import EmbedRequest, ModalityInstruction

from .engine_core import engine_manager

router = APIRouter()


class EmbedItem(BaseModel):
    content: str
    instruction: Literal["", "text", "table", "image"] = ""


class EmbedBody(BaseModel):
    items: List[EmbedItem]


@router.post("/embed")
async def embed(body: EmbedBody):
    """``{"items": [{content, instruction}]}`` -> ``{"vectors": [[...], ...]}`` in request order"""
    requests_ = [
        EmbedRequest(item.content, ModalityInstruction(item.instruction or "none"))
        for item in body.items
    ]
    vectors = engine_manager.embedder().embed_batch(requests_)
    return {"vectors": [[float(x) for x in row] for row in vectors]}
