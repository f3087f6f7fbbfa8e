# -*- coding: utf-8 -*-
"""
Query-side types: decomposed queries, traversal parameters and ranked results
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

MAX_SUBQUERIES = 5
QUERY_MODALITIES = ("text", "table", "image")


class RetrievalMode(str, Enum):
    FULL = "full"
    NO_QD = "no_qd"
    KNN = "knn"


@dataclass(frozen=True)
class Subquery:
    text: str
    modality: str
    embedding: np.ndarray = field(compare=False, repr=False)

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("subquery text must be non-empty")
        if self.modality not in QUERY_MODALITIES:
            raise ValueError(f"subquery modality must be one of {QUERY_MODALITIES}, got {self.modality!r}")


@dataclass(frozen=True)
class DecomposedQuery:
    """Coarse query embedding plus 1..5 modality-labeled subqueries"""
    query_text: str
    coarse_embedding: np.ndarray = field(compare=False, repr=False)
    subqueries: Tuple[Subquery, ...] = ()
    backend: str = "rule"
    fallback: bool = False
    fallback_reason: Optional[str] = None
    timings: Dict[str, float] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not 1 <= len(self.subqueries) <= MAX_SUBQUERIES:
            raise ValueError(f"decomposition must yield 1..{MAX_SUBQUERIES} subqueries, got {len(self.subqueries)}")

    @property
    def labels(self) -> List[str]:
        return [sq.modality for sq in self.subqueries]


@dataclass(frozen=True)
class TraversalParams:
    b: int = 30
    n_i: int = 1
    n_ret: int = 10
    mode: RetrievalMode = RetrievalMode.FULL

    def __post_init__(self):
        object.__setattr__(self, "mode", RetrievalMode(self.mode))
        if self.b < 1:
            raise ValueError(f"beam width b must be positive, got {self.b}")
        if self.n_i < 0:
            raise ValueError(f"iterations n_i must be non-negative, got {self.n_i}")
        if self.n_ret < 1:
            raise ValueError(f"n_ret must be positive, got {self.n_ret}")

    def to_dict(self) -> Dict[str, Any]:
        return {"b": self.b, "n_i": self.n_i, "n_ret": self.n_ret, "mode": self.mode.value}

    def label(self) -> str:
        return f"mode={self.mode.value} b={self.b} n_i={self.n_i} n_ret={self.n_ret}"


@dataclass(frozen=True)
class ScoredEdge:
    """
    Late-interaction score of a coarse edge or a dummy edge ``(u, None)``

    ``evidence`` holds, per subquery, the fine node that attained the maximum.
    """
    u: str
    v: Optional[str]
    score: float
    evidence: Tuple[str, ...]
    one_sided: Optional[str] = None

    @property
    def is_dummy(self) -> bool:
        return self.v is None

    def survivors(self) -> Tuple[str, ...]:
        if self.one_sided is not None:
            return (self.one_sided,)
        return (self.u,) if self.v is None else (self.u, self.v)


@dataclass(frozen=True)
class RankedItem:
    comp_id: str
    score: float
    coarse_similarity: float
    edge: Optional[ScoredEdge] = None


@dataclass
class RankedResult:
    items: List[RankedItem]
    params: TraversalParams
    timings: Dict[str, float] = field(default_factory=dict)
    flags: Dict[str, Any] = field(default_factory=dict)
    subqueries: List[Tuple[str, str]] = field(default_factory=list)

    @property
    def ids(self) -> List[str]:
        return [item.comp_id for item in self.items]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "results": [
                {
                    "comp_id": item.comp_id,
                    "score": item.score,
                    "coarse_similarity": item.coarse_similarity,
                    "evidence": list(item.edge.evidence) if item.edge is not None else [],
                }
                for item in self.items
            ],
            "params": self.params.to_dict(),
            "subqueries": [{"text": text, "modality": label} for text, label in self.subqueries],
            "timings_ms": dict(self.timings),
            "flags": dict(self.flags),
        }
