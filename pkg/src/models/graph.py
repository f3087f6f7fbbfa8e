# -*- coding: utf-8 -*-
"""
Layered component graph: two node layers, coarse edges and containment edges
"""

from dataclasses import asdict, dataclass, field
from enum import Enum
from types import MappingProxyType
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.utils.errors import NodeLayerError, UnknownNodeError

CoarsePair = Tuple[str, str]


class NodeType(str, Enum):
    PARA = "para"
    TBL = "tbl"
    IMG = "img"
    SENT = "sent"
    ROW = "row"
    OBJ = "obj"

    @property
    def layer(self) -> int:
        return 0 if self in COARSE_TYPES else 1


COARSE_TYPES = frozenset({NodeType.PARA, NodeType.TBL, NodeType.IMG})


class Provenance(str, Enum):
    INTRA = "intra"
    INTER = "inter"


def canonical_pair(u: str, v: str) -> CoarsePair:
    return (u, v) if u <= v else (v, u)


@dataclass(frozen=True)
class Node:
    node_id: str
    layer: int
    node_type: NodeType
    content: str
    instruction: str
    parent: Optional[str] = None

    def __post_init__(self):
        if self.layer != self.node_type.layer:
            raise ValueError(f"{self.node_id}: layer {self.layer} does not match type {self.node_type.value}")
        if (self.layer == 1) != (self.parent is not None):
            raise ValueError(f"{self.node_id}: only fine nodes carry a parent")


@dataclass(frozen=True)
class EdgeSet:
    """Undirected coarse pairs (canonicalized) and parent -> child containment edges"""
    e0: Mapping[CoarsePair, Provenance]
    e_down: Tuple[Tuple[str, str], ...]

    def count(self, provenance: Provenance) -> int:
        return sum(1 for p in self.e0.values() if p is provenance)


@dataclass(frozen=True)
class IndexManifest:
    """Build configuration recorded with every index"""
    dimension: int
    embedder: str
    index_seed: int
    sign_seed: int
    corpus_digest: str
    counts: Dict[str, int] = field(default_factory=dict)
    titles: Dict[str, str] = field(default_factory=dict)
    format_version: int = 1

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class BuildReport:
    """Graph counts plus per-stage build timings (ms)"""
    docs: int = 0
    components: int = 0
    subcomponents: int = 0
    pseudo_subcomponents: int = 0
    e0_intra: int = 0
    e0_inter: int = 0
    e_down: int = 0
    timings: Dict[str, float] = field(default_factory=dict)
    total_ms: float = 0.0

    STAGES = ("node_generation", "edge_generation", "embedding_generation")

    def counts(self) -> Dict[str, int]:
        return {
            "docs": self.docs,
            "components": self.components,
            "subcomponents": self.subcomponents,
            "pseudo_subcomponents": self.pseudo_subcomponents,
            "e0_intra": self.e0_intra,
            "e0_inter": self.e0_inter,
            "e_down": self.e_down,
        }

    def to_dict(self) -> Dict[str, Any]:
        return {"counts": self.counts(), "timings_ms": dict(self.timings), "total_ms": self.total_ms}

    def format(self) -> str:
        lines = [f"{name:<22}{value:>10}" for name, value in self.counts().items()]
        for stage in self.STAGES:
            lines.append(f"{stage + ' (ms)':<22}{self.timings.get(stage, 0.0):>10.1f}")
        lines.append(f"{'total (ms)':<22}{self.total_ms:>10.1f}")
        return "\n".join(lines)


def _unit_rows(matrix: np.ndarray) -> np.ndarray:
    rows = matrix.astype(np.float64)
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    safe = np.where(norms > 0.0, norms, 1.0)
    unit = rows / safe
    unit.flags.writeable = False
    return unit


class LayeredComponentGraph:
    """
    Immutable graph over coarse components (layer 0) and their subcomponents (layer 1)

    Node records are ordered with every coarse node first (corpus order) followed by
    fine nodes grouped by parent in the same order, so each parent's children occupy
    a contiguous block of the embedding matrix.
    """

    def __init__(self,
                 nodes: Sequence[Node],
                 embeddings: np.ndarray,
                 edges: EdgeSet,
                 manifest: IndexManifest):
        self._order: Tuple[str, ...] = tuple(node.node_id for node in nodes)
        self._nodes: Mapping[str, Node] = MappingProxyType({node.node_id: node for node in nodes})
        self._row: Mapping[str, int] = MappingProxyType({node_id: i for i, node_id in enumerate(self._order)})
        if len(self._nodes) != len(self._order):
            raise ValueError("duplicate node ids")
        if embeddings.shape != (len(nodes), manifest.dimension):
            raise ValueError(f"embedding matrix shape {embeddings.shape} does not match "
                             f"{len(nodes)} nodes x {manifest.dimension}")

        self.edges = edges
        self.manifest = manifest
        self._embeddings = np.ascontiguousarray(embeddings, dtype=np.float32)
        self._embeddings.flags.writeable = False

        self.coarse_ids: Tuple[str, ...] = tuple(n.node_id for n in nodes if n.layer == 0)
        self.fine_ids: Tuple[str, ...] = tuple(n.node_id for n in nodes if n.layer == 1)
        n0 = len(self.coarse_ids)
        if self._order[:n0] != self.coarse_ids:
            raise ValueError("coarse nodes must precede fine nodes")

        self._coarse_row: Mapping[str, int] = MappingProxyType({cid: i for i, cid in enumerate(self.coarse_ids)})

        sub_of: Dict[str, List[str]] = {cid: [] for cid in self.coarse_ids}
        for parent, child in edges.e_down:
            sub_of[parent].append(child)
        self.sub_of: Mapping[str, Tuple[str, ...]] = MappingProxyType({k: tuple(v) for k, v in sub_of.items()})

        starts: List[int] = []
        cursor = 0
        for cid in self.coarse_ids:
            children = self.sub_of[cid]
            if not children:
                raise ValueError(f"{cid}: coarse node has no fine child")
            if self.fine_ids[cursor:cursor + len(children)] != children:
                raise ValueError(f"{cid}: children are not contiguous in node order")
            if any(self._nodes[child].parent != cid for child in children):
                raise ValueError(f"{cid}: containment edge disagrees with a child's parent")
            starts.append(cursor)
            cursor += len(children)
        if cursor != len(self.fine_ids):
            raise ValueError(f"{len(self.fine_ids) - cursor} fine nodes have no containment edge")
        self.fine_starts = np.asarray(starts, dtype=np.int64)
        self.fine_starts.flags.writeable = False

        adjacency: Dict[str, List[str]] = {cid: [] for cid in self.coarse_ids}
        for u, v in edges.e0:
            adjacency[u].append(v)
            adjacency[v].append(u)
        self.adjacency: Mapping[str, Tuple[str, ...]] = MappingProxyType(
            {k: tuple(sorted(v)) for k, v in adjacency.items()}
        )

        # position of each coarse id in ascending id order, for tie-breaks
        self.coarse_rank = np.argsort(np.argsort(np.asarray(self.coarse_ids, dtype=str), kind="stable"), kind="stable")
        self.coarse_rank.flags.writeable = False

        self.coarse_unit = _unit_rows(self._embeddings[:n0])
        self.fine_unit = _unit_rows(self._embeddings[n0:])

    def __len__(self) -> int:
        return len(self._order)

    @property
    def embeddings(self) -> np.ndarray:
        return self._embeddings

    @property
    def dimension(self) -> int:
        return self.manifest.dimension

    def nodes(self) -> List[Node]:
        return [self._nodes[node_id] for node_id in self._order]

    def node(self, node_id: str) -> Node:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise UnknownNodeError(f"unknown node {node_id!r}") from None

    def __contains__(self, node_id: str) -> bool:
        return node_id in self._nodes

    def embedding(self, node_id: str) -> np.ndarray:
        self.node(node_id)
        return self._embeddings[self._row[node_id]]

    def coarse_index(self, node_id: str) -> int:
        """Row of a coarse node in the coarse matrices"""
        if node_id in self._coarse_row:
            return self._coarse_row[node_id]
        if node_id in self._nodes:
            raise NodeLayerError(f"{node_id!r} is a fine node; a coarse node is required")
        raise UnknownNodeError(f"unknown node {node_id!r}")

    def neighbors(self, node_id: str) -> Tuple[str, ...]:
        """Coarse neighbors over e0, ascending id order"""
        self.coarse_index(node_id)
        return self.adjacency[node_id]

    def subcomponents_of(self, node_id: str) -> Tuple[str, ...]:
        self.coarse_index(node_id)
        return self.sub_of[node_id]

    def isolated(self) -> List[str]:
        return [cid for cid in self.coarse_ids if not self.adjacency[cid]]

    def equals(self, other: "LayeredComponentGraph") -> bool:
        """Structural equality on nodes, edges, manifest and bit-exact embeddings"""
        return (
            self.nodes() == other.nodes()
            and dict(self.edges.e0) == dict(other.edges.e0)
            and self.edges.e_down == other.edges.e_down
            and self.manifest == other.manifest
            and self._embeddings.tobytes() == other.embeddings.tobytes()
        )
