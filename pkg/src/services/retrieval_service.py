"""
Retrieval Service
Seed selection, late-interaction edge scoring, beam traversal and the two ablation modes
"""

from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from src.models.graph import LayeredComponentGraph
from src.models.query import (
    DecomposedQuery,
    RankedItem,
    RankedResult,
    RetrievalMode,
    ScoredEdge,
    TraversalParams,
)
from src.services.decomposition_service import QueryDecompositionService
from src.utils.errors import EmptyGraphError
from src.utils.timing import StageTimer

ONE_SIDED_TOLERANCE = 1e-9

EdgeKey = Tuple[str, Optional[str]]


def _unit(vector: np.ndarray) -> np.ndarray:
    vector = np.asarray(vector, dtype=np.float64)
    norm = float(np.linalg.norm(vector))
    return vector / norm if norm > 0.0 else vector


def _require_nodes(graph: LayeredComponentGraph):
    if not graph.coarse_ids:
        raise EmptyGraphError("graph has no coarse nodes")


def coarse_similarities(graph: LayeredComponentGraph, coarse_embedding: np.ndarray) -> np.ndarray:
    """Cosine of the coarse query embedding against every layer-0 node"""
    return graph.coarse_unit @ _unit(coarse_embedding)


def _top(graph: LayeredComponentGraph, sims: np.ndarray, b: int) -> List[int]:
    # similarity descending, then ascending id
    order = np.lexsort((graph.coarse_rank, -sims))
    return [int(i) for i in order[:b]]


def seed_candidates(graph: LayeredComponentGraph, coarse_embedding: np.ndarray, b: int) -> List[Tuple[str, float]]:
    """
    Top-b coarse nodes by cosine to the coarse query embedding

    Args:
        graph: Finalized graph
        coarse_embedding: Query embedding with instruction none
        b: Number of seeds; all nodes when the graph is smaller

    Returns:
        [(comp_id, similarity)] ordered by similarity desc, then id asc
    """
    _require_nodes(graph)
    if b < 1:
        raise ValueError(f"b must be positive, got {b}")
    sims = coarse_similarities(graph, coarse_embedding)
    return [(graph.coarse_ids[i], float(sims[i])) for i in _top(graph, sims, b)]


class QueryScorer:
    """
    Per-query scoring state over one graph

    ``best[i, q]`` is the maximum cosine between subquery q and any child of
    coarse node i, so an edge score is ``maximum(best[u], best[v]).sum()``.
    """

    def __init__(self, graph: LayeredComponentGraph, dq: DecomposedQuery):
        _require_nodes(graph)
        self.graph = graph
        self.dq = dq
        queries = np.stack([_unit(sq.embedding) for sq in dq.subqueries])
        self.fine_sims = graph.fine_unit @ queries.T
        self.best = np.maximum.reduceat(self.fine_sims, graph.fine_starts, axis=0)
        self.coarse_sims = coarse_similarities(graph, dq.coarse_embedding)
        self._argmax: Dict[int, np.ndarray] = {}

    def _evidence_rows(self, i: int) -> np.ndarray:
        if i not in self._argmax:
            start = int(self.graph.fine_starts[i])
            end = start + len(self.graph.sub_of[self.graph.coarse_ids[i]])
            self._argmax[i] = np.argmax(self.fine_sims[start:end], axis=0) + start
        return self._argmax[i]

    def coarse_similarity(self, node_id: str) -> float:
        return float(self.coarse_sims[self.graph.coarse_index(node_id)])

    def score_edge(self, u: str, v: Optional[str] = None) -> ScoredEdge:
        """
        Late-interaction score of edge (u, v), or of the dummy edge (u, None)

        Per subquery the best child of either endpoint counts. When the score is
        fully explained by one endpoint's children only that endpoint survives;
        if both qualify the one closer to the coarse query wins, then the lower id.
        """
        if v is not None and v < u:
            u, v = v, u
        iu = self.graph.coarse_index(u)
        bu = self.best[iu]
        fine_ids = self.graph.fine_ids
        if v is None:
            evidence = tuple(fine_ids[r] for r in self._evidence_rows(iu))
            return ScoredEdge(u=u, v=None, score=float(bu.sum()), evidence=evidence, one_sided=u)

        iv = self.graph.coarse_index(v)
        bv = self.best[iv]
        score = float(np.maximum(bu, bv).sum())

        rows_u = self._evidence_rows(iu)
        rows_v = self._evidence_rows(iv)
        evidence = tuple(
            fine_ids[rows_u[q]] if bu[q] >= bv[q] else fine_ids[rows_v[q]]
            for q in range(len(bu))
        )

        u_explains = score - float(bu.sum()) <= ONE_SIDED_TOLERANCE
        v_explains = score - float(bv.sum()) <= ONE_SIDED_TOLERANCE
        one_sided = None
        if u_explains and v_explains:
            one_sided = v if self.coarse_sims[iv] > self.coarse_sims[iu] else u
        elif u_explains:
            one_sided = u
        elif v_explains:
            one_sided = v
        return ScoredEdge(u=u, v=v, score=score, evidence=evidence, one_sided=one_sided)


def score_edge(graph: LayeredComponentGraph, edge: EdgeKey, dq: DecomposedQuery) -> ScoredEdge:
    """Score one coarse edge ``(u, v)`` or dummy edge ``(u, None)``"""
    u, v = edge
    return QueryScorer(graph, dq).score_edge(u, v)


def _edge_order(edge: ScoredEdge) -> Tuple[float, str, str]:
    return (-edge.score, edge.u, edge.v or "")


def _seed_result(graph: LayeredComponentGraph, sims: np.ndarray, n: int) -> List[RankedItem]:
    return [
        RankedItem(comp_id=graph.coarse_ids[i], score=float(sims[i]), coarse_similarity=float(sims[i]))
        for i in _top(graph, sims, n)
    ]


def traverse(graph: LayeredComponentGraph, dq: DecomposedQuery, params: TraversalParams,
             scorer: Optional[QueryScorer] = None) -> RankedResult:
    """
    Beam traversal over coarse edges scored by late interaction

    Iteration 1 expands the seeds, later iterations the endpoints of the retained
    edges. Every unscored incident edge (or a dummy edge for a node without
    neighbors) joins a global pool of which the top-b edges are retained.

    Args:
        graph: Finalized graph
        dq: Decomposed query
        params: b, n_i and n_ret

    Returns:
        RankedResult ordered by (score desc, coarse similarity desc, id asc)
    """
    timer = StageTimer()
    with timer.stage("seed"):
        scorer = scorer or QueryScorer(graph, dq)
        seeds = [graph.coarse_ids[i] for i in _top(graph, scorer.coarse_sims, params.b)]

    with timer.stage("traversal"):
        if params.n_i == 0:
            items = _seed_result(graph, scorer.coarse_sims, min(params.b, params.n_ret))
        else:
            items = _beam(graph, scorer, seeds, params)

    return RankedResult(items=items, params=params, timings=dict(timer.timings))


def retained_edges(graph: LayeredComponentGraph, scorer: QueryScorer, seeds: Sequence[str],
                   b: int, n_i: int) -> Iterator[List[ScoredEdge]]:
    """Top-b edges of the global pool after each of n_i iterations"""
    pool: Dict[EdgeKey, ScoredEdge] = {}
    retained: List[ScoredEdge] = []
    for t in range(1, n_i + 1):
        if t == 1:
            frontier = seeds
        else:
            frontier = sorted({n for edge in retained for n in (edge.u, edge.v) if n is not None})
        for node in frontier:
            neighbors = graph.adjacency[node]
            if not neighbors:
                if (node, None) not in pool:
                    pool[(node, None)] = scorer.score_edge(node)
                continue
            for other in neighbors:
                key = (node, other) if node < other else (other, node)
                if key not in pool:
                    pool[key] = scorer.score_edge(*key)
        retained = sorted(pool.values(), key=_edge_order)[:b]
        yield retained


def _beam(graph: LayeredComponentGraph, scorer: QueryScorer, seeds: List[str],
          params: TraversalParams) -> List[RankedItem]:
    *_, retained = retained_edges(graph, scorer, seeds, params.b, params.n_i)

    node_best: Dict[str, ScoredEdge] = {}
    for edge in retained:
        for node in edge.survivors():
            current = node_best.get(node)
            if current is None or edge.score > current.score:
                node_best[node] = edge

    ranked = sorted(
        node_best.items(),
        key=lambda kv: (-kv[1].score, -scorer.coarse_similarity(kv[0]), kv[0]),
    )
    return [
        RankedItem(comp_id=node, score=edge.score, coarse_similarity=scorer.coarse_similarity(node), edge=edge)
        for node, edge in ranked[:params.n_ret]
    ]


def retrieve_knn(graph: LayeredComponentGraph, coarse_embedding: np.ndarray, n_ret: int) -> RankedResult:
    """Coarse-only nearest neighbors; no edges and no subcomponents"""
    timer = StageTimer()
    with timer.stage("seed"):
        seeds = seed_candidates(graph, coarse_embedding, n_ret)
    items = [RankedItem(comp_id=c, score=s, coarse_similarity=s) for c, s in seeds]
    params = TraversalParams(b=n_ret, n_i=0, n_ret=n_ret, mode=RetrievalMode.KNN)
    return RankedResult(items=items, params=params, timings=dict(timer.timings))


def retrieve_rerank(graph: LayeredComponentGraph, coarse_embedding: np.ndarray, b: int, n_ret: int) -> RankedResult:
    """
    Top-b coarse nodes rescored by their best child against the coarse query

    Raises:
        ValueError: b < n_ret
    """
    if b < n_ret:
        raise ValueError(f"rerank needs b >= n_ret, got b={b} n_ret={n_ret}")
    _require_nodes(graph)
    timer = StageTimer()
    with timer.stage("seed"):
        sims = coarse_similarities(graph, coarse_embedding)
        seeds = _top(graph, sims, b)
    with timer.stage("traversal"):
        fine_scores = np.maximum.reduceat(graph.fine_unit @ _unit(coarse_embedding), graph.fine_starts)
        ranked = sorted(seeds, key=lambda i: (-fine_scores[i], -sims[i], graph.coarse_ids[i]))
        items = [
            RankedItem(comp_id=graph.coarse_ids[i], score=float(fine_scores[i]), coarse_similarity=float(sims[i]))
            for i in ranked[:n_ret]
        ]
    params = TraversalParams(b=b, n_i=0, n_ret=n_ret, mode=RetrievalMode.NO_QD)
    return RankedResult(items=items, params=params, timings=dict(timer.timings))


class RetrievalService:
    """Service answering queries over one immutable graph; safe to share across threads"""

    def __init__(self, graph: LayeredComponentGraph, decomposer: Optional[QueryDecompositionService] = None):
        """
        Initialize Retrieval Service

        Args:
            graph: Loaded or freshly built graph
            decomposer: Query decomposition service; hash embedder and rule backend when omitted
        """
        self.graph = graph
        self.decomposer = decomposer or QueryDecompositionService()
        if self.decomposer.embedder.dimension != graph.dimension:
            raise ValueError(f"query embedder dimension {self.decomposer.embedder.dimension} "
                             f"does not match index dimension {graph.dimension}")
        logger.info(f"RetrievalService initialized ({len(graph.coarse_ids)} coarse nodes)")

    def run(self, dq: DecomposedQuery, params: TraversalParams) -> RankedResult:
        """Retrieve for an already decomposed query"""
        timer = StageTimer()
        if params.mode is RetrievalMode.FULL:
            result = traverse(self.graph, dq, params)
        elif params.mode is RetrievalMode.NO_QD:
            result = retrieve_rerank(self.graph, dq.coarse_embedding, params.b, params.n_ret)
        else:
            result = retrieve_knn(self.graph, dq.coarse_embedding, params.n_ret)
        result.params = params

        timings = {"decomposition": 0.0, "query_embedding": dq.timings.get("query_embedding", 0.0),
                   "seed": 0.0, "traversal": 0.0}
        if params.mode is RetrievalMode.FULL:
            timings["decomposition"] = dq.timings.get("decomposition", 0.0)
        timings.update(result.timings)
        timings["total"] = timer.elapsed_ms() + timings["decomposition"] + timings["query_embedding"]
        result.timings = timings
        result.flags = {"backend": dq.backend, "fallback": dq.fallback}
        if dq.fallback_reason:
            result.flags["fallback_reason"] = dq.fallback_reason
        if params.mode is RetrievalMode.FULL:
            result.subqueries = [(sq.text, sq.modality) for sq in dq.subqueries]
        return result

    def retrieve(self, query: str, params: TraversalParams, backend: Optional[str] = None) -> RankedResult:
        """
        Decompose (full mode only) and retrieve

        Args:
            query: Raw query text
            params: Traversal parameters including the mode
            backend: Decomposer backend override

        Returns:
            RankedResult with decomposition, query_embedding, seed, traversal and total timings
        """
        if params.mode is RetrievalMode.FULL:
            dq = self.decomposer.decompose(query, backend)
        else:
            dq = self.decomposer.decompose(query, "none")
        return self.run(dq, params)
