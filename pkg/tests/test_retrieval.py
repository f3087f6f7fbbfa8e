import numpy as np
import pytest

from src.models.query import DecomposedQuery, RetrievalMode, Subquery, TraversalParams
from src.services.corpus_service import parse_corpus, resolve_links
from src.services.decomposition_service import QueryDecompositionService
from src.services.embedding_service import EmbedRequest, HashEmbedder, cosine, hash_embed
from src.services.graph_builder_service import build_graph
from src.services.retrieval_service import (
    QueryScorer,
    RetrievalService,
    retained_edges,
    retrieve_knn,
    retrieve_rerank,
    score_edge,
    seed_candidates,
    traverse,
)
from src.utils.errors import EmptyGraphError, UnknownNodeError


def _embed(text, label=None):
    return hash_embed(EmbedRequest(text, label or "none"))


def _query(coarse_text, *subqueries):
    return DecomposedQuery(
        query_text=coarse_text,
        coarse_embedding=_embed(coarse_text),
        subqueries=tuple(Subquery(t, label, _embed(t, label)) for t, label in subqueries),
    )


# exhaustive reference ranking: score every coarse edge and every dummy edge directly


def _oracle(graph, dq):
    def best(node):
        children = graph.subcomponents_of(node)
        return [max(cosine(graph.embedding(c), sq.embedding) for c in children) for sq in dq.subqueries]

    def coarse_sim(node):
        return cosine(graph.embedding(node), dq.coarse_embedding)

    survivors = {}
    edges = [(u, v) for u, v in graph.edges.e0] + [(n, None) for n in graph.coarse_ids if not graph.neighbors(n)]
    for u, v in edges:
        bu = best(u)
        if v is None:
            kept, score = [u], sum(bu)
        else:
            bv = best(v)
            score = sum(max(a, b) for a, b in zip(bu, bv))
            u_only = score - sum(bu) <= 1e-9
            v_only = score - sum(bv) <= 1e-9
            if u_only and v_only:
                kept = [v] if coarse_sim(v) > coarse_sim(u) else [u]
            elif u_only:
                kept = [u]
            elif v_only:
                kept = [v]
            else:
                kept = [u, v]
        for node in kept:
            survivors[node] = max(survivors.get(node, float("-inf")), score)
    ranked = sorted(survivors, key=lambda n: (-survivors[n], -coarse_sim(n), n))
    return [(n, survivors[n]) for n in ranked]


def test_seed_self_similarity(fixture_graph):
    seeds = seed_candidates(fixture_graph, fixture_graph.embedding("A/0"), 1)
    assert [c for c, _ in seeds] == ["A/0"]
    assert seeds[0][1] == pytest.approx(1.0, abs=1e-6)


def test_seed_b_larger_than_graph(fixture_graph):
    seeds = seed_candidates(fixture_graph, _embed("taj mahal"), 10)
    assert sorted(c for c, _ in seeds) == ["A/0", "A/1", "B/0"]


def test_seed_ties_break_by_id(vector_graph, vec):
    graph = vector_graph(
        {"b/0": vec((0, 1.0)), "a/0": vec((0, 1.0)), "c/0": vec((1, 1.0))},
        {"b/0": [vec((2, 1.0))], "a/0": [vec((2, 1.0))], "c/0": [vec((2, 1.0))]},
    )
    assert seed_candidates(graph, vec((0, 1.0)), 1)[0][0] == "a/0"
    assert [c for c, _ in seed_candidates(graph, vec((0, 1.0)), 3)] == ["a/0", "b/0", "c/0"]


def test_seed_rejects_empty_graph(vector_graph):
    graph = vector_graph({}, {})
    with pytest.raises(EmptyGraphError):
        seed_candidates(graph, np.ones(8), 1)


def _two_node_graph(vector_graph, vec, alpha_children, beta_children):
    return vector_graph(
        {"a/0": vec((6, 1.0)), "b/0": vec((7, 1.0))},
        {"a/0": alpha_children, "b/0": beta_children},
        [("a/0", "b/0")],
    )


def test_score_edge_one_sided(vector_graph, vec, make_query):
    graph = _two_node_graph(
        vector_graph, vec,
        [vec((0, 0.9), (2, np.sqrt(1 - 0.81))), vec((1, 0.7), (3, np.sqrt(1 - 0.49)))],
        [vec((0, 0.2), (4, np.sqrt(1 - 0.04))), vec((1, 0.6), (5, 0.8))],
    )
    dq = make_query(vec((6, 1.0)), vec((0, 1.0)), vec((1, 1.0)))
    edge = score_edge(graph, ("a/0", "b/0"), dq)
    assert edge.score == pytest.approx(1.6, abs=1e-6)
    assert edge.one_sided == "a/0"
    assert edge.evidence == ("a/0/0", "a/0/1")
    assert edge.survivors() == ("a/0",)


def test_score_edge_split_evidence(vector_graph, vec, make_query):
    graph = _two_node_graph(
        vector_graph, vec,
        [vec((0, 0.9), (2, np.sqrt(1 - 0.81)))],
        [vec((1, 0.8), (5, 0.6))],
    )
    dq = make_query(vec((6, 1.0)), vec((0, 1.0)), vec((1, 1.0)))
    edge = score_edge(graph, ("b/0", "a/0"), dq)
    assert (edge.u, edge.v) == ("a/0", "b/0")
    assert edge.score == pytest.approx(1.7, abs=1e-6)
    assert edge.one_sided is None
    assert edge.evidence == ("a/0/0", "b/0/0")
    assert edge.survivors() == ("a/0", "b/0")


def test_score_dummy_edge(vector_graph, vec, make_query):
    graph = vector_graph({"a/0": vec((6, 1.0))}, {"a/0": [vec((0, 0.3), (2, np.sqrt(0.91))), vec((0, 0.5), (3, np.sqrt(0.75)))]})
    edge = score_edge(graph, ("a/0", None), make_query(vec((6, 1.0)), vec((0, 1.0))))
    assert edge.is_dummy
    assert edge.score == pytest.approx(0.5, abs=1e-6)
    assert edge.one_sided == "a/0"
    assert edge.evidence == ("a/0/1",)


def test_score_edge_both_sides_explain(vector_graph, vec, make_query):
    children = [vec((0, 1.0))]
    graph = _two_node_graph(vector_graph, vec, children, children)
    toward_b = score_edge(graph, ("a/0", "b/0"), make_query(vec((7, 1.0)), vec((0, 1.0))))
    assert toward_b.one_sided == "b/0"
    tied = score_edge(graph, ("a/0", "b/0"), make_query(vec((6, 1.0), (7, 1.0)), vec((0, 1.0))))
    assert tied.one_sided == "a/0"


def test_score_edge_unknown_node(fixture_graph):
    dq = _query("taj mahal", ("taj mahal", "text"))
    with pytest.raises(UnknownNodeError):
        score_edge(fixture_graph, ("A/0", "Z/9"), dq)


def test_traverse_fixture_ranking(fixture_graph):
    dq = _query("minaret Shah Jahan", ("minaret", "image"), ("Shah Jahan", "text"))
    result = traverse(fixture_graph, dq, TraversalParams(b=30, n_i=1, n_ret=10))
    assert set(result.ids[:2]) == {"A/0", "A/1"}
    assert result.ids[2] == "B/0"
    assert result.ids == [n for n, _ in _oracle(fixture_graph, dq)]
    top = result.items[0]
    assert top.edge is not None and set(top.edge.evidence) == {"A/1/0", "A/0/1"}


def test_traverse_zero_iterations_returns_seeds(fixture_graph):
    dq = _query("Agra hosts the famous Taj Mahal mausoleum", ("Agra", "text"))
    result = traverse(fixture_graph, dq, TraversalParams(b=30, n_i=0, n_ret=2))
    knn = retrieve_knn(fixture_graph, dq.coarse_embedding, 2)
    assert result.ids == knn.ids
    assert [i.score for i in result.items] == [i.coarse_similarity for i in result.items]


def test_traverse_reaches_isolated_component():
    corpus = parse_corpus([
        '{"doc_id": "solo", "components": [{"type": "paragraph", "text": "The lighthouse keeper rang the bell."}]}',
        '{"doc_id": "pair", "components": [{"type": "paragraph", "text": "Harbor ferries run hourly."}, '
        '{"type": "paragraph", "text": "Tickets cost two coins."}]}',
    ])
    graph, _ = build_graph(corpus, resolve_links(corpus))
    dq = _query("lighthouse keeper bell", ("lighthouse keeper bell", "text"))
    result = traverse(graph, dq, TraversalParams(b=30, n_i=1, n_ret=3))
    assert result.ids[0] == "solo/0"
    assert result.items[0].edge.is_dummy


def test_traverse_is_deterministic(fixture_graph):
    dq = _query("minaret Shah Jahan", ("minaret", "image"), ("Shah Jahan", "text"))
    params = TraversalParams(b=2, n_i=2, n_ret=3)
    first = traverse(fixture_graph, dq, params)
    second = traverse(fixture_graph, dq, params)
    assert first.items == second.items


def _path_graph(vector_graph, vec):
    # a - b - c - d; only a matches the coarse query, c holds the best subcomponent
    best = {"a/0": 0.1, "b/0": 0.3, "c/0": 0.9, "d/0": 0.2}
    return vector_graph(
        {"a/0": vec((6, 1.0)), "b/0": vec((7, 1.0)), "c/0": vec((7, 1.0)), "d/0": vec((7, 1.0))},
        {cid: [vec((0, s), (k + 1, np.sqrt(1 - s * s)))] for k, (cid, s) in enumerate(best.items())},
        [("a/0", "b/0"), ("b/0", "c/0"), ("c/0", "d/0")],
    )


@pytest.mark.parametrize("b, n_i, expected, evidence", [
    (1, 1, [("b/0", 0.3)], ("b/0/0",)),
    (1, 2, [("c/0", 0.9)], ("c/0/0",)),
    (1, 3, [("c/0", 0.9)], ("c/0/0",)),
    (2, 1, [("c/0", 0.9), ("b/0", 0.3)], ("c/0/0",)),
    (2, 2, [("c/0", 0.9)], ("c/0/0",)),
])
def test_traverse_multi_hop_path(vector_graph, vec, make_query, b, n_i, expected, evidence):
    graph = _path_graph(vector_graph, vec)
    dq = make_query(vec((6, 1.0)), vec((0, 1.0)))
    result = traverse(graph, dq, TraversalParams(b=b, n_i=n_i, n_ret=4))
    assert result.ids == [n for n, _ in expected]
    for item, (_, score) in zip(result.items, expected):
        assert item.score == pytest.approx(score, abs=1e-6)
    assert result.items[0].edge.evidence == evidence


def test_retained_edges_per_iteration(vector_graph, vec, make_query):
    graph = _path_graph(vector_graph, vec)
    scorer = QueryScorer(graph, make_query(vec((6, 1.0)), vec((0, 1.0))))
    rounds = [[(e.u, e.v) for e in r] for r in retained_edges(graph, scorer, ["a/0"], 1, 3)]
    assert rounds == [[("a/0", "b/0")], [("b/0", "c/0")], [("b/0", "c/0")]]


def test_pool_threshold_never_drops(random_corpus, random_query):
    rng = np.random.default_rng(7)
    embedder = HashEmbedder()
    for _ in range(200):
        corpus = random_corpus(rng, max_docs=6, max_components=4, link_prob=0.4)
        graph, _ = build_graph(corpus, resolve_links(corpus))
        dq = random_query(rng, corpus, embedder)
        scorer = QueryScorer(graph, dq)
        b = int(rng.integers(1, 6))
        seeds = [c for c, _ in seed_candidates(graph, dq.coarse_embedding, b)]
        rounds = list(retained_edges(graph, scorer, seeds, b, 4))
        assert len(rounds) == 4
        for before, after in zip(rounds, rounds[1:]):
            assert len(after) >= len(before)
            if len(before) == b:
                assert after[-1].score >= before[-1].score
            assert sum(e.score for e in after) >= sum(e.score for e in before)


def test_oracle_equivalence_on_random_graphs(random_corpus, random_query):
    rng = np.random.default_rng(2024)
    embedder = HashEmbedder()
    checked = 0
    while checked < 50:
        corpus = random_corpus(rng, max_docs=5, max_components=4, link_prob=0.3)
        if corpus.num_components > 20:
            continue
        graph, _ = build_graph(corpus, resolve_links(corpus))
        if len(graph.edges.e0) > 40:
            continue
        dq = random_query(rng, corpus, embedder)
        b = len(graph.coarse_ids) + len(graph.edges.e0) + 1
        result = traverse(graph, dq, TraversalParams(b=b, n_i=1, n_ret=len(graph.coarse_ids)))
        expected = _oracle(graph, dq)
        assert result.ids == [n for n, _ in expected]
        for item, (_, score) in zip(result.items, expected):
            assert item.score == pytest.approx(score, abs=1e-9)
        checked += 1


def test_late_interaction_properties(random_corpus):
    rng = np.random.default_rng(99)
    instances = 0
    while instances < 1000:
        corpus = random_corpus(rng, max_docs=4, max_components=4, link_prob=0.5)
        graph, _ = build_graph(corpus, resolve_links(corpus))
        if not graph.edges.e0:
            continue
        pairs = list(graph.edges.e0)
        d = graph.dimension
        for _ in range(20):
            vectors = rng.normal(size=(int(rng.integers(2, 5)), d))
            split = int(rng.integers(1, len(vectors)))

            def scorer(rows):
                subqueries = tuple(Subquery(f"q{i}", "text", row) for i, row in enumerate(rows))
                return QueryScorer(graph, DecomposedQuery("q", rng.normal(size=d), subqueries))

            whole, first, rest = scorer(vectors), scorer(vectors[:split]), scorer(vectors[split:])
            u, v = pairs[int(rng.integers(len(pairs)))]

            assert whole.score_edge(u, v).score == pytest.approx(
                first.score_edge(u, v).score + rest.score_edge(u, v).score, abs=1e-9)
            assert whole.score_edge(u, v).score == whole.score_edge(v, u).score
            assert whole.score_edge(u, v).score >= whole.score_edge(u).score - 1e-12
            assert whole.score_edge(u, v).score >= whole.score_edge(v).score - 1e-12
            instances += 1


def test_knn_matches_seeds(fixture_graph):
    query = _embed("Agra hosts the famous Taj Mahal mausoleum.")
    result = retrieve_knn(fixture_graph, query, 3)
    assert result.ids[0] == "B/0"
    assert [(i.comp_id, i.score) for i in result.items] == seed_candidates(fixture_graph, query, 3)
    assert result.params.mode is RetrievalMode.KNN


def test_rerank_prefers_matching_subcomponent(vector_graph, vec):
    graph = vector_graph(
        {"x/0": vec((0, 0.9), (1, np.sqrt(0.19))), "y/0": vec((0, 0.5), (2, np.sqrt(0.75))), "z/0": vec((3, 1.0))},
        {"x/0": [vec((0, 0.5), (4, np.sqrt(0.75)))], "y/0": [vec((0, 1.0))], "z/0": [vec((5, 1.0))]},
    )
    query = vec((0, 1.0))
    assert retrieve_knn(graph, query, 3).ids[:2] == ["x/0", "y/0"]
    result = retrieve_rerank(graph, query, 3, 3)
    assert result.ids == ["y/0", "x/0", "z/0"]
    assert result.items[0].score == pytest.approx(1.0, abs=1e-6)


def test_rerank_ties_fall_back_to_coarse(vector_graph, vec):
    graph = vector_graph(
        {"a/0": vec((0, 0.3), (1, np.sqrt(0.91))), "b/0": vec((0, 0.8), (2, 0.6))},
        {"a/0": [vec((0, 0.5), (3, np.sqrt(0.75)))], "b/0": [vec((0, 0.5), (4, np.sqrt(0.75)))]},
    )
    assert retrieve_rerank(graph, vec((0, 1.0)), 2, 2).ids == ["b/0", "a/0"]


def test_rerank_is_permutation_of_knn(fixture_graph):
    query = _embed("minaret dome")
    assert sorted(retrieve_rerank(fixture_graph, query, 3, 3).ids) == sorted(retrieve_knn(fixture_graph, query, 3).ids)
    with pytest.raises(ValueError):
        retrieve_rerank(fixture_graph, query, 1, 3)


def test_service_full_mode(fixture_graph):
    service = RetrievalService(fixture_graph, QueryDecompositionService(HashEmbedder()))
    result = service.retrieve("Who commissioned the Taj Mahal and how many minarets does it have",
                              TraversalParams(b=30, n_i=1, n_ret=3))
    assert set(result.timings) == {"decomposition", "query_embedding", "seed", "traversal", "total"}
    assert result.flags == {"backend": "rule", "fallback": False}
    assert result.subqueries == [("Who commissioned the Taj Mahal", "text"), ("how many minarets does it have", "table")]
    assert "A/0" in result.ids
    body = result.to_dict()
    assert body["params"] == {"b": 30, "n_i": 1, "n_ret": 3, "mode": "full"}


def test_service_ablation_modes_skip_decomposition(fixture_graph):
    service = RetrievalService(fixture_graph)
    knn = service.retrieve("Agra hosts the famous Taj Mahal mausoleum", TraversalParams(n_ret=2, mode="knn"))
    assert knn.ids[0] == "B/0"
    assert knn.timings["decomposition"] == 0.0
    assert knn.subqueries == []
    rerank = service.retrieve("minaret", TraversalParams(b=3, n_ret=3, mode="no_qd"))
    assert len(rerank.ids) == 3


def test_service_rejects_dimension_mismatch(fixture_graph):
    with pytest.raises(ValueError):
        RetrievalService(fixture_graph, QueryDecompositionService(HashEmbedder(dimension=64)))
