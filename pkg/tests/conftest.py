"""
Shared fixtures: the two-document corpus, its graph and random corpus / graph factories
"""

import itertools
from pathlib import Path
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np
import pytest

from src.config import hparams as hp
from src.models.corpus import Corpus
from src.models.graph import EdgeSet, IndexManifest, LayeredComponentGraph, Node, NodeType, Provenance
from src.models.query import DecomposedQuery, Subquery
from src.services.corpus_service import load_corpus, parse_document, resolve_links
from src.services.embedding_service import EmbedRequest, HashEmbedder, hash_embed
from src.services.graph_builder_service import build_graph

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def fixture_corpus() -> Corpus:
    return load_corpus(FIXTURES / "fixture_corpus.jsonl")


@pytest.fixture(scope="session")
def fixture_graph(fixture_corpus) -> LayeredComponentGraph:
    graph, _ = build_graph(fixture_corpus, resolve_links(fixture_corpus), HashEmbedder())
    return graph


@pytest.fixture
def engine_config(tmp_path) -> hp.EngineConfig:
    config = hp.load_config(overrides=["logging.progress=false"])
    config.paths.index = str(tmp_path / "index")
    return config


def _random_records(rng: np.random.Generator, max_docs: int, max_components: int,
                    link_prob: float) -> List[Dict]:
    words = (f"w{n}x" for n in itertools.count())

    def phrase(n: int) -> str:
        return " ".join(next(words) for _ in range(n))

    n_docs = int(rng.integers(1, max_docs + 1))
    doc_ids = [f"doc{i}" for i in range(n_docs)]
    records = []
    for doc_id in doc_ids:
        components = []
        for _ in range(int(rng.integers(1, max_components + 1))):
            kind = int(rng.integers(3))
            if kind == 0:
                sentences = [phrase(int(rng.integers(2, 5))).capitalize() + "." for _ in range(int(rng.integers(1, 4)))]
                component = {"type": "paragraph", "text": " ".join(sentences)}
            elif kind == 1:
                header = [next(words), next(words)]
                rows = [[next(words), next(words)] for _ in range(int(rng.integers(0, 3)))]
                component = {"type": "table", "rows": [header] + rows}
            else:
                objects = [
                    {"label": next(words), "bbox": [0, 0, 10 + k, 10 + k]}
                    for k in range(int(rng.integers(0, 3)))
                ]
                component = {"type": "image", "caption": phrase(2), "objects": objects}
            if rng.random() < link_prob:
                component["links"] = [doc_ids[int(rng.integers(n_docs))]]
            components.append(component)
        records.append({"doc_id": doc_id, "title": doc_id.upper(), "components": components})
    return records


@pytest.fixture
def random_corpus():
    """Factory: random small corpus with unique tokens and random links"""
    def make(rng: np.random.Generator, max_docs: int = 5, max_components: int = 4,
             link_prob: float = 0.3) -> Corpus:
        records = _random_records(rng, max_docs, max_components, link_prob)
        return Corpus(documents=tuple(parse_document(r, i + 1) for i, r in enumerate(records)))
    return make


@pytest.fixture
def random_query():
    """Factory: decomposed query over words drawn from a corpus"""
    def make(rng: np.random.Generator, corpus: Corpus, embedder: HashEmbedder) -> DecomposedQuery:
        vocabulary = sorted({w for c in corpus.components() for w in c.embedding_content().lower().split()})
        vocabulary = [w.strip(".|") for w in vocabulary if w.strip(".|")]
        subqueries = []
        for _ in range(int(rng.integers(1, 4))):
            text = " ".join(rng.choice(vocabulary, size=int(rng.integers(1, 4))))
            label = ("text", "table", "image")[int(rng.integers(3))]
            vector = hash_embed(EmbedRequest(text, label), embedder.dimension, embedder.index_seed, embedder.sign_seed)
            subqueries.append(Subquery(text=text, modality=label, embedding=vector))
        coarse_text = " ".join(sq.text for sq in subqueries)
        coarse = hash_embed(EmbedRequest(coarse_text), embedder.dimension, embedder.index_seed, embedder.sign_seed)
        return DecomposedQuery(query_text=coarse_text, coarse_embedding=coarse, subqueries=tuple(subqueries))
    return make


@pytest.fixture
def vector_graph():
    """
    Factory: graph from explicit vectors

    ``coarse`` maps comp_id -> vector, ``children`` comp_id -> list of child vectors,
    ``e0`` lists coarse pairs.
    """
    def make(coarse: Mapping[str, Sequence[float]],
             children: Mapping[str, Sequence[Sequence[float]]],
             e0: Sequence[Tuple[str, str]] = ()) -> LayeredComponentGraph:
        nodes = [Node(cid, 0, NodeType.PARA, cid, "text") for cid in coarse]
        rows = [list(v) for v in coarse.values()]
        e_down = []
        for cid in coarse:
            for k, vector in enumerate(children[cid]):
                nodes.append(Node(f"{cid}/{k}", 1, NodeType.SENT, f"{cid}/{k}", "text", parent=cid))
                rows.append(list(vector))
                e_down.append((cid, f"{cid}/{k}"))
        d = len(rows[0]) if rows else 8
        manifest = IndexManifest(dimension=d, embedder="hash", index_seed=0, sign_seed=0, corpus_digest="test")
        edges = EdgeSet(e0={tuple(sorted(pair)): Provenance.INTER for pair in e0}, e_down=tuple(e_down))
        matrix = np.asarray(rows, dtype=np.float32).reshape(len(rows), d)
        return LayeredComponentGraph(nodes, matrix, edges, manifest)
    return make


def basis(d: int, *weights: Tuple[int, float]) -> np.ndarray:
    vector = np.zeros(d, dtype=np.float64)
    for axis, weight in weights:
        vector[axis] = weight
    return vector


@pytest.fixture
def vec():
    """``vec((0, 0.9), (2, 0.436))`` -> 8-dim vector with those coordinates"""
    return lambda *weights: basis(8, *weights)


@pytest.fixture
def make_query():
    """Factory: decomposed query from raw vectors"""
    def make(coarse: Sequence[float], *subquery_vectors: Sequence[float]) -> DecomposedQuery:
        subqueries = tuple(
            Subquery(text=f"q{i}", modality="text", embedding=np.asarray(v, dtype=np.float64))
            for i, v in enumerate(subquery_vectors)
        )
        return DecomposedQuery(query_text="q", coarse_embedding=np.asarray(coarse, dtype=np.float64),
                               subqueries=subqueries)
    return make
