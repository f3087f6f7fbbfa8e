"""
Synthetic Benchmark Service
Generate a multihop corpus with planted cross-document links and gold components behind them
"""

from dataclasses import dataclass
from typing import Any, Dict, List, Set, Tuple

import numpy as np
from loguru import logger

from src.config import hparams as hp
from src.models.corpus import Corpus
from src.services.corpus_service import parse_document
from src.services.evaluation_service import QueryRecord

SYLLABLES = (
    "ka", "lo", "mi", "ra", "ve", "tu", "no", "si", "be", "do",
    "fa", "gu", "ze", "pi", "ro", "ta", "ni", "mu", "le", "vo",
)
KINDS = ("river", "town", "valley", "harbor", "castle", "forest", "canal", "village", "lake", "fortress")
ADJECTIVES = ("quiet", "ancient", "busy", "remote", "famous", "small", "sprawling", "windy")
VERBS = ("borders", "supplies", "trades with", "overlooks", "neighbors", "protects", "feeds", "guards", "serves", "flanks")
ATTRIBUTES = ("elevation", "population", "area", "length", "depth", "rainfall", "temperature", "width", "visitors", "altitude")
FILLERS = ("lively", "green", "proud", "gentle", "rugged", "bright", "humble", "stern", "golden", "misty")
OBJECT_LABELS = ("tower", "bridge", "gate", "dome", "mast", "wall", "statue", "flag")


@dataclass
class _Doc:
    doc_id: str
    entity: str
    kind: str
    region: str
    target: int
    verb: str
    attributes: Dict[str, int]
    labels: List[str]


class SyntheticBenchmarkGenerator:
    """Deterministic generator of documents and multihop / single-hop queries"""

    def __init__(self, seed: int = hp.SyntheticConfig.seed):
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self._used: Set[str] = set()

    def _pick(self, pool):
        return pool[int(self.rng.integers(len(pool)))]

    def _name(self) -> str:
        while True:
            length = int(self.rng.integers(3, 5))
            word = "".join(self._pick(SYLLABLES) for _ in range(length))
            if word not in self._used:
                self._used.add(word)
                return word.capitalize()

    def _docs(self, count: int) -> List[_Doc]:
        docs = []
        for i in range(count):
            target = int(self.rng.integers(count - 1)) if count > 1 else 0
            if count > 1 and target >= i:
                target += 1
            attrs = self.rng.choice(len(ATTRIBUTES), size=3, replace=False)
            n_objects = int(self.rng.integers(0, 4))
            docs.append(_Doc(
                doc_id=f"d{i:04d}",
                entity=self._name(),
                kind=self._pick(KINDS),
                region=self._name(),
                target=target,
                verb=self._pick(VERBS),
                attributes={ATTRIBUTES[int(a)]: int(self.rng.integers(10, 10000)) for a in attrs},
                labels=[self._pick(OBJECT_LABELS) for _ in range(n_objects)],
            ))
        return docs

    def _record(self, doc: _Doc, docs: List[_Doc]) -> Dict[str, Any]:
        target = docs[doc.target]
        objects = []
        for k, label in enumerate(doc.labels):
            x = 10 + 60 * k
            objects.append({"label": label, "bbox": [x, 10, x + 40, 90]})
        components = [
            {"type": "paragraph",
             "text": f"{doc.entity} remains a {self._pick(ADJECTIVES)} {doc.kind} in {doc.region} region. "
                     f"Locals praise {doc.entity} markets."},
            {"type": "paragraph",
             "text": f"{doc.entity} {doc.verb} {target.kind} {target.entity}. "
                     f"Travelers call it {self._pick(FILLERS)} and {self._pick(FILLERS)}.",
             "links": [target.doc_id] if target is not doc else []},
            {"type": "table",
             "rows": [[f"{doc.entity} statistic", "value"]] + [[a, str(v)] for a, v in doc.attributes.items()]},
            {"type": "image", "caption": f"{doc.entity} {doc.kind} photograph", "objects": objects},
        ]
        return {"doc_id": doc.doc_id, "title": f"{doc.entity} {doc.kind}", "components": components}

    def _multihop(self, docs: List[_Doc], count: int) -> List[QueryRecord]:
        incoming: Dict[Tuple[int, str], int] = {}
        for doc in docs:
            incoming[(doc.target, doc.verb)] = incoming.get((doc.target, doc.verb), 0) + 1
        # the source's relation sentence must be the only one pairing its verb with its entity
        eligible = [
            i for i, doc in enumerate(docs)
            if doc.target != i and incoming.get((i, doc.verb), 0) == 0
        ]
        chosen = self.rng.permutation(eligible)[:count]
        queries = []
        for n, i in enumerate(sorted(int(c) for c in chosen)):
            source = docs[i]
            target = docs[source.target]
            # an attribute the source table lacks keeps the gold table the only exact match
            own = sorted(set(target.attributes) - set(source.attributes))
            attribute = self._pick(own or sorted(target.attributes))
            queries.append(QueryRecord(
                qid=f"m{n:04d}",
                text=f"what is the total {attribute} of the {target.kind} that {source.verb} {source.entity}",
                gold=frozenset({f"{target.doc_id}/2"}),
                gold_modalities=frozenset({"table", "text"}),
                tags=("multihop",),
            ))
        if len(queries) < count:
            logger.warning(f"⚠️ Only {len(queries)} multihop queries could be planted (asked for {count})")
        return queries

    def _single(self, docs: List[_Doc], count: int) -> List[QueryRecord]:
        eligible = [i for i, doc in enumerate(docs) if doc.labels]
        chosen = self.rng.permutation(eligible)[:count]
        queries = []
        for n, i in enumerate(sorted(int(c) for c in chosen)):
            doc = docs[i]
            queries.append(QueryRecord(
                qid=f"s{n:04d}",
                text=f"what does the {self._pick(doc.labels)} of {doc.entity} look like",
                gold=frozenset({f"{doc.doc_id}/3"}),
                gold_modalities=frozenset({"image"}),
                tags=("single",),
            ))
        return queries

    def generate(self, docs: int, queries: int, single: int) -> Tuple[Corpus, List[QueryRecord]]:
        """
        Generate a corpus and its queries

        Args:
            docs: Number of documents
            queries: Total number of queries
            single: How many of them are single-hop image queries

        Returns:
            (corpus, queries with gold components, gold modalities and tags)
        """
        if docs < 1 or queries < 0 or not 0 <= single <= queries:
            raise ValueError("need docs >= 1 and 0 <= single <= queries")
        planned = self._docs(docs)
        records = [self._record(doc, planned) for doc in planned]
        corpus = Corpus(documents=tuple(parse_document(r, i + 1) for i, r in enumerate(records)))
        generated = self._multihop(planned, queries - single) + self._single(planned, single)
        logger.info(f"Generated synthetic benchmark: {docs} documents, {len(generated)} queries (seed={self.seed})")
        return corpus, generated


def generate_synthetic(docs: int = hp.SyntheticConfig.docs,
                       queries: int = hp.SyntheticConfig.queries,
                       single: int = hp.SyntheticConfig.single,
                       seed: int = hp.SyntheticConfig.seed) -> Tuple[Corpus, List[QueryRecord]]:
    return SyntheticBenchmarkGenerator(seed).generate(docs, queries, single)
