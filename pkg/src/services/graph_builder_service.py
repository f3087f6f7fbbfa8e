"""
Graph Builder Service
Build the layered component graph: node generation, edge generation, embedding generation
"""

import itertools
from typing import Dict, List, Optional, Sequence, Tuple

from loguru import logger

from src.config import hparams as hp
from src.models.corpus import SUBKIND_FOR_MODALITY, Component, Corpus, LinkMapping, Modality, SubKind
from src.models.graph import (
    BuildReport,
    CoarsePair,
    EdgeSet,
    IndexManifest,
    LayeredComponentGraph,
    Node,
    NodeType,
    Provenance,
    canonical_pair,
)
from src.services.corpus_service import corpus_digest, resolve_links
from src.services.embedding_service import EmbedRequest, Embedder, HashEmbedder, embed_batch
from src.services.segmenter_service import subcomponents
from src.utils.errors import RetrievalEngineError
from src.utils.timing import StageTimer

COARSE_NODE_TYPE = {
    Modality.PARAGRAPH: NodeType.PARA,
    Modality.TABLE: NodeType.TBL,
    Modality.IMAGE: NodeType.IMG,
}

FINE_NODE_TYPE = {
    SubKind.SENTENCE: NodeType.SENT,
    SubKind.ROW_SEGMENT: NodeType.ROW,
    SubKind.OBJECT: NodeType.OBJ,
}


def generate_nodes(corpus: Corpus) -> Tuple[List[Node], List[Node], int]:
    """
    Coarse nodes in corpus order and fine nodes grouped by parent

    Components without subcomponents get a pseudo-subcomponent ``<comp_id>/0``
    carrying the component's own content.

    Returns:
        (coarse nodes, fine nodes, pseudo-subcomponent count)
    """
    coarse: List[Node] = []
    fine: List[Node] = []
    pseudo = 0
    for component in corpus.components():
        instruction = component.modality.instruction
        content = component.embedding_content()
        coarse.append(Node(
            node_id=component.comp_id,
            layer=0,
            node_type=COARSE_NODE_TYPE[component.modality],
            content=content,
            instruction=instruction,
        ))
        children = subcomponents(component)
        if not children:
            pseudo += 1
            fine.append(_pseudo_node(component, content))
            continue
        for sub in children:
            fine.append(Node(
                node_id=sub.sub_id,
                layer=1,
                node_type=FINE_NODE_TYPE[sub.kind],
                content=sub.content,
                instruction=instruction,
                parent=component.comp_id,
            ))
    return coarse, fine, pseudo


def _pseudo_node(component: Component, content: str) -> Node:
    return Node(
        node_id=f"{component.comp_id}/0",
        layer=1,
        node_type=FINE_NODE_TYPE[SUBKIND_FOR_MODALITY[component.modality]],
        content=content,
        instruction=component.modality.instruction,
        parent=component.comp_id,
    )


def generate_edges(corpus: Corpus, links: LinkMapping, fine: Sequence[Node]) -> EdgeSet:
    """
    Intra-document cliques, inter-document link edges and containment edges

    A link from C to its own document adds nothing; an inter pair that already
    exists as an intra pair keeps provenance intra.
    """
    e0: Dict[CoarsePair, Provenance] = {}
    for document in corpus.documents:
        for a, b in itertools.combinations(document.components, 2):
            e0[canonical_pair(a.comp_id, b.comp_id)] = Provenance.INTRA

    for comp_id, target in sorted(links.pairs):
        source = corpus.component(comp_id)
        if target == source.doc_id:
            continue
        for other in corpus.document(target).components:
            e0.setdefault(canonical_pair(comp_id, other.comp_id), Provenance.INTER)

    e_down = tuple((node.parent, node.node_id) for node in fine)
    return EdgeSet(e0=dict(sorted(e0.items())), e_down=e_down)


class GraphBuilderService:
    """Service building LayeredComponentGraph instances from a parsed corpus"""

    def __init__(self,
                 embedder: Optional[Embedder] = None,
                 batch_size: int = hp.embedder.batch_size,
                 progress: bool = False):
        """
        Initialize Graph Builder Service

        Args:
            embedder: Encoder backend, hash backend when omitted
            batch_size: Requests per embedding call
            progress: Show a tqdm bar during embedding generation
        """
        self.embedder = embedder or HashEmbedder()
        self.batch_size = batch_size
        self.progress = progress
        logger.info(f"GraphBuilderService initialized (embedder={self.embedder.identifier}, "
                    f"d={self.embedder.dimension})")

    def _manifest(self, corpus: Corpus, report: BuildReport) -> IndexManifest:
        return IndexManifest(
            dimension=self.embedder.dimension,
            embedder=self.embedder.identifier,
            index_seed=getattr(self.embedder, "index_seed", hp.HASH_INDEX_SEED),
            sign_seed=getattr(self.embedder, "sign_seed", hp.HASH_SIGN_SEED),
            corpus_digest=corpus_digest(corpus),
            counts=report.counts(),
            titles={document.doc_id: document.title for document in corpus.documents},
        )

    def build(self, corpus: Corpus, links: LinkMapping) -> Tuple[LayeredComponentGraph, BuildReport]:
        """
        Build the graph in node, edge and embedding stages

        Args:
            corpus: Validated corpus
            links: Resolved link mapping

        Returns:
            (graph, report with counts and per-stage timings in ms)

        Raises:
            EmbeddingBackendError: Backend failure; ``error.report`` holds the partial report
        """
        timer = StageTimer()
        report = BuildReport(docs=len(corpus), components=corpus.num_components)
        report.timings = timer.timings

        try:
            with timer.stage("node_generation"):
                coarse, fine, pseudo = generate_nodes(corpus)
            report.subcomponents = len(fine)
            report.pseudo_subcomponents = pseudo
            logger.info(f"Generated {len(coarse)} coarse and {len(fine)} fine nodes ({pseudo} pseudo)")

            with timer.stage("edge_generation"):
                edges = generate_edges(corpus, links, fine)
            report.e0_intra = edges.count(Provenance.INTRA)
            report.e0_inter = edges.count(Provenance.INTER)
            report.e_down = len(edges.e_down)
            logger.info(f"Generated {report.e0_intra} intra, {report.e0_inter} inter and {report.e_down} containment edges")

            with timer.stage("embedding_generation"):
                nodes = coarse + fine
                requests_ = [EmbedRequest(node.content, node.instruction) for node in nodes]
                embeddings = embed_batch(requests_, self.embedder, self.batch_size, progress=self.progress)
                graph = LayeredComponentGraph(nodes, embeddings, edges, self._manifest(corpus, report))
        except RetrievalEngineError as e:
            report.total_ms = timer.elapsed_ms()
            e.report = report
            logger.error(f"❌ Build aborted after {report.total_ms:.1f} ms: {e}")
            raise

        report.total_ms = timer.elapsed_ms()
        logger.info(f"✅ Graph built in {report.total_ms:.1f} ms")
        return graph, report

    def profile(self, corpus: Corpus, fractions: Sequence[float]) -> List[Tuple[float, int, BuildReport]]:
        """
        Build on the leading fraction of documents for each fraction

        Args:
            corpus: Full corpus
            fractions: Values in (0, 1]

        Returns:
            One (fraction, document count, report) per fraction
        """
        rows = []
        for fraction in fractions:
            if not 0.0 < fraction <= 1.0:
                raise ValueError(f"profile fraction must be in (0, 1], got {fraction}")
            count = max(1, round(fraction * len(corpus)))
            subset = Corpus(documents=corpus.documents[:count])
            _, report = self.build(subset, resolve_links(subset))
            rows.append((fraction, count, report))
        return rows


def build_graph(corpus: Corpus, links: LinkMapping,
                embedder: Optional[Embedder] = None,
                progress: bool = False) -> Tuple[LayeredComponentGraph, BuildReport]:
    return GraphBuilderService(embedder, progress=progress).build(corpus, links)


def profile_build(corpus: Corpus, fractions: Sequence[float],
                  embedder: Optional[Embedder] = None) -> List[Tuple[float, int, BuildReport]]:
    return GraphBuilderService(embedder).profile(corpus, fractions)
