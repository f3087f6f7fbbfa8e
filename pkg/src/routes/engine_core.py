"""
Engine Core
Lazily loaded, shared retrieval engine behind the HTTP routes
"""

import os
import threading
from typing import Optional

from loguru import logger

from src.config import hparams as hp
from src.models.graph import LayeredComponentGraph
from src.services.decomposition_service import QueryDecompositionService
from src.services.embedding_service import HashEmbedder, build_embedder
from src.services.index_store import load_index
from src.services.retrieval_service import RetrievalService

ENV_CONFIG = "LCG_CONFIG"
ENV_INDEX = "LCG_INDEX"


class EngineManager:
    """
    Owns the loaded graph and the services answering requests

    The graph is immutable once loaded, so one instance serves every request thread.
    """

    def __init__(self):
        self.config: Optional[hp.EngineConfig] = None
        self.index_path: Optional[str] = None
        self.retrieval: Optional[RetrievalService] = None
        self.hash_embedder: Optional[HashEmbedder] = None
        self._lock = threading.Lock()

    def configure(self, config: hp.EngineConfig, index_path: Optional[str] = None,
                  graph: Optional[LayeredComponentGraph] = None):
        """Set configuration (and optionally an in-memory graph) before the first request"""
        with self._lock:
            self.config = config
            self.index_path = index_path or config.paths.index
            self.retrieval = None
            if graph is not None:
                self._start(graph)

    def _start(self, graph: LayeredComponentGraph):
        embedder = build_embedder(self.config.embedder)
        decomposer = QueryDecompositionService(embedder, self.config.decomposer)
        self.retrieval = RetrievalService(graph, decomposer)
        logger.info(f"✅ Engine ready over {len(graph.coarse_ids)} components")

    def initialize(self) -> RetrievalService:
        """Load config and index on first use"""
        with self._lock:
            if self.retrieval is not None:
                return self.retrieval
            if self.config is None:
                self.config = hp.load_config(os.environ.get(ENV_CONFIG))
            if self.index_path is None:
                self.index_path = os.environ.get(ENV_INDEX) or self.config.paths.index
            try:
                logger.info(f"🚀 Loading index from {self.index_path}")
                self._start(load_index(self.index_path, self.config.embedder))
            except Exception as e:
                logger.error(f"❌ Failed to initialize engine: {e}")
                raise
            return self.retrieval

    def embedder(self) -> HashEmbedder:
        """Hash encoder serving the embedding wire protocol"""
        with self._lock:
            if self.hash_embedder is None:
                config = self.config.embedder if self.config else hp.embedder
                self.hash_embedder = HashEmbedder(config.dimension, config.index_seed, config.sign_seed)
            return self.hash_embedder

    def cleanup(self):
        with self._lock:
            self.retrieval = None
            self.hash_embedder = None
        logger.info("Engine released")


engine_manager = EngineManager()
