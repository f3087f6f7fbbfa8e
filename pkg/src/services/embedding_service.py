"""
Embedding Service
Encoder backends (deterministic feature hashing, remote embedding service) and cosine similarity
"""

import hashlib
import re
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import List, Sequence

import numpy as np
import requests
from loguru import logger
from tqdm import tqdm

from src.config import hparams as hp
from src.utils.errors import EmbeddingBackendError

_TOKEN = re.compile(r"[^\W_]+", re.UNICODE)


class ModalityInstruction(str, Enum):
    TEXT = "text"
    TABLE = "table"
    IMAGE = "image"
    NONE = "none"

    @property
    def wire(self) -> str:
        """Instruction as sent over the wire; none travels as an empty string"""
        return "" if self is ModalityInstruction.NONE else self.value


@dataclass(frozen=True)
class EmbedRequest:
    content: str
    modality_instruction: ModalityInstruction = ModalityInstruction.NONE

    def __post_init__(self):
        object.__setattr__(self, "modality_instruction", ModalityInstruction(self.modality_instruction))


def tokenize(request: EmbedRequest) -> List[str]:
    tokens = _TOKEN.findall(request.content.casefold())
    if request.modality_instruction is not ModalityInstruction.NONE:
        tokens.insert(0, f"mod:{request.modality_instruction.value}")
    return tokens


def _keyed_hash(token: str, seed: int) -> int:
    key = seed.to_bytes(8, "little", signed=False)
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=key).digest()
    return int.from_bytes(digest, "little")


def normalize(vector: np.ndarray) -> np.ndarray:
    """L2-normalize to float32; the zero vector stays zero"""
    vector = np.asarray(vector, dtype=np.float64)
    norm = float(np.linalg.norm(vector))
    if norm == 0.0:
        return np.zeros(vector.shape, dtype=np.float32)
    return (vector / norm).astype(np.float32)


def hash_embed(request: EmbedRequest,
               d: int = hp.embedder.dimension,
               index_seed: int = hp.HASH_INDEX_SEED,
               sign_seed: int = hp.HASH_SIGN_SEED) -> np.ndarray:
    """
    Signed feature-hash embedding

    Args:
        request: Content plus modality instruction (prepended as a ``mod:<label>`` token)
        d: Dimension, at least 8
        index_seed: Seed of the bucket hash
        sign_seed: Seed of the sign hash

    Returns:
        Unit-norm float32 vector, or zeros when there are no tokens
    """
    if d < 8:
        raise ValueError(f"dimension must be >= 8, got {d}")
    accumulated = np.zeros(d, dtype=np.float64)
    for token in tokenize(request):
        bucket = _keyed_hash(token, index_seed) % d
        accumulated[bucket] += 1.0 if _keyed_hash(token, sign_seed) & 1 else -1.0
    return normalize(accumulated)


def cosine(u: Sequence[float], v: Sequence[float]) -> float:
    """Cosine similarity; 0 when either vector is zero"""
    a = np.asarray(u, dtype=np.float64)
    b = np.asarray(v, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


class Embedder(ABC):
    """Encoder backend producing one unit-norm float32 row per request"""

    dimension: int
    max_in_flight: int = 1

    @property
    @abstractmethod
    def identifier(self) -> str:
        ...

    @abstractmethod
    def embed_batch(self, requests_: Sequence[EmbedRequest]) -> np.ndarray:
        ...

    def embed(self, request: EmbedRequest) -> np.ndarray:
        return self.embed_batch([request])[0]


class HashEmbedder(Embedder):
    """Deterministic, offline feature-hash encoder"""

    def __init__(self,
                 dimension: int = hp.embedder.dimension,
                 index_seed: int = hp.HASH_INDEX_SEED,
                 sign_seed: int = hp.HASH_SIGN_SEED):
        if dimension < 8:
            raise ValueError(f"dimension must be >= 8, got {dimension}")
        self.dimension = dimension
        self.index_seed = index_seed
        self.sign_seed = sign_seed

    @property
    def identifier(self) -> str:
        return "hash"

    def embed_batch(self, requests_: Sequence[EmbedRequest]) -> np.ndarray:
        if not requests_:
            return np.zeros((0, self.dimension), dtype=np.float32)
        return np.stack([hash_embed(r, self.dimension, self.index_seed, self.sign_seed) for r in requests_])


class ServiceEmbedder(Embedder):
    """Client for the ``POST /embed`` wire protocol; batches may be in flight concurrently"""

    def __init__(self,
                 base_url: str = hp.embedder.service_url,
                 dimension: int = hp.embedder.dimension,
                 timeout: float = hp.embedder.timeout,
                 batch_size: int = hp.embedder.batch_size,
                 max_in_flight: int = hp.embedder.max_in_flight,
                 session: requests.Session = None):
        self.base_url = base_url.rstrip("/")
        self.dimension = dimension
        self.timeout = timeout
        self.batch_size = batch_size
        self.max_in_flight = max_in_flight
        self.session = session or requests.Session()
        logger.info(f"ServiceEmbedder initialized: {self.base_url}/embed (d={dimension}, batch={batch_size})")

    @property
    def identifier(self) -> str:
        return "service"

    def _post_batch(self, offset: int, batch: Sequence[EmbedRequest]) -> np.ndarray:
        payload = {
            "items": [{"content": r.content, "instruction": r.modality_instruction.wire} for r in batch]
        }
        try:
            response = self.session.post(f"{self.base_url}/embed", json=payload, timeout=self.timeout)
        except requests.RequestException as e:
            raise EmbeddingBackendError(f"transport failure: {e}", index=offset) from e
        if response.status_code != 200:
            raise EmbeddingBackendError(f"service returned HTTP {response.status_code}", index=offset)
        try:
            vectors = response.json()["vectors"]
        except (ValueError, KeyError, TypeError) as e:
            raise EmbeddingBackendError(f"malformed response body: {e}", index=offset) from e
        if not isinstance(vectors, list) or len(vectors) != len(batch):
            count = len(vectors) if isinstance(vectors, list) else "no"
            raise EmbeddingBackendError(f"service returned {count} vectors for {len(batch)} requests", index=offset)

        rows = []
        for i, vector in enumerate(vectors):
            if not isinstance(vector, list) or len(vector) != self.dimension:
                size = len(vector) if isinstance(vector, list) else "invalid"
                raise EmbeddingBackendError(
                    f"vector dimension {size} does not match configured {self.dimension}", index=offset + i
                )
            rows.append(normalize(np.asarray(vector, dtype=np.float64)))
        return np.stack(rows)

    def embed_batch(self, requests_: Sequence[EmbedRequest]) -> np.ndarray:
        if not requests_:
            return np.zeros((0, self.dimension), dtype=np.float32)
        offsets = range(0, len(requests_), self.batch_size)
        with ThreadPoolExecutor(max_workers=self.max_in_flight) as pool:
            futures = [pool.submit(self._post_batch, o, requests_[o:o + self.batch_size]) for o in offsets]
            return np.concatenate([f.result() for f in futures])


def embed_batch(requests_: Sequence[EmbedRequest], backend: Embedder,
                batch_size: int = hp.embedder.batch_size, progress: bool = False) -> np.ndarray:
    """
    Embed requests in order with any backend

    Args:
        requests_: Requests to embed
        backend: Encoder backend
        batch_size: Requests per backend batch; a backend with several batches in flight gets that many per call
        progress: Show a tqdm bar over chunks

    Returns:
        (len(requests_), d) float32 matrix, row i for request i
    """
    if not requests_:
        return np.zeros((0, backend.dimension), dtype=np.float32)
    stride = batch_size * max(1, backend.max_in_flight)
    chunks = []
    offsets = range(0, len(requests_), stride)
    for offset in tqdm(offsets, desc="embedding", unit="chunk", disable=not progress):
        try:
            chunks.append(backend.embed_batch(requests_[offset:offset + stride]))
        except EmbeddingBackendError as e:
            # backend indices are local to the chunk
            local = e.index if e.index is not None else 0
            raise EmbeddingBackendError(e.message, index=offset + local) from e
    return np.concatenate(chunks)


def build_embedder(config: hp.EmbedderConfig = hp.embedder) -> Embedder:
    if config.backend == "hash":
        return HashEmbedder(config.dimension, config.index_seed, config.sign_seed)
    if config.backend == "service":
        return ServiceEmbedder(
            base_url=config.service_url,
            dimension=config.dimension,
            timeout=config.timeout,
            batch_size=config.batch_size,
            max_in_flight=config.max_in_flight,
        )
    raise ValueError(f"Unknown embedder backend: {config.backend}")
