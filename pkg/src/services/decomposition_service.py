"""
Query Decomposition Service
Split a query into modality-labeled subqueries (rule splitter or chat-completions LLM) and embed them
"""

import hashlib
import json
import re
import threading
import time
from pathlib import Path
from typing import Dict, List, Optional, Set, Tuple

import numpy as np
import requests
from loguru import logger

from src.config import hparams as hp
from src.models.query import MAX_SUBQUERIES, QUERY_MODALITIES, DecomposedQuery, Subquery
from src.services.embedding_service import EmbedRequest, Embedder, HashEmbedder, ModalityInstruction
from src.utils.errors import DecompositionError
from src.utils.timing import StageTimer

TABLE_CUES = ("how many", "total", "percentage", "per year", "rate", "number of")
IMAGE_CUES = ("look like", "color", "colour", "logo", "photo", "depicted", "wearing")

_TABLE_RE = [re.compile(rf"\b{re.escape(cue)}\b") for cue in TABLE_CUES]
_IMAGE_RE = [re.compile(rf"\b{re.escape(cue)}\b") for cue in IMAGE_CUES]

_CONJUNCTION = re.compile(r"\s+as\s+well\s+as\s+|\s+and\s+|\s*,\s+", re.IGNORECASE)
_WORD = re.compile(r"\S+")

AUXILIARIES = frozenset({
    "is", "was", "are", "were", "has", "have", "had", "can", "could",
    "will", "would", "did", "does", "do",
})
NOT_VERBS = frozenset({"this", "his", "its", "these", "those", "the", "a", "an", "us", "as"})


def classify_modality(subquery: str) -> str:
    """
    Rule-based modality label

    Table cues win over image cues; anything else is text.
    """
    lowered = subquery.lower()
    if any(pattern.search(lowered) for pattern in _TABLE_RE):
        return "table"
    if any(pattern.search(lowered) for pattern in _IMAGE_RE):
        return "image"
    return "text"


def _looks_like_verb(token: str) -> bool:
    word = token.lower().strip(".,;:?!\"'")
    if word in AUXILIARIES:
        return True
    if word in NOT_VERBS:
        return False
    return len(word) > 3 and (word.endswith("s") or word.endswith("ed"))


def _split_relative(clause: str) -> List[str]:
    """Split at ``which`` or at ``that`` followed by a verb; the marker is dropped"""
    tokens = [m for m in _WORD.finditer(clause)]
    pieces = []
    start = 0
    for i, match in enumerate(tokens):
        word = match.group().lower()
        marker = word == "which" or (
            word == "that" and i + 1 < len(tokens) and _looks_like_verb(tokens[i + 1].group())
        )
        if marker and i > 0:
            pieces.append(clause[start:match.start()])
            start = match.end()
    pieces.append(clause[start:])
    return pieces


def _clamp(parts: List[str]) -> List[str]:
    if len(parts) <= MAX_SUBQUERIES:
        return parts
    head = parts[:MAX_SUBQUERIES - 1]
    return head + [" ".join(parts[MAX_SUBQUERIES - 1:])]


def split_query(query: str) -> List[str]:
    """
    Rule splitter: conjunctions and commas first, then relative-clause markers

    Returns:
        1..5 trimmed subquery strings; the whole query when nothing splits
    """
    parts = []
    for clause in _CONJUNCTION.split(query):
        for piece in _split_relative(clause):
            piece = piece.strip(" ,;")
            if piece:
                parts.append(piece)
    if not parts:
        return [query.strip()]
    return _clamp(parts)


def parse_decomposition(response: str) -> List[str]:
    """Parse the decomposition call output: a JSON array of 1..5 strings"""
    text = response.strip()
    fenced = re.match(r"^```(?:json)?\s*(.*?)\s*```$", text, re.DOTALL)
    if fenced:
        text = fenced.group(1)
    try:
        parsed = json.loads(text)
    except json.JSONDecodeError as e:
        raise DecompositionError(f"decomposition output is not JSON: {e.msg}") from e
    if not isinstance(parsed, list) or not all(isinstance(item, str) for item in parsed):
        raise DecompositionError("decomposition output must be a JSON array of strings")
    items = [item.strip() for item in parsed if item.strip()]
    if not items:
        raise DecompositionError("decomposition output is empty")
    return _clamp(items)


def parse_modality(response: str) -> str:
    """Parse the modality call output: a single label line"""
    lines = [line.strip().lower() for line in response.strip().splitlines() if line.strip()]
    if len(lines) != 1 or lines[0] not in QUERY_MODALITIES:
        raise DecompositionError(f"modality output must be one of {QUERY_MODALITIES}, got {response!r}")
    return lines[0]


def fill_template(template: str, **values: str) -> str:
    """Substitute ``{name}`` placeholders; other braces are left alone"""
    for name, value in values.items():
        template = template.replace("{" + name + "}", value)
    return template


def prompt_key(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class LLMClient:
    """Chat-completions client with bounded concurrency and an optional replay transcript"""

    def __init__(self, config: hp.DecomposerConfig = hp.decomposer, session: Optional[requests.Session] = None):
        """
        Initialize LLM client

        Args:
            config: Decomposer configuration (URL, model, retries, replay file)
            session: Optional requests session
        """
        self.config = config
        self.session = session or requests.Session()
        self._slots = threading.BoundedSemaphore(config.max_in_flight)
        self._lock = threading.Lock()
        self._transcript: Dict[str, str] = {}
        if config.replay_mode != "off":
            self._transcript = self._load_transcript()
        logger.info(f"LLMClient initialized: {config.llm_url} model={config.llm_model} replay={config.replay_mode}")

    def _load_transcript(self) -> Dict[str, str]:
        path = Path(self.config.replay_path)
        transcript: Dict[str, str] = {}
        if not path.exists():
            if self.config.replay_mode == "replay":
                raise DecompositionError(f"replay transcript not found: {path}")
            return transcript
        with open(path, "r", encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    record = json.loads(line)
                    transcript[record["key"]] = record["response"]
        return transcript

    def _record(self, prompt: str, response: str):
        key = prompt_key(prompt)
        with self._lock:
            self._transcript[key] = response
            path = Path(self.config.replay_path)
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "a", encoding="utf-8") as f:
                f.write(json.dumps({"key": key, "prompt": prompt, "response": response}, ensure_ascii=False) + "\n")

    def _post(self, prompt: str) -> str:
        payload = {
            "model": self.config.llm_model,
            "temperature": self.config.temperature,
            "messages": [{"role": "user", "content": prompt}],
        }
        url = f"{self.config.llm_url.rstrip('/')}/chat/completions"
        last_error: Optional[Exception] = None
        for attempt in range(self.config.retries + 1):
            try:
                with self._slots:
                    response = self.session.post(url, json=payload, timeout=self.config.timeout)
                response.raise_for_status()
                return response.json()["choices"][0]["message"]["content"]
            except (requests.RequestException, ValueError, KeyError, IndexError, TypeError) as e:
                last_error = e
                logger.warning(f"⚠️ LLM call failed (attempt {attempt + 1}/{self.config.retries + 1}): {e}")
                if attempt < self.config.retries:
                    time.sleep(0.5 * (attempt + 1))
        raise DecompositionError(f"LLM call failed after {self.config.retries + 1} attempts: {last_error}")

    def complete(self, prompt: str) -> str:
        if self.config.replay_mode == "replay":
            try:
                return self._transcript[prompt_key(prompt)]
            except KeyError:
                raise DecompositionError("prompt not found in replay transcript") from None
        response = self._post(prompt)
        if self.config.replay_mode == "record":
            self._record(prompt, response)
        return response


class QueryDecompositionService:
    """Service turning raw queries into DecomposedQuery instances"""

    def __init__(self,
                 embedder: Optional[Embedder] = None,
                 config: hp.DecomposerConfig = hp.decomposer,
                 llm: Optional[LLMClient] = None):
        """
        Initialize Query Decomposition Service

        Args:
            embedder: Encoder used for the coarse and subquery embeddings
            config: Decomposer configuration
            llm: LLM client, created lazily for the llm backend when omitted
        """
        self.embedder = embedder or HashEmbedder()
        self.config = config
        self._llm = llm
        self._templates: Dict[str, str] = {}
        logger.info(f"QueryDecompositionService initialized (backend={config.backend})")

    @property
    def llm(self) -> LLMClient:
        if self._llm is None:
            self._llm = LLMClient(self.config)
        return self._llm

    def _template(self, path: str) -> str:
        if path not in self._templates:
            self._templates[path] = Path(path).read_text(encoding="utf-8")
        return self._templates[path]

    def _llm_decompose(self, query: str) -> List[Tuple[str, str]]:
        prompt = fill_template(self._template(self.config.decomposition_prompt), question=query)
        texts = parse_decomposition(self.llm.complete(prompt))
        labeled = []
        for text in texts:
            prompt = fill_template(self._template(self.config.modality_prompt), subquery=text)
            labeled.append((text, parse_modality(self.llm.complete(prompt))))
        return labeled

    def plan(self, query: str, backend: str) -> Tuple[List[Tuple[str, str]], bool, Optional[str]]:
        """
        Labeled subquery texts without embeddings

        Returns:
            ([(text, label)], fallback flag, fallback reason)
        """
        if backend == "none":
            return [(query, classify_modality(query))], False, None
        if backend == "llm":
            try:
                return self._llm_decompose(query), False, None
            except DecompositionError as e:
                logger.warning(f"⚠️ LLM decomposition failed, falling back to rules: {e}")
                return self._rule_plan(query), True, str(e)
        if backend == "rule":
            return self._rule_plan(query), False, None
        raise ValueError(f"Unknown decomposer backend: {backend}")

    @staticmethod
    def _rule_plan(query: str) -> List[Tuple[str, str]]:
        return [(text, classify_modality(text)) for text in split_query(query)]

    def embed_coarse(self, query: str) -> np.ndarray:
        return self.embedder.embed(EmbedRequest(query, ModalityInstruction.NONE))

    def decompose(self, query: str, backend: Optional[str] = None) -> DecomposedQuery:
        """
        Decompose and embed a query

        Args:
            query: Raw query text
            backend: rule, llm or none; configured backend when omitted

        Returns:
            DecomposedQuery with ``decomposition`` and ``query_embedding`` timings in ms
        """
        if not query or not query.strip():
            raise DecompositionError("query must be non-empty")
        backend = backend or self.config.backend
        timer = StageTimer()
        with timer.stage("decomposition"):
            labeled, fallback, reason = self.plan(query.strip(), backend)
        with timer.stage("query_embedding"):
            requests_ = [EmbedRequest(query, ModalityInstruction.NONE)]
            requests_.extend(EmbedRequest(text, ModalityInstruction(label)) for text, label in labeled)
            vectors = self.embedder.embed_batch(requests_)
        subqueries = tuple(
            Subquery(text=text, modality=label, embedding=vectors[i + 1])
            for i, (text, label) in enumerate(labeled)
        )
        return DecomposedQuery(
            query_text=query,
            coarse_embedding=vectors[0],
            subqueries=subqueries,
            backend=backend,
            fallback=fallback,
            fallback_reason=reason,
            timings=dict(timer.timings),
        )


def decompose_query(query: str, backend: str = hp.decomposer.backend,
                    embedder: Optional[Embedder] = None,
                    config: hp.DecomposerConfig = hp.decomposer) -> DecomposedQuery:
    return QueryDecompositionService(embedder, config).decompose(query, backend)


def modality_set(dq: DecomposedQuery) -> Set[str]:
    return set(dq.labels)
