# -*- coding: utf-8 -*-
"""
Engine configuration for the layered component graph retrieval engine
"""

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

from loguru import logger
from omegaconf import OmegaConf
from omegaconf.errors import OmegaConfBaseException

from src.utils.errors import ConfigError

PROMPT_DIR = Path(__file__).parent / "prompts"

# Fixed feature-hash seeds; written into every index manifest.
HASH_INDEX_SEED = 0x1C0FFEE5
HASH_SIGN_SEED = 0x5EEDB175

EMBEDDER_BACKENDS = ("hash", "service")
DECOMPOSER_BACKENDS = ("rule", "llm", "none")
RETRIEVAL_MODES = ("full", "no_qd", "knn")
RECALL_MODES = ("coverage", "hit")
REPLAY_MODES = ("off", "record", "replay")

ENV_EMBEDDER_URL = "LCG_EMBEDDER_URL"
ENV_LLM_URL = "LCG_LLM_URL"


@dataclass
class EmbedderConfig:
    """Encoder configuration"""
    backend: str = "hash"
    dimension: int = 256
    index_seed: int = HASH_INDEX_SEED
    sign_seed: int = HASH_SIGN_SEED
    service_url: str = "http://localhost:8000"
    timeout: float = 30.0
    batch_size: int = 64
    max_in_flight: int = 4


@dataclass
class DecomposerConfig:
    """Query decomposition configuration"""
    backend: str = "rule"
    llm_url: str = "http://localhost:8001/v1"
    llm_model: str = "qwen2.5-72b-instruct"
    temperature: float = 0.0
    timeout: float = 60.0
    retries: int = 2
    max_in_flight: int = 4
    decomposition_prompt: str = str(PROMPT_DIR / "query_decomposition.txt")
    modality_prompt: str = str(PROMPT_DIR / "modality_selection.txt")
    replay_path: Optional[str] = None
    replay_mode: str = "off"


@dataclass
class RetrievalConfig:
    """Traversal defaults (beam width 30, one iteration)"""
    b: int = 30
    n_i: int = 1
    n_ret: int = 10
    mode: str = "full"


@dataclass
class EvalConfig:
    """Benchmark metric configuration"""
    k_values: List[int] = field(default_factory=lambda: [3, 10])
    recall: str = "coverage"


@dataclass
class PathsConfig:
    """Artifact locations"""
    corpus: str = "data/corpus.jsonl"
    index: str = "data/index"
    queries: str = "data/queries.jsonl"
    qrels: Optional[str] = None
    report: str = "data/report.json"


@dataclass
class LoggingConfig:
    """Logging sinks"""
    level: str = "INFO"
    file: Optional[str] = None
    progress: bool = True


@dataclass
class SyntheticConfig:
    """Synthetic multihop benchmark generator"""
    docs: int = 300
    queries: int = 200
    single: int = 50
    seed: int = 13


@dataclass
class EngineConfig:
    """Top-level configuration"""
    embedder: EmbedderConfig = field(default_factory=EmbedderConfig)
    decomposer: DecomposerConfig = field(default_factory=DecomposerConfig)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)
    logging: LoggingConfig = field(default_factory=LoggingConfig)
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    jobs: int = 0

    @property
    def workers(self) -> int:
        return self.jobs if self.jobs > 0 else (os.cpu_count() or 1)


def _check_choice(name: str, value: str, choices: Sequence[str]):
    if value not in choices:
        raise ConfigError(f"{name} must be one of {list(choices)}, got {value!r}")


def validate_config(config: EngineConfig) -> EngineConfig:
    """Range and enum checks the structured schema cannot express"""
    _check_choice("embedder.backend", config.embedder.backend, EMBEDDER_BACKENDS)
    _check_choice("decomposer.backend", config.decomposer.backend, DECOMPOSER_BACKENDS)
    _check_choice("decomposer.replay_mode", config.decomposer.replay_mode, REPLAY_MODES)
    _check_choice("retrieval.mode", config.retrieval.mode, RETRIEVAL_MODES)
    _check_choice("eval.recall", config.eval.recall, RECALL_MODES)

    if config.embedder.dimension < 8:
        raise ConfigError(f"embedder.dimension must be >= 8, got {config.embedder.dimension}")
    if config.embedder.batch_size < 1 or config.embedder.max_in_flight < 1:
        raise ConfigError("embedder.batch_size and embedder.max_in_flight must be positive")
    if config.decomposer.max_in_flight < 1 or config.decomposer.retries < 0:
        raise ConfigError("decomposer.max_in_flight must be positive and retries non-negative")
    if config.decomposer.replay_mode != "off" and not config.decomposer.replay_path:
        raise ConfigError("decomposer.replay_path is required when replay_mode is not 'off'")
    if config.retrieval.b < 1 or config.retrieval.n_ret < 1 or config.retrieval.n_i < 0:
        raise ConfigError("retrieval requires b >= 1, n_ret >= 1 and n_i >= 0")
    if not config.eval.k_values or any(k < 1 for k in config.eval.k_values):
        raise ConfigError("eval.k_values must be a non-empty list of positive integers")
    if config.jobs < 0:
        raise ConfigError("jobs must be >= 0")
    return config


def load_config(path: Optional[str] = None, overrides: Optional[Sequence[str]] = None) -> EngineConfig:
    """
    Load the engine configuration

    Args:
        path: Optional YAML file merged over the defaults
        overrides: Dotted ``key=value`` overrides applied after the file

    Returns:
        Validated EngineConfig
    """
    schema = OmegaConf.structured(EngineConfig)
    try:
        merged = schema
        if path is not None:
            if not Path(path).exists():
                raise ConfigError(f"Config file not found: {path}")
            merged = OmegaConf.merge(merged, OmegaConf.load(path))
        if overrides:
            merged = OmegaConf.merge(merged, OmegaConf.from_dotlist(list(overrides)))
        config: EngineConfig = OmegaConf.to_object(merged)
    except OmegaConfBaseException as e:
        raise ConfigError(f"Invalid configuration: {e}") from e

    embedder_url = os.environ.get(ENV_EMBEDDER_URL)
    if embedder_url:
        logger.debug(f"Embedder URL overridden from {ENV_EMBEDDER_URL}")
        config.embedder.service_url = embedder_url
    llm_url = os.environ.get(ENV_LLM_URL)
    if llm_url:
        logger.debug(f"LLM URL overridden from {ENV_LLM_URL}")
        config.decomposer.llm_url = llm_url

    return validate_config(config)


# Global configuration instances
embedder = EmbedderConfig()
decomposer = DecomposerConfig()
