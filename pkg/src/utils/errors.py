# -*- coding: utf-8 -*-
"""
Exception hierarchy shared by every service
"""

from typing import Optional


class RetrievalEngineError(Exception):
    """Base class for all engine errors"""


class ConfigError(RetrievalEngineError, ValueError):
    """Invalid or unknown configuration"""


class CorpusParseError(RetrievalEngineError, ValueError):
    """Malformed corpus or query record"""

    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class CorpusValidationError(RetrievalEngineError, ValueError):
    """Record is well-formed but violates a corpus invariant"""


class EmbeddingBackendError(RetrievalEngineError, RuntimeError):
    """Encoder backend failed; index is the first affected request"""

    def __init__(self, message: str, index: Optional[int] = None):
        self.index = index
        self.message = message
        prefix = f"request {index}: " if index is not None else ""
        super().__init__(f"{prefix}{message}")


class IndexFormatError(RetrievalEngineError, ValueError):
    """Index directory is truncated, tampered or built with another config"""


class UnknownNodeError(RetrievalEngineError, KeyError):
    """Node id is not present in the graph"""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown node"


class NodeLayerError(RetrievalEngineError, ValueError):
    """Operation requires a node of the other layer"""


class DecompositionError(RetrievalEngineError, ValueError):
    """LLM decomposition could not be obtained or parsed"""


class EvaluationError(RetrievalEngineError, ValueError):
    """Invalid metric input or benchmark files"""


class EmptyGraphError(RetrievalEngineError, ValueError):
    """Retrieval over a graph without coarse nodes"""
