# -*- coding: utf-8 -*-
"""
Corpus domain types: documents, components, subcomponents and the link mapping
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, Iterator, Optional, Tuple

from src.utils.errors import CorpusValidationError, UnknownNodeError


class Modality(str, Enum):
    PARAGRAPH = "paragraph"
    TABLE = "table"
    IMAGE = "image"

    @property
    def instruction(self) -> str:
        """Encoder instruction label used for nodes of this modality"""
        return _MODALITY_INSTRUCTION[self]


class SubKind(str, Enum):
    SENTENCE = "sentence"
    ROW_SEGMENT = "row_segment"
    OBJECT = "object"


_MODALITY_INSTRUCTION = {
    Modality.PARAGRAPH: "text",
    Modality.TABLE: "table",
    Modality.IMAGE: "image",
}

SUBKIND_FOR_MODALITY = {
    Modality.PARAGRAPH: SubKind.SENTENCE,
    Modality.TABLE: SubKind.ROW_SEGMENT,
    Modality.IMAGE: SubKind.OBJECT,
}


def make_comp_id(doc_id: str, index: int) -> str:
    return f"{doc_id}/{index}"


def parse_comp_id(comp_id: str) -> Tuple[str, int]:
    """Split ``<doc_id>/<index>`` back into its parts"""
    doc_id, sep, index = comp_id.rpartition("/")
    if not sep or not doc_id or not index.isdigit():
        raise ValueError(f"Malformed component id: {comp_id!r}")
    return doc_id, int(index)


@dataclass(frozen=True)
class ObjectAnnotation:
    """Precomputed image object: label plus pixel bounding box"""
    label: str
    bbox: Tuple[int, int, int, int]

    def __post_init__(self):
        if not self.label or not self.label.strip():
            raise CorpusValidationError("object label must be non-empty")
        if len(self.bbox) != 4:
            raise CorpusValidationError(f"object {self.label!r}: bbox needs 4 integers")
        x1, y1, x2, y2 = self.bbox
        if not (x1 < x2 and y1 < y2):
            raise CorpusValidationError(f"object {self.label!r}: bbox {self.bbox} requires x1 < x2 and y1 < y2")


@dataclass(frozen=True)
class Component:
    """Coarse retrieval unit; exactly one modality payload is populated"""
    comp_id: str
    modality: Modality
    text: str = ""
    rows: Optional[Tuple[Tuple[str, ...], ...]] = None
    objects: Optional[Tuple[ObjectAnnotation, ...]] = None
    links: Tuple[str, ...] = ()
    image_ref: Optional[str] = None

    def __post_init__(self):
        if self.modality is Modality.PARAGRAPH:
            if not self.text.strip():
                raise CorpusValidationError(f"{self.comp_id}: paragraph text must be non-empty")
            if self.rows is not None or self.objects is not None:
                raise CorpusValidationError(f"{self.comp_id}: paragraph carries a table or image payload")
        elif self.modality is Modality.TABLE:
            if not self.rows:
                raise CorpusValidationError(f"{self.comp_id}: table needs at least a header row")
            if self.text or self.objects is not None:
                raise CorpusValidationError(f"{self.comp_id}: table carries a text or image payload")
        elif self.modality is Modality.IMAGE:
            if self.objects is None:
                raise CorpusValidationError(f"{self.comp_id}: image needs an objects list")
            if self.rows is not None:
                raise CorpusValidationError(f"{self.comp_id}: image carries a table payload")

    @property
    def doc_id(self) -> str:
        return parse_comp_id(self.comp_id)[0]

    @property
    def index(self) -> int:
        return parse_comp_id(self.comp_id)[1]

    @property
    def header(self) -> Tuple[str, ...]:
        return self.rows[0] if self.rows else ()

    @property
    def caption(self) -> str:
        return self.text if self.modality is Modality.IMAGE else ""

    def embedding_content(self) -> str:
        """Text the encoder sees for the coarse node"""
        if self.modality is Modality.PARAGRAPH:
            return self.text
        if self.modality is Modality.TABLE:
            return " | ".join(self.header)
        labels = [obj.label for obj in self.objects or ()]
        return " ".join(part for part in [self.caption, *labels] if part)


@dataclass(frozen=True)
class Document:
    doc_id: str
    title: str
    components: Tuple[Component, ...]

    def __post_init__(self):
        if not self.doc_id or "/" in self.doc_id:
            raise CorpusValidationError(f"doc_id {self.doc_id!r} must be non-empty and contain no '/'")
        if not self.components:
            raise CorpusValidationError(f"{self.doc_id}: document has no components")
        for position, component in enumerate(self.components):
            if component.comp_id != make_comp_id(self.doc_id, position):
                raise CorpusValidationError(
                    f"{self.doc_id}: component at position {position} has id {component.comp_id}"
                )


@dataclass(frozen=True)
class Corpus:
    """Immutable, ordered document collection"""
    documents: Tuple[Document, ...]
    _by_doc: Dict[str, Document] = field(init=False, repr=False, compare=False)
    _by_comp: Dict[str, Component] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        by_doc: Dict[str, Document] = {}
        by_comp: Dict[str, Component] = {}
        for document in self.documents:
            if document.doc_id in by_doc:
                raise CorpusValidationError(f"duplicate doc_id {document.doc_id!r}")
            by_doc[document.doc_id] = document
            for component in document.components:
                by_comp[component.comp_id] = component
        object.__setattr__(self, "_by_doc", by_doc)
        object.__setattr__(self, "_by_comp", by_comp)

    def __len__(self) -> int:
        return len(self.documents)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._by_doc

    def document(self, doc_id: str) -> Document:
        try:
            return self._by_doc[doc_id]
        except KeyError:
            raise UnknownNodeError(f"unknown document {doc_id!r}") from None

    def component(self, comp_id: str) -> Component:
        try:
            return self._by_comp[comp_id]
        except KeyError:
            raise UnknownNodeError(f"unknown component {comp_id!r}") from None

    def components(self) -> Iterator[Component]:
        for document in self.documents:
            yield from document.components

    @property
    def num_components(self) -> int:
        return len(self._by_comp)


@dataclass(frozen=True)
class LinkMapping:
    """Resolved (component, target document) pairs"""
    pairs: FrozenSet[Tuple[str, str]]
    dropped: int = 0

    def __len__(self) -> int:
        return len(self.pairs)

    def __contains__(self, pair: Tuple[str, str]) -> bool:
        return pair in self.pairs


@dataclass(frozen=True)
class Subcomponent:
    """Fine unit owned by exactly one component"""
    sub_id: str
    parent: str
    kind: SubKind
    content: str

    def __post_init__(self):
        if not self.content:
            raise CorpusValidationError(f"{self.sub_id}: subcomponent content must be non-empty")
