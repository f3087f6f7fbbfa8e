"""
Corpus Service
Parse newline-delimited corpus records into validated documents and resolve links
"""

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Set, Tuple, Union

from loguru import logger

from src.models.corpus import (
    Component,
    Corpus,
    Document,
    LinkMapping,
    Modality,
    ObjectAnnotation,
    make_comp_id,
)
from src.utils.errors import CorpusParseError, CorpusValidationError

_PAYLOAD_KEYS = {"text", "rows", "objects", "caption"}


def _require(record: Dict[str, Any], key: str, kind: type, line: int, where: str) -> Any:
    if key not in record:
        raise CorpusParseError(line, f"{where}: missing key {key!r}")
    value = record[key]
    if not isinstance(value, kind):
        raise CorpusParseError(line, f"{where}: {key!r} must be {kind.__name__}")
    return value


def _cell(value: Any, line: int, where: str) -> str:
    if isinstance(value, bool) or not isinstance(value, (str, int, float)):
        raise CorpusParseError(line, f"{where}: table cells must be strings or numbers")
    return value if isinstance(value, str) else str(value)


def _parse_objects(raw: Any, line: int, comp_id: str) -> Tuple[ObjectAnnotation, ...]:
    if not isinstance(raw, list):
        raise CorpusParseError(line, f"{comp_id}: 'objects' must be a list")
    objects = []
    for obj in raw:
        if not isinstance(obj, dict):
            raise CorpusParseError(line, f"{comp_id}: object annotations must be objects")
        label = _require(obj, "label", str, line, comp_id)
        bbox = _require(obj, "bbox", list, line, comp_id)
        if len(bbox) != 4 or not all(isinstance(v, int) and not isinstance(v, bool) for v in bbox):
            raise CorpusParseError(line, f"{comp_id}: bbox must be four integers")
        try:
            objects.append(ObjectAnnotation(label=label, bbox=tuple(bbox)))
        except CorpusValidationError as e:
            raise CorpusValidationError(f"{comp_id}: {e}") from e
    return tuple(objects)


def _parse_component(raw: Any, doc_id: str, index: int, line: int) -> Component:
    comp_id = make_comp_id(doc_id, index)
    if not isinstance(raw, dict):
        raise CorpusParseError(line, f"{comp_id}: component must be an object")
    kind = _require(raw, "type", str, line, comp_id)
    try:
        modality = Modality(kind)
    except ValueError:
        raise CorpusParseError(line, f"{comp_id}: unknown component type {kind!r}") from None

    links = raw.get("links", [])
    if not isinstance(links, list) or not all(isinstance(t, str) for t in links):
        raise CorpusParseError(line, f"{comp_id}: 'links' must be a list of doc_id strings")
    image_ref = raw.get("image_ref")
    if image_ref is not None and not isinstance(image_ref, str):
        raise CorpusParseError(line, f"{comp_id}: 'image_ref' must be a string")

    present = _PAYLOAD_KEYS & set(raw)
    allowed = {
        Modality.PARAGRAPH: {"text"},
        Modality.TABLE: {"rows"},
        Modality.IMAGE: {"objects", "caption"},
    }[modality]
    if present - allowed:
        raise CorpusValidationError(f"{comp_id}: {modality.value} carries unexpected payload {sorted(present - allowed)}")

    if modality is Modality.PARAGRAPH:
        if "text" not in raw:
            raise CorpusValidationError(f"{comp_id}: paragraph needs 'text'")
        text = raw["text"]
        if not isinstance(text, str):
            raise CorpusParseError(line, f"{comp_id}: 'text' must be a string")
        return Component(comp_id=comp_id, modality=modality, text=text, links=tuple(links), image_ref=image_ref)

    if modality is Modality.TABLE:
        if "rows" not in raw:
            raise CorpusValidationError(f"{comp_id}: table needs 'rows'")
        rows = raw["rows"]
        if not isinstance(rows, list) or not all(isinstance(r, list) for r in rows):
            raise CorpusParseError(line, f"{comp_id}: 'rows' must be a list of lists")
        parsed_rows = tuple(tuple(_cell(c, line, comp_id) for c in row) for row in rows)
        return Component(comp_id=comp_id, modality=modality, rows=parsed_rows, links=tuple(links), image_ref=image_ref)

    caption = raw.get("caption", "")
    if not isinstance(caption, str):
        raise CorpusParseError(line, f"{comp_id}: 'caption' must be a string")
    objects = _parse_objects(raw.get("objects", []), line, comp_id)
    return Component(comp_id=comp_id, modality=modality, text=caption, objects=objects,
                     links=tuple(links), image_ref=image_ref)


def parse_document(record: Any, line: int = 1) -> Document:
    """Build one Document from a decoded record"""
    if not isinstance(record, dict):
        raise CorpusParseError(line, "record must be an object")
    doc_id = _require(record, "doc_id", str, line, "record")
    title = record.get("title", "")
    if not isinstance(title, str):
        raise CorpusParseError(line, f"{doc_id}: 'title' must be a string")
    raw_components = _require(record, "components", list, line, doc_id)
    components = tuple(_parse_component(c, doc_id, i, line) for i, c in enumerate(raw_components))
    try:
        return Document(doc_id=doc_id, title=title, components=components)
    except CorpusValidationError as e:
        raise CorpusValidationError(f"line {line}: {e}") from e


def parse_corpus(lines: Iterable[str]) -> Corpus:
    """
    Parse a corpus stream, one JSON document record per line

    Args:
        lines: Iterable of text lines (an open file works)

    Returns:
        Validated Corpus with document and component order preserved
    """
    documents: List[Document] = []
    seen: Set[str] = set()
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise CorpusParseError(line_no, f"invalid JSON: {e.msg}") from e
        document = parse_document(record, line_no)
        if document.doc_id in seen:
            raise CorpusValidationError(f"line {line_no}: duplicate doc_id {document.doc_id!r}")
        seen.add(document.doc_id)
        documents.append(document)
    return Corpus(documents=tuple(documents))


def load_corpus(path: Union[str, Path]) -> Corpus:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Corpus file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        corpus = parse_corpus(f)
    logger.info(f"Loaded corpus {path}: {len(corpus)} documents, {corpus.num_components} components")
    return corpus


def component_record(component: Component) -> Dict[str, Any]:
    record: Dict[str, Any] = {"type": component.modality.value}
    if component.modality is Modality.PARAGRAPH:
        record["text"] = component.text
    elif component.modality is Modality.TABLE:
        record["rows"] = [list(row) for row in component.rows]
    else:
        if component.caption:
            record["caption"] = component.caption
        record["objects"] = [{"label": o.label, "bbox": list(o.bbox)} for o in component.objects]
    if component.links:
        record["links"] = list(component.links)
    if component.image_ref is not None:
        record["image_ref"] = component.image_ref
    return record


def document_record(document: Document) -> Dict[str, Any]:
    return {
        "doc_id": document.doc_id,
        "title": document.title,
        "components": [component_record(c) for c in document.components],
    }


def serialize_corpus(corpus: Corpus) -> Iterator[str]:
    """Inverse of parse_corpus: one JSON line per document"""
    for document in corpus.documents:
        yield json.dumps(document_record(document), ensure_ascii=False)


def write_corpus(corpus: Corpus, path: Union[str, Path]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for line in serialize_corpus(corpus):
            f.write(line + "\n")


def corpus_digest(corpus: Corpus) -> str:
    digest = hashlib.sha256()
    for line in serialize_corpus(corpus):
        digest.update(line.encode("utf-8"))
        digest.update(b"\n")
    return digest.hexdigest()


def resolve_links(corpus: Corpus) -> LinkMapping:
    """
    Keep only links whose target document exists

    Dangling targets are dropped and counted; self-document links are retained
    here and skipped at edge generation.
    """
    pairs = set()
    dropped = 0
    for component in corpus.components():
        for target in component.links:
            if target in corpus:
                pairs.add((component.comp_id, target))
            else:
                dropped += 1
                logger.debug(f"Dropping dangling link {component.comp_id} -> {target}")
    if dropped:
        logger.warning(f"Dropped {dropped} dangling link(s) while resolving {len(pairs) + dropped} declared")
    return LinkMapping(pairs=frozenset(pairs), dropped=dropped)
