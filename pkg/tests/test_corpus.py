import json

import pytest

from src.models.corpus import Modality, parse_comp_id
from src.services.corpus_service import corpus_digest, parse_corpus, resolve_links, serialize_corpus, write_corpus
from src.utils.errors import CorpusParseError, CorpusValidationError, UnknownNodeError


def _line(record) -> str:
    return json.dumps(record)


def test_fixture_corpus_parses(fixture_corpus):
    assert [d.doc_id for d in fixture_corpus.documents] == ["A", "B"]
    assert fixture_corpus.num_components == 3
    a1 = fixture_corpus.component("A/1")
    assert a1.modality is Modality.IMAGE
    assert [o.label for o in a1.objects] == ["minaret", "dome"]
    assert a1.caption == "Taj Mahal photograph"
    assert fixture_corpus.component("B/0").links == ("A",)


def test_component_ids_follow_position():
    corpus = parse_corpus([_line({"doc_id": "d", "components": [
        {"type": "paragraph", "text": "One."},
        {"type": "table", "rows": [["h"], ["v"]]},
    ]})])
    assert [c.comp_id for c in corpus.components()] == ["d/0", "d/1"]
    assert parse_comp_id("d/1") == ("d", 1)


def test_blank_lines_are_skipped():
    corpus = parse_corpus(["", _line({"doc_id": "d", "components": [{"type": "paragraph", "text": "x"}]}), "  "])
    assert len(corpus) == 1


def test_invalid_json_reports_line():
    with pytest.raises(CorpusParseError) as info:
        parse_corpus([_line({"doc_id": "d", "components": [{"type": "paragraph", "text": "x"}]}), "{not json"])
    assert info.value.line == 2


def test_duplicate_doc_id_rejected():
    record = _line({"doc_id": "d", "components": [{"type": "paragraph", "text": "x"}]})
    with pytest.raises(CorpusValidationError, match="duplicate"):
        parse_corpus([record, record])


@pytest.mark.parametrize("component", [
    {"type": "paragraph", "text": "   "},
    {"type": "paragraph", "text": "x", "rows": [["h"]]},
    {"type": "table", "rows": []},
    {"type": "image", "objects": [{"label": "tower", "bbox": [5, 0, 1, 10]}]},
    {"type": "image", "objects": [{"label": "", "bbox": [0, 0, 1, 1]}]},
])
def test_invalid_payloads_rejected(component):
    with pytest.raises(CorpusValidationError):
        parse_corpus([_line({"doc_id": "d", "components": [component]})])


@pytest.mark.parametrize("record", [
    {"components": [{"type": "paragraph", "text": "x"}]},
    {"doc_id": "d", "components": [{"type": "video"}]},
    {"doc_id": "d", "components": [{"type": "image", "objects": [{"label": "a", "bbox": [0, 0, 1]}]}]},
    {"doc_id": "d", "components": [{"type": "paragraph", "text": "x", "links": "e"}]},
])
def test_malformed_records_rejected(record):
    with pytest.raises(CorpusParseError):
        parse_corpus([_line(record)])


def test_doc_id_with_slash_rejected():
    with pytest.raises(CorpusValidationError):
        parse_corpus([_line({"doc_id": "a/b", "components": [{"type": "paragraph", "text": "x"}]})])


def test_numeric_cells_become_strings():
    corpus = parse_corpus([_line({"doc_id": "t", "components": [
        {"type": "table", "rows": [["Deployment", "Personnel"], ["Kosovo", 1]]},
    ]})])
    assert corpus.component("t/0").rows[1] == ("Kosovo", "1")


def test_resolve_links_drops_dangling():
    corpus = parse_corpus([
        _line({"doc_id": "a", "components": [{"type": "paragraph", "text": "x", "links": ["b", "zzz", "a"]}]}),
        _line({"doc_id": "b", "components": [{"type": "paragraph", "text": "y"}]}),
    ])
    links = resolve_links(corpus)
    assert links.pairs == frozenset({("a/0", "b"), ("a/0", "a")})
    assert links.dropped == 1


def test_unknown_component_lookup(fixture_corpus):
    with pytest.raises(UnknownNodeError):
        fixture_corpus.component("C/0")


def test_write_then_parse_preserves_corpus(fixture_corpus, tmp_path):
    path = tmp_path / "corpus.jsonl"
    write_corpus(fixture_corpus, path)
    with open(path, encoding="utf-8") as f:
        reparsed = parse_corpus(f)
    assert reparsed.documents == fixture_corpus.documents
    assert corpus_digest(reparsed) == corpus_digest(fixture_corpus)
    assert len(list(serialize_corpus(reparsed))) == 2
