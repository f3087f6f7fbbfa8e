import json

import pytest

from src.models.corpus import Component, Modality, ObjectAnnotation, SubKind
from src.services.segmenter_service import extract_objects, segment_table, split_sentences, subcomponents
from src.utils.errors import CorpusValidationError


def _cases(fixtures_dir):
    with open(fixtures_dir / "sentences.json", encoding="utf-8") as f:
        return json.load(f)


def test_sentence_fixture(fixtures_dir):
    cases = _cases(fixtures_dir)
    assert sum(len(case["sentences"]) for case in cases) == 30
    for case in cases:
        assert split_sentences(case["text"]) == case["sentences"]


def test_sentences_reconstruct_text(fixtures_dir):
    for case in _cases(fixtures_dir):
        sentences = split_sentences(case["text"])
        assert all(s for s in sentences)
        assert " ".join(sentences).split() == case["text"].split()


@pytest.mark.parametrize("text, expected", [
    ("The Taj Mahal has four minarets. It was commissioned by Shah Jahan.",
     ["The Taj Mahal has four minarets.", "It was commissioned by Shah Jahan."]),
    ("No terminator here", ["No terminator here"]),
    ("Dr. Smith arrived. He left.", ["Dr. Smith arrived.", "He left."]),
    ("The answer is no. They left.", ["The answer is no.", "They left."]),
    ("He lived on Main st. It was quiet.", ["He lived on Main st.", "It was quiet."]),
    ("Platform No. 9 is closed. Use No. 4 instead.", ["Platform No. 9 is closed.", "Use No. 4 instead."]),
    ("No. They refused.", ["No.", "They refused."]),
    ("Acme Co. Ltd. shipped it. St. Louis paid.", ["Acme Co. Ltd. shipped it.", "St. Louis paid."]),
])
def test_split_sentences(text, expected):
    assert split_sentences(text) == expected


def test_segment_table_renders_header_and_row():
    rows = [["Deployment", "Personnel"], ["Kosovo", "1"], ["Afghanistan", "29"]]
    segments = segment_table(rows, "t/0")
    assert [s.content for s in segments] == ["Deployment: Kosovo | Personnel: 1", "Deployment: Afghanistan | Personnel: 29"]
    assert [s.sub_id for s in segments] == ["t/0/0", "t/0/1"]
    assert all(s.kind is SubKind.ROW_SEGMENT for s in segments)


def test_segment_table_header_only():
    assert segment_table([["a", "b"]], "t/0") == []


def test_segment_table_lithuanian_operations():
    header = ["Deployment", "Organization", "Operation", "Personnel"]
    data = [
        ["Somalia", "EU", "Operation Atalanta", "15"],
        ["Mali", "EU", "EUTM Mali", "2"],
        ["Afghanistan", "NATO", "Operation Resolute Support", "29"],
        ["Libya", "EU", "EU Navfor Med", "3"],
        ["Mali", "UN", "MINUSMA", "39"],
        ["Iraq", "CJTF", "Operation Inherent Resolve", "6"],
        ["Central African Republic", "EU", "EUFOR RCA", "1"],
        ["Kosovo", "NATO", "KFOR", "1"],
        ["Ukraine", "", "Training mission", "40"],
    ]
    assert len(segment_table([header] + data, "lt/3")) == 9


def test_segment_table_arity_mismatch_names_row():
    with pytest.raises(CorpusValidationError, match="row 2"):
        segment_table([["a", "b"], ["1", "2"], ["3"]], "t/0")


def _image(objects):
    return Component(comp_id="img/0", modality=Modality.IMAGE, text="caption", objects=tuple(objects))


def test_extract_objects_keeps_order_and_duplicates():
    image = _image([
        ObjectAnnotation("minaret", (0, 0, 10, 40)),
        ObjectAnnotation("dome", (12, 0, 30, 25)),
        ObjectAnnotation("minaret", (40, 0, 50, 40)),
    ])
    subs = extract_objects(image)
    assert [s.content for s in subs] == ["minaret", "dome", "minaret"]
    assert [s.sub_id for s in subs] == ["img/0/0", "img/0/1", "img/0/2"]


def test_extract_objects_empty():
    assert extract_objects(_image([])) == []


def test_extract_objects_requires_image():
    paragraph = Component(comp_id="p/0", modality=Modality.PARAGRAPH, text="Hi.")
    with pytest.raises(CorpusValidationError):
        extract_objects(paragraph)


def test_subcomponents_dispatch(fixture_corpus):
    a0 = subcomponents(fixture_corpus.component("A/0"))
    assert [s.kind for s in a0] == [SubKind.SENTENCE, SubKind.SENTENCE]
    assert a0[1].content == "It was commissioned by Shah Jahan."
    a1 = subcomponents(fixture_corpus.component("A/1"))
    assert [s.kind for s in a1] == [SubKind.OBJECT, SubKind.OBJECT]
    table = Component(comp_id="t/0", modality=Modality.TABLE, rows=(("h",), ("1",), ("2",), ("3",)))
    assert len(subcomponents(table)) == 3
    assert subcomponents(_image([])) == []
