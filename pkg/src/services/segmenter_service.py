"""
Segmenter Service
Split components into modality-specific subcomponents
"""

import re
from typing import List, Sequence

from src.models.corpus import Component, Modality, SubKind, Subcomponent
from src.utils.errors import CorpusValidationError

ABBREVIATIONS = frozenset({
    "dr", "mr", "mrs", "ms", "prof", "sr", "jr", "st", "mt", "ft",
    "gen", "col", "capt", "lt", "sgt", "gov", "sen", "rep", "rev",
    "vs", "etc", "e.g", "i.e", "no", "inc", "ltd", "co", "corp",
    "jan", "feb", "aug", "sept", "oct", "nov", "dec", "approx", "dept",
})
# also plain words, so only the capitalized form counts ("St. Louis")
CAPITALIZED_ONLY = frozenset({"st", "co", "no", "mt", "ft", "gen", "col", "sen", "rep", "rev", "dec"})
# only an abbreviation before a number ("No. 5")
NUMBER_PREFIXES = frozenset({"no"})

# terminator run, optional closing quote/bracket, whitespace, then an uppercase letter or digit
_BOUNDARY = re.compile(r"([.!?]+)([\"'”’)\]]*)\s+(?=[\"'“‘(\[]?[A-Z0-9])")
_WORD_BEFORE = re.compile(r"([A-Za-z][A-Za-z.]*)$")


def _is_abbreviation(text: str, end: int, following: str) -> bool:
    match = _WORD_BEFORE.search(text, 0, end)
    if match is None:
        return False
    original = match.group(1).rstrip(".")
    word = original.lower()
    # single initials ("J. K. Rowling") and dotted acronyms ("U.S.")
    if len(word) == 1 or ("." in word and all(len(part) == 1 for part in word.split("."))):
        return True
    if word not in ABBREVIATIONS:
        return False
    if word in CAPITALIZED_ONLY and not original[0].isupper():
        return False
    if word in NUMBER_PREFIXES and not following[:1].isdigit():
        return False
    return True


def split_sentences(text: str) -> List[str]:
    """
    Rule-based sentence splitter

    Args:
        text: Paragraph body

    Returns:
        Non-empty sentences in order; text without a terminator is one sentence
    """
    sentences = []
    start = 0
    for match in _BOUNDARY.finditer(text):
        terminator_start = match.start(1)
        if match.group(1) == "." and _is_abbreviation(text, terminator_start, text[match.end():]):
            continue
        sentence = text[start:match.end(2)].strip()
        if sentence:
            sentences.append(sentence)
        start = match.end()
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def render_row(header: Sequence[str], row: Sequence[str]) -> str:
    return " | ".join(f"{h}: {v}" for h, v in zip(header, row))


def segment_table(rows: Sequence[Sequence[str]], parent: str) -> List[Subcomponent]:
    """
    One header+row segment per data row

    Args:
        rows: rows[0] is the header
        parent: comp_id owning the table

    Returns:
        row_segment subcomponents rendered ``h1: v1 | h2: v2 | ...``
    """
    if not rows:
        raise CorpusValidationError(f"{parent}: table needs at least a header row")
    header = rows[0]
    segments = []
    for index, row in enumerate(rows[1:], start=1):
        if len(row) != len(header):
            raise CorpusValidationError(
                f"{parent}: row {index} has {len(row)} cells but the header has {len(header)}"
            )
        segments.append(Subcomponent(
            sub_id=f"{parent}/{index - 1}",
            parent=parent,
            kind=SubKind.ROW_SEGMENT,
            content=render_row(header, row),
        ))
    return segments


def extract_objects(component: Component) -> List[Subcomponent]:
    """One object subcomponent per annotation, label as content"""
    if component.modality is not Modality.IMAGE:
        raise CorpusValidationError(f"{component.comp_id}: object extraction needs an image component")
    return [
        Subcomponent(sub_id=f"{component.comp_id}/{k}", parent=component.comp_id,
                     kind=SubKind.OBJECT, content=obj.label)
        for k, obj in enumerate(component.objects or ())
    ]


def subcomponents(component: Component) -> List[Subcomponent]:
    """Dispatch to the per-modality segmenter"""
    if component.modality is Modality.PARAGRAPH:
        return [
            Subcomponent(sub_id=f"{component.comp_id}/{k}", parent=component.comp_id,
                         kind=SubKind.SENTENCE, content=sentence)
            for k, sentence in enumerate(split_sentences(component.text))
        ]
    if component.modality is Modality.TABLE:
        return segment_table(component.rows, component.comp_id)
    return extract_objects(component)
